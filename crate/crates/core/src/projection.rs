//! Exact Euclidean projections onto closed convex sets with closed forms.

use crate::error::{Error, Result};
use crate::stats::{dist, dot, norm};

/// Membership is tested as `‖P[x] − x‖ ≤ MEMBERSHIP_TOL`.
pub const MEMBERSHIP_TOL: f64 = 1e-12;
/// Slack allowed on the projection inequalities.
pub const INEQUALITY_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSet {
    WholeSpace { dim: usize },
    Ball { center: Vec<f64>, radius: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

impl ConstraintSet {
    pub fn whole_space(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSet("dimension must be positive".into()));
        }
        Ok(ConstraintSet::WholeSpace { dim })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::InvalidSet("dimension must be positive".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidSet(format!("ball radius {radius} must be positive")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidSet("ball center must be finite".into()));
        }
        Ok(ConstraintSet::Ball { center, radius })
    }

    pub fn centered_ball(dim: usize, radius: f64) -> Result<Self> {
        Self::ball(vec![0.0; dim], radius)
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidSet("dimension must be positive".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (l, u) in lower.iter().zip(&upper) {
            if l.is_nan() || u.is_nan() || l > u || *l == f64::INFINITY || *u == f64::NEG_INFINITY {
                return Err(Error::InvalidSet(format!("box bounds [{l}, {u}] are empty")));
            }
        }
        Ok(ConstraintSet::Box { lower, upper })
    }

    /// Scalar interval `[lower, upper]`.
    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        Self::boxed(vec![lower], vec![upper])
    }

    pub fn dim(&self) -> usize {
        match self {
            ConstraintSet::WholeSpace { dim } => *dim,
            ConstraintSet::Ball { center, .. } => center.len(),
            ConstraintSet::Box { lower, .. } => lower.len(),
        }
    }

    /// A canonical interior point: ball center, box midpoint (clamped for
    /// unbounded sides) or the origin.
    pub fn center(&self) -> Vec<f64> {
        match self {
            ConstraintSet::WholeSpace { dim } => vec![0.0; *dim],
            ConstraintSet::Ball { center, .. } => center.clone(),
            ConstraintSet::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(&l, &u)| match (l.is_finite(), u.is_finite()) {
                    (true, true) => 0.5 * (l + u),
                    (true, false) => l,
                    (false, true) => u,
                    (false, false) => 0.0,
                })
                .collect(),
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("projection input".into()));
        }
        Ok(())
    }

    /// Projects `x` in place.
    pub fn project_in_place(&self, x: &mut [f64]) -> Result<()> {
        self.check_input(x)?;
        match self {
            ConstraintSet::WholeSpace { .. } => {}
            ConstraintSet::Ball { center, radius } => {
                let d = dist(x, center);
                if d > *radius {
                    let scale = radius / d;
                    for (xi, ci) in x.iter_mut().zip(center) {
                        *xi = ci + scale * (*xi - ci);
                    }
                }
            }
            ConstraintSet::Box { lower, upper } => {
                for ((xi, l), u) in x.iter_mut().zip(lower).zip(upper) {
                    *xi = xi.clamp(*l, *u);
                }
            }
        }
        Ok(())
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = x.to_vec();
        self.project_in_place(&mut out)?;
        Ok(out)
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        Ok(dist(&self.project(x)?, x) <= MEMBERSHIP_TOL)
    }
}

/// Evaluates both projection inequalities for `x` and a point `y` of the
/// set:
///
/// * (a) `⟨y − P[x], x − P[x]⟩ ≤ 0`
/// * (b) `‖P[x] − y‖² ≤ ‖x − y‖² − ‖P[x] − x‖²`
///
/// each with [`INEQUALITY_SLACK`].
pub fn check_projection_inequalities(
    set: &ConstraintSet,
    x: &[f64],
    y: &[f64],
) -> Result<(bool, bool)> {
    if !set.contains(y)? {
        return Err(Error::NotInSet);
    }
    let px = set.project(x)?;
    let y_px: Vec<f64> = y.iter().zip(&px).map(|(a, b)| a - b).collect();
    let x_px: Vec<f64> = x.iter().zip(&px).map(|(a, b)| a - b).collect();
    let a_ok = dot(&y_px, &x_px) <= INEQUALITY_SLACK;
    let lhs = norm(&y_px).powi(2);
    let rhs = dist(x, y).powi(2) - norm(&x_px).powi(2);
    let b_ok = lhs <= rhs + INEQUALITY_SLACK;
    Ok((a_ok, b_ok))
}
