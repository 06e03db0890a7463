//! Mixing weights: row-stochastic `A`, column-stochastic `B` and the
//! augmented `2n × 2n` matrix
//!
//! ```text
//! M = [ A       εI    ]
//!     [ I - A   B - εI ]
//! ```
//!
//! Powers of `M` converge geometrically to `[[11ᵀ/n, 11ᵀ/n], [0, 0]]` when
//! `ε` is small enough. The helpers here measure that convergence; the
//! fitted constants are diagnostics only and never feed the solver.

use nalgebra::{DMatrix, Schur};

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::stats::fit_line;

/// Row/column sums must hit one this closely.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Limit errors at or below this are treated as converged and left out of
/// the geometric fit.
pub const FIT_FLOOR: f64 = 1e-13;

/// In-weights `a_ij = 1/|N_i^in|` and out-weights `b_ij = 1/|N_j^out|`.
pub fn build_weights(g: &DirectedGraph) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !g.is_strongly_connected() {
        return Err(Error::NotStronglyConnected);
    }
    let n = g.n();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, n);
    for i in 0..n {
        let ins = g.in_neighbors(i)?;
        let w = 1.0 / ins.len() as f64;
        for &j in ins {
            a[(i, j)] = w;
        }
        // Column j of B spreads node j's surplus over its out-neighbors.
        let outs = g.out_neighbors(i)?;
        let w = 1.0 / outs.len() as f64;
        for &dst in outs {
            b[(dst, i)] = w;
        }
    }
    Ok((a, b))
}

fn check_square(m: &DMatrix<f64>, name: &str) -> Result<usize> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::InvalidWeights(format!(
            "{name} must be square and nonempty, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidWeights(format!(
            "{name} must have finite nonnegative entries"
        )));
    }
    Ok(m.nrows())
}

fn check_stochastic(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<usize> {
    let n = check_square(a, "A")?;
    if check_square(b, "B")? != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.nrows(),
        });
    }
    for i in 0..n {
        let row: f64 = a.row(i).iter().sum();
        if (row - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidWeights(format!("row {i} of A sums to {row}")));
        }
        let col: f64 = b.column(i).iter().sum();
        if (col - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidWeights(format!("column {i} of B sums to {col}")));
        }
    }
    Ok(n)
}

fn min_diag(b: &DMatrix<f64>) -> f64 {
    b.diagonal().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Block assembly of `M`; requires `0 < ε ≤ min_i b_ii`.
pub fn assemble_m(a: &DMatrix<f64>, b: &DMatrix<f64>, epsilon: f64) -> Result<DMatrix<f64>> {
    let n = check_stochastic(a, b)?;
    let max = min_diag(b);
    if !(epsilon > 0.0 && epsilon <= max) {
        return Err(Error::EpsilonOutOfRange { epsilon, max });
    }
    Ok(assemble_unchecked(a, b, epsilon, n))
}

fn assemble_unchecked(a: &DMatrix<f64>, b: &DMatrix<f64>, epsilon: f64, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let delta = if i == j { 1.0 } else { 0.0 };
            m[(i, j)] = a[(i, j)];
            m[(i, n + j)] = epsilon * delta;
            m[(n + i, j)] = delta - a[(i, j)];
            m[(n + i, n + j)] = b[(i, j)] - epsilon * delta;
        }
    }
    m
}

/// How the surplus gain `ε` is chosen for a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonPolicy {
    Explicit(f64),
    /// `min(cap, 0.99 · min_i b_ii)`.
    CappedAuto { cap: f64 },
}

impl Default for EpsilonPolicy {
    fn default() -> Self {
        EpsilonPolicy::CappedAuto { cap: 1e-3 }
    }
}

impl EpsilonPolicy {
    pub fn resolve(&self, b: &DMatrix<f64>) -> Result<f64> {
        let max = min_diag(b);
        let eps = match *self {
            EpsilonPolicy::Explicit(e) => e,
            EpsilonPolicy::CappedAuto { cap } => {
                if cap.is_nan() || cap <= 0.0 {
                    return Err(Error::EpsilonOutOfRange { epsilon: cap, max });
                }
                cap.min(0.99 * max)
            }
        };
        if !(eps > 0.0 && eps <= max) {
            return Err(Error::EpsilonOutOfRange { epsilon: eps, max });
        }
        Ok(eps)
    }
}

/// The weight triple `(A, B, M)` for one graph and one `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurplusSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    epsilon: f64,
    m: DMatrix<f64>,
}

impl SurplusSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, epsilon: f64) -> Result<Self> {
        let m = assemble_m(&a, &b, epsilon)?;
        Ok(SurplusSystem { a, b, epsilon, m })
    }

    pub fn from_graph(g: &DirectedGraph, policy: EpsilonPolicy) -> Result<Self> {
        let (a, b) = build_weights(g)?;
        let epsilon = policy.resolve(&b)?;
        Self::new(a, b, epsilon)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn epsilon_upper_bound(&self) -> Result<f64> {
        epsilon_upper_bound(&self.a, &self.b)
    }
}

/// Eigenvalues of `M` at `ε = 0`, sorted by modulus descending with ties
/// broken by real part descending.
pub fn unperturbed_spectrum(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<Vec<nalgebra::Complex<f64>>> {
    check_stochastic(a, b)?;
    // Block lower-triangular at ε = 0: the spectrum is spec(A) ∪ spec(B).
    // Solving the blocks separately keeps eigenvalues shared by A and B
    // from turning into a defective pair.
    let mut eig = Vec::with_capacity(2 * a.nrows());
    for block in [a, b] {
        let schur =
            Schur::try_new(block.clone(), f64::EPSILON, 10_000).ok_or(Error::EigenFailure)?;
        eig.extend(schur.complex_eigenvalues().iter().copied());
    }
    if eig.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::EigenFailure);
    }
    eig.sort_by(|x, y| {
        y.norm()
            .total_cmp(&x.norm())
            .then_with(|| y.re.total_cmp(&x.re))
    });
    Ok(eig)
}

/// `Υ = ((1 - |λ₃|) / (20 + 8n))^n` with `λ₃` the third eigenvalue of `M`
/// at `ε = 0` in [`unperturbed_spectrum`] order.
///
/// Underflows to zero quickly as `n` grows; treat it as a reference value.
pub fn epsilon_upper_bound(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let n = a.nrows();
    if 2 * n < 3 {
        return Err(Error::TooFewEigenvalues(2 * n));
    }
    let eig = unperturbed_spectrum(a, b)?;
    let lambda3 = eig[2].norm();
    Ok(((1.0 - lambda3) / (20.0 + 8.0 * n as f64)).powi(n as i32))
}

/// `[[11ᵀ/n, 11ᵀ/n], [0, 0]]`.
pub fn limit_matrix(n: usize) -> DMatrix<f64> {
    let inv = 1.0 / n as f64;
    DMatrix::from_fn(2 * n, 2 * n, |i, _| if i < n { inv } else { 0.0 })
}

fn half_size(m: &DMatrix<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() || m.nrows() == 0 || !m.nrows().is_multiple_of(2) {
        return Err(Error::InvalidWeights(format!(
            "M must be 2n x 2n, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows() / 2)
}

/// Max-row-sum norm.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Iterates `M^k` for `k = 0, 1, …, k_max`, handing each power to `visit`.
pub fn for_each_power(
    m: &DMatrix<f64>,
    k_max: usize,
    mut visit: impl FnMut(usize, &DMatrix<f64>),
) -> Result<()> {
    let dim = m.nrows();
    let mut power = DMatrix::identity(dim, dim);
    let mut next = DMatrix::zeros(dim, dim);
    visit(0, &power);
    for k in 1..=k_max {
        m.mul_to(&power, &mut next);
        std::mem::swap(&mut power, &mut next);
        if power.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("M^{k}")));
        }
        visit(k, &power);
    }
    Ok(())
}

/// `‖M^k − limit‖_∞` for every `k` in `0..=k_max`.
pub fn limit_error_series(m: &DMatrix<f64>, k_max: usize) -> Result<Vec<f64>> {
    let n = half_size(m)?;
    let limit = limit_matrix(n);
    let mut out = Vec::with_capacity(k_max + 1);
    for_each_power(m, k_max, |_, p| out.push(inf_norm(&(p - &limit))))?;
    Ok(out)
}

pub fn matrix_limit_error(m: &DMatrix<f64>, k: usize) -> Result<f64> {
    Ok(*limit_error_series(m, k)?.last().expect("k + 1 entries"))
}

/// Largest absolute entry in the bottom `n` rows of `M^k`.
pub fn bottom_block_max(m: &DMatrix<f64>, k: usize) -> Result<f64> {
    let n = half_size(m)?;
    let mut out = 0.0;
    for_each_power(m, k, |kk, p| {
        if kk == k {
            out = p.rows(n, n).iter().map(|v| v.abs()).fold(0.0, f64::max);
        }
    })?;
    Ok(out)
}

/// Least-squares fit of `ln error_k ≈ ln Γ + k ln γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricFit {
    pub gamma: f64,
    pub big_gamma: f64,
    pub r_squared: f64,
    /// Number of `k` values that entered the fit.
    pub points: usize,
}

/// Fits the geometric envelope to `errors[k]` over `k ∈ [1, errors.len())`,
/// skipping values at or below [`FIT_FLOOR`].
pub fn fit_geometric(errors: &[f64]) -> Result<GeometricFit> {
    let (ks, logs): (Vec<f64>, Vec<f64>) = errors
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, &e)| e > FIT_FLOOR)
        .map(|(k, &e)| (k as f64, e.ln()))
        .unzip();
    let fit = fit_line(&ks, &logs)?;
    let gamma = fit.slope.exp();
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::NotContracting { gamma });
    }
    Ok(GeometricFit {
        gamma,
        big_gamma: fit.intercept.exp(),
        r_squared: fit.r_squared,
        points: ks.len(),
    })
}

pub fn estimate_gamma(m: &DMatrix<f64>, k_max: usize) -> Result<GeometricFit> {
    fit_geometric(&limit_error_series(m, k_max)?)
}
