//! Local objectives with bounded subgradients, step-size schedules and a
//! centralized reference solver used to pin down `f*`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::projection::ConstraintSet;
use crate::stats::{dist, dot, norm};

/// One labelled training example; `label` is `-1.0` or `+1.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: f64,
}

/// Objective private to one agent.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalObjective {
    /// `Σ_j ln(1 + exp(−y_j c_jᵀx))`.
    Logistic { samples: Vec<Sample> },
    /// `Σ_j ‖x − a_j‖`. With no anchors this is the zero function.
    SumOfDistances { anchors: Vec<Vec<f64>> },
}

impl LocalObjective {
    pub fn zero() -> Self {
        LocalObjective::SumOfDistances {
            anchors: Vec::new(),
        }
    }

    /// Global bound on the norm of any subgradient this oracle returns.
    pub fn subgradient_bound(&self) -> f64 {
        match self {
            LocalObjective::Logistic { samples } => samples.iter().map(|s| norm(&s.features)).sum(),
            LocalObjective::SumOfDistances { anchors } => anchors.len() as f64,
        }
    }

    fn check_dim(&self, p: usize) -> Result<()> {
        let dims: Box<dyn Iterator<Item = (usize, bool)>> = match self {
            LocalObjective::Logistic { samples } => Box::new(samples.iter().map(|s| {
                let finite = s.features.iter().all(|v| v.is_finite());
                (s.features.len(), finite && (s.label == 1.0 || s.label == -1.0))
            })),
            LocalObjective::SumOfDistances { anchors } => Box::new(
                anchors
                    .iter()
                    .map(|a| (a.len(), a.iter().all(|v| v.is_finite()))),
            ),
        };
        for (len, valid) in dims {
            if len != p {
                return Err(Error::DimensionMismatch { expected: p, got: len });
            }
            if !valid {
                return Err(Error::InvalidObjective(
                    "non-finite data or label outside {-1, +1}".into(),
                ));
            }
        }
        Ok(())
    }

    fn value(&self, x: &[f64]) -> f64 {
        match self {
            LocalObjective::Logistic { samples } => samples
                .iter()
                .map(|s| softplus(-s.label * dot(&s.features, x)))
                .sum(),
            LocalObjective::SumOfDistances { anchors } => anchors.iter().map(|a| dist(x, a)).sum(),
        }
    }

    /// Adds one subgradient at `x` into `out`.
    fn accumulate_subgradient(&self, x: &[f64], out: &mut [f64]) {
        match self {
            LocalObjective::Logistic { samples } => {
                for s in samples {
                    let w = -s.label * sigmoid(-s.label * dot(&s.features, x));
                    for (o, c) in out.iter_mut().zip(&s.features) {
                        *o += w * c;
                    }
                }
            }
            LocalObjective::SumOfDistances { anchors } => {
                for a in anchors {
                    let d = dist(x, a);
                    // 0 is a valid subgradient at the kink x = a.
                    if d > 0.0 {
                        for ((o, xi), ai) in out.iter_mut().zip(x).zip(a) {
                            *o += (xi - ai) / d;
                        }
                    }
                }
            }
        }
    }
}

/// `ln(1 + e^u)` without overflow.
pub fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

/// `1 / (1 + e^{−u})` without overflow.
pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Per-agent objectives over `R^p` with a certified subgradient bound
/// `B = max_i B_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec {
    p: usize,
    locals: Vec<LocalObjective>,
    bound: f64,
}

impl ObjectiveSpec {
    pub fn new(p: usize, locals: Vec<LocalObjective>) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidObjective("dimension must be positive".into()));
        }
        if locals.is_empty() {
            return Err(Error::InvalidObjective("need at least one agent".into()));
        }
        for local in &locals {
            local.check_dim(p)?;
        }
        let bound = locals
            .iter()
            .map(LocalObjective::subgradient_bound)
            .fold(0.0, f64::max);
        Ok(ObjectiveSpec { p, locals, bound })
    }

    /// Every agent holds the zero function.
    pub fn zero(n: usize, p: usize) -> Result<Self> {
        Self::new(p, vec![LocalObjective::zero(); n])
    }

    /// Seeded synthetic logistic data: standard normal features, labels from
    /// a planted standard normal separator, each label flipped with
    /// probability `flip_prob`.
    pub fn synthetic_logistic(
        n: usize,
        p: usize,
        samples_per_agent: usize,
        flip_prob: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&flip_prob) {
            return Err(Error::InvalidObjective(format!(
                "flip probability {flip_prob} not in [0, 1]"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let separator: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let locals = (0..n)
            .map(|_| {
                let samples = (0..samples_per_agent)
                    .map(|_| {
                        let features: Vec<f64> =
                            (0..p).map(|_| rng.sample(StandardNormal)).collect();
                        let mut label = if dot(&features, &separator) >= 0.0 { 1.0 } else { -1.0 };
                        if rng.random::<f64>() < flip_prob {
                            label = -label;
                        }
                        Sample { features, label }
                    })
                    .collect();
                LocalObjective::Logistic { samples }
            })
            .collect();
        Self::new(p, locals)
    }

    pub fn n(&self) -> usize {
        self.locals.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn locals(&self) -> &[LocalObjective] {
        &self.locals
    }

    fn check(&self, i: usize, x: &[f64]) -> Result<()> {
        if i >= self.n() {
            return Err(Error::AgentOutOfRange { index: i, n: self.n() });
        }
        if x.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("objective argument".into()));
        }
        Ok(())
    }

    /// `f_i(x)`.
    pub fn value(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.check(i, x)?;
        Ok(self.locals[i].value(x))
    }

    /// `f(x) = Σ_i f_i(x)`, summed in agent order.
    pub fn global_value(&self, x: &[f64]) -> Result<f64> {
        self.check(0, x)?;
        Ok(self.global_value_unchecked(x))
    }

    pub(crate) fn global_value_unchecked(&self, x: &[f64]) -> f64 {
        self.locals.iter().map(|l| l.value(x)).sum()
    }

    pub fn subgradient(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.p];
        self.subgradient_into(i, x, &mut out)?;
        Ok(out)
    }

    /// Writes a subgradient of `f_i` at `x` into `out`.
    pub fn subgradient_into(&self, i: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check(i, x)?;
        out.fill(0.0);
        self.locals[i].accumulate_subgradient(x, out);
        Ok(())
    }

    /// A subgradient of the global objective.
    pub fn global_subgradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(0, x)?;
        let mut out = vec![0.0; self.p];
        for local in &self.locals {
            local.accumulate_subgradient(x, &mut out);
        }
        Ok(out)
    }

    /// Reads logistic data from CSV. Columns are `label, f_1, …, f_p` with
    /// an optional `agent` column; without one, rows go to agents
    /// round-robin.
    pub fn logistic_from_csv(path: impl AsRef<Path>, n: usize) -> Result<Self> {
        let path = path.as_ref();
        let data_err = |message: String| Error::Data {
            path: path.to_path_buf(),
            message,
        };
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let headers = reader.headers()?.clone();
        let agent_col = headers.iter().position(|h| h == "agent");
        let label_col = headers
            .iter()
            .position(|h| h == "label")
            .ok_or_else(|| data_err("missing `label` column".into()))?;
        let feature_cols: Vec<usize> = (0..headers.len())
            .filter(|&c| Some(c) != agent_col && c != label_col)
            .collect();
        let p = feature_cols.len();
        let mut per_agent: Vec<Vec<Sample>> = vec![Vec::new(); n];
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let num = |c: usize| -> Result<f64> {
                record[c]
                    .parse::<f64>()
                    .map_err(|e| data_err(format!("row {}: column {c}: {e}", row + 1)))
            };
            let agent = match agent_col {
                Some(c) => record[c]
                    .parse::<usize>()
                    .map_err(|e| data_err(format!("row {}: agent: {e}", row + 1)))?,
                None => row % n,
            };
            if agent >= n {
                return Err(Error::AgentOutOfRange { index: agent, n });
            }
            let features = feature_cols.iter().map(|&c| num(c)).collect::<Result<_>>()?;
            per_agent[agent].push(Sample {
                features,
                label: num(label_col)?,
            });
        }
        let locals = per_agent
            .into_iter()
            .map(|samples| LocalObjective::Logistic { samples })
            .collect();
        Self::new(p, locals)
    }

    /// Reads anchor points from CSV with columns `agent, a_1, …, a_p`.
    /// Agents without anchors get the zero objective.
    pub fn anchors_from_csv(path: impl AsRef<Path>, n: usize) -> Result<Self> {
        let path = path.as_ref();
        let data_err = |message: String| Error::Data {
            path: path.to_path_buf(),
            message,
        };
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let headers = reader.headers()?.clone();
        let agent_col = headers
            .iter()
            .position(|h| h == "agent")
            .ok_or_else(|| data_err("missing `agent` column".into()))?;
        let coord_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != agent_col).collect();
        let mut anchors: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n];
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let agent = record[agent_col]
                .parse::<usize>()
                .map_err(|e| data_err(format!("row {}: agent: {e}", row + 1)))?;
            if agent >= n {
                return Err(Error::AgentOutOfRange { index: agent, n });
            }
            let point = coord_cols
                .iter()
                .map(|&c| {
                    record[c]
                        .parse::<f64>()
                        .map_err(|e| data_err(format!("row {}: column {c}: {e}", row + 1)))
                })
                .collect::<Result<_>>()?;
            anchors[agent].push(point);
        }
        let locals = anchors
            .into_iter()
            .map(|anchors| LocalObjective::SumOfDistances { anchors })
            .collect();
        Self::new(coord_cols.len(), locals)
    }
}

/// `α_k = scale / √(k + 1)`, so `α_0 = scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    pub scale: f64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule { scale: 1.0 }
    }
}

impl StepSchedule {
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidObjective(format!(
                "step scale {scale} must be positive"
            )));
        }
        Ok(StepSchedule { scale })
    }

    pub fn alpha(&self, k: usize) -> f64 {
        self.scale / ((k + 1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceOptimum {
    pub x_star: Vec<f64>,
    pub f_star: f64,
}

/// Centralized projected subgradient descent on `f` over `set`.
///
/// Starts from `P[center + ξ]` with `ξ` standard normal drawn from `seed`,
/// steps with `α_k = a/√(k+1)` where `a` is the set's radius scale divided
/// by the subgradient norm at the start, and returns the better of the best
/// iterate and the step-weighted iterate average.
pub fn reference_optimum(
    spec: &ObjectiveSpec,
    set: &ConstraintSet,
    budget: usize,
    seed: u64,
) -> Result<ReferenceOptimum> {
    if budget == 0 {
        return Err(Error::EmptyBudget);
    }
    if set.dim() != spec.p() {
        return Err(Error::DimensionMismatch {
            expected: spec.p(),
            got: set.dim(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = set
        .center()
        .into_iter()
        .map(|c| c + rng.sample::<f64, _>(StandardNormal))
        .collect();
    set.project_in_place(&mut x)?;

    let radius = match set {
        ConstraintSet::Ball { radius, .. } => *radius,
        ConstraintSet::Box { lower, upper } => lower
            .iter()
            .zip(upper)
            .map(|(l, u)| 0.5 * (u - l))
            .filter(|w| w.is_finite() && *w > 0.0)
            .fold(0.0, f64::max),
        ConstraintSet::WholeSpace { .. } => 0.0,
    };
    let radius = if radius > 0.0 { radius } else { 1.0 };
    let g0 = norm(&spec.global_subgradient(&x)?);
    let sched = StepSchedule::new(radius / g0.max(1e-12))?;

    let mut best_x = x.clone();
    let mut best_f = spec.global_value_unchecked(&x);
    let mut avg = vec![0.0; x.len()];
    let mut weight = 0.0;
    for k in 0..budget {
        let g = spec.global_subgradient(&x)?;
        let alpha = sched.alpha(k);
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= alpha * gi;
        }
        set.project_in_place(&mut x)?;
        let f = spec.global_value_unchecked(&x);
        if !f.is_finite() {
            return Err(Error::NonFinite(format!("reference objective at step {k}")));
        }
        if f < best_f {
            best_f = f;
            best_x.copy_from_slice(&x);
        }
        weight += alpha;
        for (a, xi) in avg.iter_mut().zip(&x) {
            *a += alpha * xi;
        }
    }
    for a in avg.iter_mut() {
        *a /= weight;
    }
    set.project_in_place(&mut avg)?;
    let f_avg = spec.global_value_unchecked(&avg);
    if f_avg < best_f {
        best_f = f_avg;
        best_x = avg;
    }
    Ok(ReferenceOptimum {
        x_star: best_x,
        f_star: best_f,
    })
}

/// Minimizer of `Σ_j |x − a_j|` over `[lower, upper]`: the lower median of
/// the anchors clipped to the interval.
pub fn clipped_median(anchors: &[f64], lower: f64, upper: f64) -> Option<(f64, f64)> {
    if anchors.is_empty() || lower > upper {
        return None;
    }
    let mut sorted = anchors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[(sorted.len() - 1) / 2];
    let x = median.clamp(lower, upper);
    let f = anchors.iter().map(|a| (x - a).abs()).sum();
    Some((x, f))
}
