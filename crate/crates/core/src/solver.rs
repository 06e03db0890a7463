//! Synchronous engine.
//!
//! One round, for every agent `i` reading only the round-`k` snapshot:
//!
//! ```text
//! x_i' = P[ Σ_j a_ij x_j + ε y_i − α_k ∇f_i(x_i) ]
//! y_i' = x_i − Σ_j a_ij x_j + Σ_j b_ij y_j − ε y_i
//! ```
//!
//! The same round can be written over the stacked state `z = (x, y)` as
//! `z' = M z + g`, where the perturbation `g_i = x_i' − Σ_j a_ij x_j − ε y_i`
//! for the first `n` rows and zero below. [`Ddps::step_compact`] evaluates
//! that form independently of [`Ddps::step`] so the two can be
//! cross-checked. All inner sums run over agents in ascending index order.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::oracle::{ObjectiveSpec, StepSchedule};
use crate::projection::ConstraintSet;
use crate::stats::{dist, norm};
use crate::weights::{EpsilonPolicy, SurplusSystem};

/// Exact header of the trace CSV.
pub const TRACE_HEADER: [&str; 9] = [
    "k",
    "agent",
    "x_residual",
    "consensus_x",
    "y_norm",
    "g_total",
    "f_zbar",
    "f_best",
    "gap",
];

/// Agent id used for network-level rows.
pub const NETWORK_ROW: i64 = -1;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub k: usize,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    /// `(1/n)(Σ_i x_i + Σ_i y_i)`.
    pub z_bar: Vec<f64>,
}

impl SolverState {
    pub fn zeros(n: usize, p: usize) -> Self {
        Self::from_parts(0, vec![vec![0.0; p]; n], vec![vec![0.0; p]; n])
    }

    /// All `x_i = c`, all `y_i = 0`.
    pub fn consensus(n: usize, c: &[f64]) -> Self {
        Self::from_parts(0, vec![c.to_vec(); n], vec![vec![0.0; c.len()]; n])
    }

    pub fn from_parts(k: usize, x: Vec<Vec<f64>>, y: Vec<Vec<f64>>) -> Self {
        let z_bar = accumulation(&x, &y);
        SolverState { k, x, y, z_bar }
    }

    /// Splits a stacked `(x_1..x_n, y_1..y_n)` vector list.
    pub fn from_stacked(k: usize, mut z: Vec<Vec<f64>>) -> Self {
        let y = z.split_off(z.len() / 2);
        Self::from_parts(k, z, y)
    }

    pub fn stacked(&self) -> Vec<Vec<f64>> {
        self.x.iter().chain(&self.y).cloned().collect()
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).flatten().all(|v| v.is_finite())
    }
}

fn accumulation(x: &[Vec<f64>], y: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len();
    let p = x.first().map_or(0, Vec::len);
    let mut z = vec![0.0; p];
    for v in x.iter().chain(y) {
        for (zi, vi) in z.iter_mut().zip(v) {
            *zi += vi;
        }
    }
    for zi in z.iter_mut() {
        *zi /= n as f64;
    }
    z
}

/// The solver bound to one weight system, constraint set, objective and
/// step schedule.
#[derive(Debug, Clone, Copy)]
pub struct Ddps<'a> {
    sys: &'a SurplusSystem,
    set: &'a ConstraintSet,
    spec: &'a ObjectiveSpec,
    sched: StepSchedule,
}

impl<'a> Ddps<'a> {
    pub fn new(
        sys: &'a SurplusSystem,
        set: &'a ConstraintSet,
        spec: &'a ObjectiveSpec,
        sched: StepSchedule,
    ) -> Result<Self> {
        if spec.n() != sys.n() {
            return Err(Error::DimensionMismatch {
                expected: sys.n(),
                got: spec.n(),
            });
        }
        if set.dim() != spec.p() {
            return Err(Error::DimensionMismatch {
                expected: spec.p(),
                got: set.dim(),
            });
        }
        Ok(Ddps {
            sys,
            set,
            spec,
            sched,
        })
    }

    pub fn system(&self) -> &SurplusSystem {
        self.sys
    }

    fn check_state(&self, x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<()> {
        let (n, p) = (self.sys.n(), self.spec.p());
        for block in [x, y] {
            if block.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: block.len(),
                });
            }
            if let Some(v) = block.iter().find(|v| v.len() != p) {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: v.len(),
                });
            }
        }
        Ok(())
    }

    /// `Σ_j a_ij x_j` for agent `i`.
    fn mix_in(&self, i: usize, x: &[Vec<f64>]) -> Vec<f64> {
        let a = self.sys.a();
        let mut out = vec![0.0; self.spec.p()];
        for (j, xj) in x.iter().enumerate() {
            let w = a[(i, j)];
            for (o, v) in out.iter_mut().zip(xj) {
                *o += w * v;
            }
        }
        out
    }

    /// Projected update for agent `i`; returns `(x_i', Σ_j a_ij x_j)`.
    fn projected_update(
        &self,
        i: usize,
        alpha: f64,
        x: &[Vec<f64>],
        y: &[Vec<f64>],
        grad: &mut [f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let eps = self.sys.epsilon();
        let mixed = self.mix_in(i, x);
        self.spec.subgradient_into(i, &x[i], grad)?;
        let mut next: Vec<f64> = mixed
            .iter()
            .zip(&y[i])
            .zip(grad.iter())
            .map(|((m, yi), g)| m + eps * yi - alpha * g)
            .collect();
        self.set.project_in_place(&mut next)?;
        Ok((next, mixed))
    }

    /// One round; also returns the perturbations `g_i^k`, `i < n`.
    pub fn step_with_perturbation(
        &self,
        state: &SolverState,
    ) -> Result<(SolverState, Vec<Vec<f64>>)> {
        self.check_state(&state.x, &state.y)?;
        let n = self.sys.n();
        let eps = self.sys.epsilon();
        let b = self.sys.b();
        let alpha = self.sched.alpha(state.k);
        let mut grad = vec![0.0; self.spec.p()];
        let mut x_next = Vec::with_capacity(n);
        let mut y_next = Vec::with_capacity(n);
        let mut perturbation = Vec::with_capacity(n);
        for i in 0..n {
            let (xi, mixed) = self.projected_update(i, alpha, &state.x, &state.y, &mut grad)?;
            let mut yi: Vec<f64> = state.x[i].iter().zip(&mixed).map(|(x, m)| x - m).collect();
            for (j, yj) in state.y.iter().enumerate() {
                let w = b[(i, j)];
                for (o, v) in yi.iter_mut().zip(yj) {
                    *o += w * v;
                }
            }
            for (o, v) in yi.iter_mut().zip(&state.y[i]) {
                *o -= eps * v;
            }
            perturbation.push(
                xi.iter()
                    .zip(&mixed)
                    .zip(&state.y[i])
                    .map(|((x, m), y)| x - m - eps * y)
                    .collect(),
            );
            x_next.push(xi);
            y_next.push(yi);
        }
        let next = SolverState::from_parts(state.k + 1, x_next, y_next);
        if !next.is_finite() {
            return Err(Error::NonFinite(format!("solver state at k = {}", next.k)));
        }
        Ok((next, perturbation))
    }

    pub fn step(&self, state: &SolverState) -> Result<SolverState> {
        self.step_with_perturbation(state).map(|(s, _)| s)
    }

    /// Perturbation rows `g_0..g_{2n-1}` for the stacked state `z` at round
    /// `k`; rows `n..2n` are zero.
    pub fn perturbation(&self, k: usize, z: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = self.sys.n();
        if z.len() != 2 * n {
            return Err(Error::DimensionMismatch {
                expected: 2 * n,
                got: z.len(),
            });
        }
        let (x, y) = z.split_at(n);
        self.check_state(x, y)?;
        let eps = self.sys.epsilon();
        let alpha = self.sched.alpha(k);
        let mut grad = vec![0.0; self.spec.p()];
        let mut g = Vec::with_capacity(2 * n);
        for i in 0..n {
            let (xi, mixed) = self.projected_update(i, alpha, x, y, &mut grad)?;
            g.push(
                xi.iter()
                    .zip(&mixed)
                    .zip(&y[i])
                    .map(|((x, m), y)| x - m - eps * y)
                    .collect(),
            );
        }
        g.extend(std::iter::repeat_n(vec![0.0; self.spec.p()], n));
        Ok(g)
    }

    /// `z^{k+1} = M z^k + g^k`.
    pub fn step_compact(&self, k: usize, z: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let g = self.perturbation(k, z)?;
        let m = self.sys.m();
        let out: Vec<Vec<f64>> = g
            .into_iter()
            .enumerate()
            .map(|(i, gi)| {
                let mut row = vec![0.0; gi.len()];
                for (j, zj) in z.iter().enumerate() {
                    let w = m[(i, j)];
                    for (o, v) in row.iter_mut().zip(zj) {
                        *o += w * v;
                    }
                }
                for (o, v) in row.iter_mut().zip(&gi) {
                    *o += v;
                }
                row
            })
            .collect();
        if out.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("compact state at k = {}", k + 1)));
        }
        Ok(out)
    }

    /// Runs `opts.iters` rounds and records a decimated trace plus streaming
    /// diagnostics.
    pub fn run(&self, opts: &RunOptions) -> Result<RunReport> {
        if opts.iters == 0 {
            return Err(Error::EmptyBudget);
        }
        if opts.record_every == 0 || opts.window == 0 {
            return Err(Error::InvalidObjective(
                "record_every and window must be positive".into(),
            ));
        }
        let (n, p) = (self.sys.n(), self.spec.p());
        let mut state = match &opts.initial {
            Some(s) => {
                self.check_state(&s.x, &s.y)?;
                s.clone()
            }
            None => SolverState::zeros(n, p),
        };
        if let Some(xs) = &opts.x_star {
            if xs.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: xs.len(),
                });
            }
        }
        let k0 = state.k;
        let mut recorder = Recorder::new(opts);
        let mut diag = DiagnosticsBuilder::new(opts.window);
        let mut f_best = f64::INFINITY;
        let zero_g = vec![0.0; n];
        recorder.record(self.spec, &state, &zero_g, f_best);

        for step in 1..=opts.iters {
            let alpha = self.sched.alpha(state.k);
            let (next, g) = self.step_with_perturbation(&state)?;
            let g_norms: Vec<f64> = g.iter().map(|gi| norm(gi)).collect();

            // n z̄' − n z̄ must equal Σ_i g_i.
            let mut conservation = 0.0f64;
            for d in 0..p {
                let sum_g: f64 = g.iter().map(|gi| gi[d]).sum();
                let delta = n as f64 * (next.z_bar[d] - state.z_bar[d]);
                conservation = conservation.max((delta - sum_g).abs());
            }

            let f_zbar = self.spec.global_value_unchecked(&next.z_bar);
            if !f_zbar.is_finite() {
                return Err(Error::NonFinite(format!("f(z_bar) at k = {}", next.k)));
            }
            f_best = f_best.min(f_zbar);
            let consensus = next
                .x
                .iter()
                .map(|xi| dist(xi, &next.z_bar))
                .fold(0.0, f64::max);
            let surplus = next.y.iter().map(|yi| norm(yi)).fold(0.0, f64::max);
            diag.push(
                next.k,
                alpha,
                g_norms.iter().sum(),
                conservation,
                consensus,
                surplus,
            );

            state = next;
            if step % opts.record_every == 0 || step == opts.iters {
                recorder.record(self.spec, &state, &g_norms, f_best);
            }
        }
        debug_assert_eq!(state.k, k0 + opts.iters);
        Ok(RunReport {
            trace: recorder.trace,
            diagnostics: diag.finish(),
            final_state: state,
            epsilon: self.sys.epsilon(),
        })
    }
}

/// Builds the weights for `g` under `policy` and runs the solver.
pub fn run(
    g: &DirectedGraph,
    set: &ConstraintSet,
    spec: &ObjectiveSpec,
    sched: StepSchedule,
    policy: EpsilonPolicy,
    opts: &RunOptions,
) -> Result<RunReport> {
    let sys = SurplusSystem::from_graph(g, policy)?;
    Ddps::new(&sys, set, spec, sched)?.run(opts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub iters: usize,
    pub record_every: usize,
    /// Starting state; zero vectors when `None`.
    pub initial: Option<SolverState>,
    pub x_star: Option<Vec<f64>>,
    pub f_star: Option<f64>,
    /// Length of the smoothing windows in [`Diagnostics`].
    pub window: usize,
}

impl RunOptions {
    pub fn new(iters: usize, record_every: usize) -> Self {
        RunOptions {
            iters,
            record_every,
            initial: None,
            x_star: None,
            f_star: None,
            window: 100,
        }
    }

    pub fn with_optimum(mut self, x_star: Option<Vec<f64>>, f_star: Option<f64>) -> Self {
        self.x_star = x_star;
        self.f_star = f_star;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub agent: i64,
    pub x_residual: f64,
    pub consensus_x: f64,
    pub y_norm: f64,
    pub g_total: f64,
    pub f_zbar: f64,
    pub f_best: f64,
    pub gap: f64,
}

/// Recorded rows: for each recorded `k`, one row per agent followed by a
/// network row (`agent = -1`). `g_total` is the perturbation that produced
/// round `k` (per agent, or summed for the network row); `f_best` is
/// `min_{0<j≤k} f(z̄^j)`, infinite at `k = 0`. Without a known optimum
/// `x_residual` and `gap` are NaN.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolverTrace {
    pub rows: Vec<TraceRow>,
}

impl SolverTrace {
    pub fn network_rows(&self) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(|r| r.agent == NETWORK_ROW)
    }

    pub fn agent_rows(&self, agent: usize) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(move |r| r.agent == agent as i64)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRACE_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.k.to_string(),
                r.agent.to_string(),
                r.x_residual.to_string(),
                r.consensus_x.to_string(),
                r.y_norm.to_string(),
                r.g_total.to_string(),
                r.f_zbar.to_string(),
                r.f_best.to_string(),
                r.gap.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let headers = reader.headers()?.clone();
        if headers.iter().ne(TRACE_HEADER) {
            return Err(Error::InvalidObjective(format!(
                "unexpected trace header {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
        let mut rows = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let bad = |col: &str| Error::Config {
                line: line + 2,
                message: format!("bad `{col}` value"),
            };
            let f = |c: usize| record[c].parse::<f64>().map_err(|_| bad(TRACE_HEADER[c]));
            rows.push(TraceRow {
                k: record[0].parse().map_err(|_| bad("k"))?,
                agent: record[1].parse().map_err(|_| bad("agent"))?,
                x_residual: f(2)?,
                consensus_x: f(3)?,
                y_norm: f(4)?,
                g_total: f(5)?,
                f_zbar: f(6)?,
                f_best: f(7)?,
                gap: f(8)?,
            });
        }
        Ok(SolverTrace { rows })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

struct Recorder {
    trace: SolverTrace,
    x_star: Option<Vec<f64>>,
    f_star: Option<f64>,
}

impl Recorder {
    fn new(opts: &RunOptions) -> Self {
        Recorder {
            trace: SolverTrace::default(),
            x_star: opts.x_star.clone(),
            f_star: opts.f_star,
        }
    }

    fn record(&mut self, spec: &ObjectiveSpec, state: &SolverState, g_norms: &[f64], f_best: f64) {
        let f_zbar = spec.global_value_unchecked(&state.z_bar);
        let gap = self.f_star.map_or(f64::NAN, |f| f_best - f);
        let mut net = TraceRow {
            k: state.k,
            agent: NETWORK_ROW,
            x_residual: if self.x_star.is_some() { 0.0 } else { f64::NAN },
            consensus_x: 0.0,
            y_norm: 0.0,
            g_total: g_norms.iter().sum(),
            f_zbar,
            f_best,
            gap,
        };
        for (i, (xi, yi)) in state.x.iter().zip(&state.y).enumerate() {
            let row = TraceRow {
                k: state.k,
                agent: i as i64,
                x_residual: self.x_star.as_ref().map_or(f64::NAN, |xs| dist(xi, xs)),
                consensus_x: dist(xi, &state.z_bar),
                y_norm: norm(yi),
                g_total: g_norms[i],
                f_zbar,
                f_best,
                gap,
            };
            net.x_residual = net.x_residual.max(row.x_residual);
            net.consensus_x = net.consensus_x.max(row.consensus_x);
            net.y_norm = net.y_norm.max(row.y_norm);
            self.trace.rows.push(row);
        }
        self.trace.rows.push(net);
    }
}

/// Cumulative sums at the end of round `k` (over rounds `0..k`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummabilityPoint {
    pub k: usize,
    /// `Σ α_j g_j`
    pub alpha_g: f64,
    /// `Σ α_j²`
    pub alpha_sq: f64,
    /// `Σ g_j²`
    pub g_sq: f64,
}

impl SummabilityPoint {
    pub fn alpha_g_ratio(&self) -> f64 {
        self.alpha_g / self.alpha_sq
    }

    pub fn g_sq_ratio(&self) -> f64 {
        self.g_sq / self.alpha_sq
    }
}

/// Mean over one window of rounds of the per-round maxima
/// `max_i ‖x_i − z̄‖` and `max_i ‖y_i‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowStats {
    /// First round in the window (rounds are numbered from 1).
    pub start: usize,
    pub consensus: f64,
    pub surplus: f64,
}

/// Per-round checks accumulated while running, independent of trace
/// decimation.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// Max over rounds and coordinates of `|n(z̄^{k+1} − z̄^k) − Σ_i g_i^k|`.
    pub conservation_max_error: f64,
    pub windows: Vec<WindowStats>,
    /// Sums at every window boundary and at the last round.
    pub summability: Vec<SummabilityPoint>,
}

impl Diagnostics {
    pub fn summability_at(&self, k: usize) -> Option<&SummabilityPoint> {
        self.summability.iter().find(|p| p.k == k)
    }
}

struct DiagnosticsBuilder {
    window: usize,
    conservation: f64,
    windows: Vec<WindowStats>,
    acc: (usize, f64, f64),
    sums: (f64, f64, f64),
    summability: Vec<SummabilityPoint>,
    last_k: usize,
}

impl DiagnosticsBuilder {
    fn new(window: usize) -> Self {
        DiagnosticsBuilder {
            window,
            conservation: 0.0,
            windows: Vec::new(),
            acc: (0, 0.0, 0.0),
            sums: (0.0, 0.0, 0.0),
            summability: Vec::new(),
            last_k: 0,
        }
    }

    fn push(&mut self, k: usize, alpha: f64, g: f64, conservation: f64, consensus: f64, surplus: f64) {
        self.conservation = self.conservation.max(conservation);
        self.sums.0 += alpha * g;
        self.sums.1 += alpha * alpha;
        self.sums.2 += g * g;
        self.acc.0 += 1;
        self.acc.1 += consensus;
        self.acc.2 += surplus;
        self.last_k = k;
        if self.acc.0 == self.window {
            let w = self.window as f64;
            self.windows.push(WindowStats {
                start: k + 1 - self.window,
                consensus: self.acc.1 / w,
                surplus: self.acc.2 / w,
            });
            self.acc = (0, 0.0, 0.0);
            self.push_sums(k);
        }
    }

    fn push_sums(&mut self, k: usize) {
        self.summability.push(SummabilityPoint {
            k,
            alpha_g: self.sums.0,
            alpha_sq: self.sums.1,
            g_sq: self.sums.2,
        });
    }

    fn finish(mut self) -> Diagnostics {
        if self.summability.last().map(|p| p.k) != Some(self.last_k) {
            self.push_sums(self.last_k);
        }
        Diagnostics {
            conservation_max_error: self.conservation,
            windows: self.windows,
            summability: self.summability,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub trace: SolverTrace,
    pub diagnostics: Diagnostics,
    pub final_state: SolverState,
    pub epsilon: f64,
}

/// Gaps below this are clamped before taking logs.
pub const GAP_FLOOR: f64 = 1e-14;
pub const RATE_MIN_ROWS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// `(ln(ln K/√K), ln max(gap, GAP_FLOOR))` for `K ≥ 2` rows with a finite
/// gap; errors on a negative gap.
pub fn rate_points(series: &[(usize, f64)]) -> Result<Vec<(f64, f64)>> {
    series
        .iter()
        .filter(|(k, gap)| *k >= 2 && gap.is_finite())
        .map(|&(k, gap)| {
            if gap < 0.0 {
                return Err(Error::NonPositiveGap { k, gap });
            }
            let kf = k as f64;
            Ok(((kf.ln() / kf.sqrt()).ln(), gap.max(GAP_FLOOR).ln()))
        })
        .collect()
}

/// Log-log slope of the gap against the `ln K/√K` envelope over the second
/// half of the usable rows.
pub fn rate_fit_series(series: &[(usize, f64)]) -> Result<RateFit> {
    let usable = series
        .iter()
        .filter(|(k, gap)| *k >= 2 && gap.is_finite())
        .count();
    if usable < RATE_MIN_ROWS {
        return Err(Error::InsufficientRows {
            got: usable,
            required: RATE_MIN_ROWS,
        });
    }
    let points = rate_points(series)?;
    let tail = &points[points.len() / 2..];
    let (xs, ys): (Vec<f64>, Vec<f64>) = tail.iter().copied().unzip();
    let fit = crate::stats::fit_line(&xs, &ys)?;
    Ok(RateFit {
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        points: tail.len(),
    })
}

pub fn rate_fit(trace: &SolverTrace) -> Result<RateFit> {
    let series: Vec<(usize, f64)> = trace.network_rows().map(|r| (r.k, r.gap)).collect();
    rate_fit_series(&series)
}
