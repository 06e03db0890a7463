//! The four command-line operations, callable without the binary.
//!
//! Each `cmd_*` returns a summary struct; the binary prints it and maps
//! errors to exit codes with [`exit_code`].

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use crate::config::{OptimumSource, RunConfig};
use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::solver::{rate_fit_series, rate_points, run, RateFit, RunReport, SolverTrace};
use crate::stats::dist;
use crate::weights::{
    bottom_block_max, epsilon_upper_bound, fit_geometric, limit_error_series, EpsilonPolicy,
    GeometricFit, SurplusSystem,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

/// 2 for numerical aborts, 1 for everything else.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_CONFIG
    }
}

#[derive(Debug, Clone)]
pub struct GenGraphSummary {
    pub n: usize,
    pub edges: usize,
    pub strongly_connected: bool,
    pub path: PathBuf,
}

impl fmt::Display for GenGraphSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "wrote {}: n = {}, edges = {}, strongly connected = {}",
            self.path.display(),
            self.n,
            self.edges,
            self.strongly_connected
        )
    }
}

pub fn cmd_gen_graph(
    n: usize,
    extra_edge_prob: f64,
    seed: u64,
    out: &Path,
) -> Result<GenGraphSummary> {
    let g = DirectedGraph::random_strongly_connected(n, extra_edge_prob, seed)?;
    g.save(out)?;
    let reloaded = DirectedGraph::load(out)?;
    Ok(GenGraphSummary {
        n: reloaded.n(),
        edges: reloaded.edge_count(),
        strongly_connected: reloaded.is_strongly_connected(),
        path: out.to_path_buf(),
    })
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOverrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub iters: Option<usize>,
    pub record_every: Option<usize>,
}

impl RunOverrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(iters) = self.iters {
            cfg.iters = iters;
        }
        if let Some(r) = self.record_every {
            cfg.record_every = r;
        }
        if let Some(out) = &self.out {
            cfg.output = out.clone();
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub config: PathBuf,
    pub output: PathBuf,
    pub epsilon: f64,
    pub optimum_source: OptimumSource,
    pub f_star: f64,
    /// `max_i ‖x_i^K − x*‖`
    pub max_residual: f64,
    /// `max_i ‖x_i^K − z̄^K‖`
    pub consensus: f64,
    /// `f(z̄^K) − f*`
    pub gap: f64,
    pub conservation_max_error: f64,
    pub wall_time: Duration,
    pub report: RunReport,
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let source = match self.optimum_source {
            OptimumSource::ClippedMedian => "clipped median",
            OptimumSource::ReferenceSolver => "reference solver",
        };
        writeln!(f, "config: {}", self.config.display())?;
        writeln!(f, "trace: {}", self.output.display())?;
        writeln!(f, "epsilon: {:e}", self.epsilon)?;
        writeln!(f, "f*: {} ({source})", self.f_star)?;
        writeln!(f, "final max residual: {:e}", self.max_residual)?;
        writeln!(f, "final consensus disagreement: {:e}", self.consensus)?;
        writeln!(f, "final gap: {:e}", self.gap)?;
        writeln!(f, "conservation error: {:e}", self.conservation_max_error)?;
        write!(f, "wall time: {:.3} s", self.wall_time.as_secs_f64())
    }
}

/// Loads, runs and writes the trace for one config. Relative paths in the
/// file resolve against its directory; `overrides.out` is taken as given.
pub fn cmd_run(config_path: &Path, overrides: &RunOverrides) -> Result<RunSummary> {
    let started = Instant::now();
    let mut cfg = RunConfig::load(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let output = match &overrides.out {
        Some(out) => out.clone(),
        None => base.join(&cfg.output),
    };
    overrides.apply(&mut cfg);
    if cfg.iters == 0 || cfg.record_every == 0 {
        return Err(Error::Config {
            line: 0,
            message: "`iters` and `record_every` must be positive".into(),
        });
    }
    let exp = cfg.resolve(base)?;
    let (x_star, f_star, optimum_source) = exp.optimum()?;
    let opts = exp.run_options(x_star.clone(), f_star);
    let report = run(&exp.graph, &exp.set, &exp.spec, exp.sched, exp.policy, &opts)?;
    report.trace.save(&output)?;

    let last = &report.final_state;
    let max_residual = last.x.iter().map(|xi| dist(xi, &x_star)).fold(0.0, f64::max);
    let consensus = last.x.iter().map(|xi| dist(xi, &last.z_bar)).fold(0.0, f64::max);
    let gap = exp.spec.global_value(&last.z_bar)? - f_star;
    Ok(RunSummary {
        config: config_path.to_path_buf(),
        output,
        epsilon: report.epsilon,
        optimum_source,
        f_star,
        max_residual,
        consensus,
        gap,
        conservation_max_error: report.diagnostics.conservation_max_error,
        wall_time: started.elapsed(),
        report,
    })
}

/// Runs several configs on up to `jobs` threads. Results keep the input
/// order.
pub fn cmd_run_many(
    configs: &[PathBuf],
    overrides: &RunOverrides,
    jobs: usize,
) -> Vec<Result<RunSummary>> {
    if configs.len() > 1 && overrides.out.is_some() {
        return configs
            .iter()
            .map(|_| {
                Err(Error::Config {
                    line: 0,
                    message: "--out needs a single --config".into(),
                })
            })
            .collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<RunSummary>>>> =
        configs.iter().map(|_| Mutex::new(None)).collect();
    let workers = jobs.clamp(1, configs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= configs.len() {
                    break;
                }
                let result = cmd_run(&configs[i], overrides);
                *slots[i].lock().expect("result slot") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("result slot").expect("every config ran"))
        .collect()
}

pub const ANALYSIS_HEADER: [&str; 6] = [
    "k",
    "limit_error",
    "fitted_gamma",
    "fitted_Gamma",
    "epsilon",
    "upsilon_bound",
];

#[derive(Debug, Clone)]
pub struct MatrixAnalysis {
    pub n: usize,
    pub epsilon: f64,
    /// NaN when `2n < 3`.
    pub upsilon_bound: f64,
    pub limit_errors: Vec<f64>,
    pub fit: GeometricFit,
    pub bottom_block_max: f64,
}

impl fmt::Display for MatrixAnalysis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k_max = self.limit_errors.len() - 1;
        writeln!(f, "n: {}, epsilon: {:e}, upsilon bound: {:e}", self.n, self.epsilon, self.upsilon_bound)?;
        writeln!(
            f,
            "fitted gamma: {}, Gamma: {}, r^2: {}",
            self.fit.gamma, self.fit.big_gamma, self.fit.r_squared
        )?;
        writeln!(f, "limit error at k = {k_max}: {:e}", self.limit_errors[k_max])?;
        write!(f, "bottom block max at k = {k_max}: {:e}", self.bottom_block_max)
    }
}

/// Powers `M` up to `k_max`, fits `Γγ^k` to the limit error and writes the
/// series to `out`. `epsilon = None` uses the default policy.
pub fn cmd_analyze_matrix(
    graph_path: &Path,
    epsilon: Option<f64>,
    k_max: usize,
    out: &Path,
) -> Result<MatrixAnalysis> {
    let g = DirectedGraph::load(graph_path)?;
    let policy = epsilon.map_or_else(EpsilonPolicy::default, EpsilonPolicy::Explicit);
    let sys = SurplusSystem::from_graph(&g, policy)?;
    let upsilon_bound = match epsilon_upper_bound(sys.a(), sys.b()) {
        Ok(u) => u,
        Err(Error::TooFewEigenvalues(_)) => f64::NAN,
        Err(e) => return Err(e),
    };
    let limit_errors = limit_error_series(sys.m(), k_max)?;
    let fit = fit_geometric(&limit_errors)?;
    let bottom = bottom_block_max(sys.m(), k_max)?;

    let mut w = csv::Writer::from_path(out)?;
    w.write_record(ANALYSIS_HEADER)?;
    for (k, e) in limit_errors.iter().enumerate() {
        w.write_record([
            k.to_string(),
            e.to_string(),
            fit.gamma.to_string(),
            fit.big_gamma.to_string(),
            sys.epsilon().to_string(),
            upsilon_bound.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(MatrixAnalysis {
        n: g.n(),
        epsilon: sys.epsilon(),
        upsilon_bound,
        limit_errors,
        fit,
        bottom_block_max: bottom,
    })
}

pub const RATE_HEADER: [&str; 2] = ["log_envelope", "log_gap"];

/// Fits the gap column of a trace against `ln K/√K`; optionally writes the
/// log-log points.
pub fn cmd_rate(trace_path: &Path, out: Option<&Path>) -> Result<RateFit> {
    let trace = SolverTrace::load(trace_path)?;
    let series: Vec<(usize, f64)> = trace.network_rows().map(|r| (r.k, r.gap)).collect();
    let fit = rate_fit_series(&series)?;
    if let Some(out) = out {
        let mut w = csv::Writer::from_path(out)?;
        w.write_record(RATE_HEADER)?;
        for (x, y) in rate_points(&series)? {
            w.write_record([x.to_string(), y.to_string()])?;
        }
        w.flush()?;
    }
    Ok(fit)
}
