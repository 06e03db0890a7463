//! Run configuration: line-oriented `key = value` text, `#` starts a
//! comment line. Every key is optional; the defaults describe a 10-agent
//! logistic regression over a random digraph with a ball constraint.
//!
//! ```text
//! graph = generate          # or a path to an edge-list file
//! nodes = 10
//! edge_prob = 0.15
//! problem = logistic        # or sum_of_distances
//! dim = 100
//! samples_per_agent = 10
//! label_flip = 0.1
//! data = samples.csv        # optional CSV instead of synthetic data
//! anchors = 0:0; 1:1; 2:5   # sum_of_distances, `agent:c1,c2,...`
//! constraint = ball         # ball | box | none
//! ball_radius = 5
//! ball_center = 0,0         # optional, defaults to the origin
//! box_lower = 2             # one value is broadcast to every coordinate
//! box_upper = 10
//! step_scale = 1
//! epsilon = auto            # or an explicit value
//! epsilon_cap = 0.001
//! iters = 10000
//! record_every = 10
//! seed = 1
//! output = trace.csv
//! reference_budget = 100000 # optional, default 10 × iters
//! ```
//!
//! `seed` drives graph generation; synthetic data uses `seed + 1` and the
//! reference solver `seed + 2`.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::oracle::{clipped_median, reference_optimum, LocalObjective, ObjectiveSpec, StepSchedule};
use crate::projection::ConstraintSet;
use crate::solver::RunOptions;
use crate::weights::EpsilonPolicy;

#[derive(Debug, Clone, PartialEq)]
pub enum GraphSource {
    File(PathBuf),
    Generate { nodes: usize, edge_prob: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemConfig {
    Logistic {
        dim: usize,
        samples_per_agent: usize,
        label_flip: f64,
        data: Option<PathBuf>,
    },
    SumOfDistances {
        /// `(agent, point)` pairs.
        anchors: Vec<(usize, Vec<f64>)>,
        data: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintConfig {
    None,
    Ball { radius: f64, center: Option<Vec<f64>> },
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub graph: GraphSource,
    pub problem: ProblemConfig,
    pub constraint: ConstraintConfig,
    pub step_scale: f64,
    pub epsilon: EpsilonPolicy,
    pub iters: usize,
    pub record_every: usize,
    pub seed: u64,
    pub output: PathBuf,
    pub reference_budget: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            graph: GraphSource::Generate {
                nodes: 10,
                edge_prob: 0.15,
            },
            problem: ProblemConfig::Logistic {
                dim: 100,
                samples_per_agent: 10,
                label_flip: 0.1,
                data: None,
            },
            constraint: ConstraintConfig::Ball {
                radius: 5.0,
                center: None,
            },
            step_scale: 1.0,
            epsilon: EpsilonPolicy::default(),
            iters: 10_000,
            record_every: 10,
            seed: 1,
            output: PathBuf::from("trace.csv"),
            reference_budget: None,
        }
    }
}

fn join<T: fmt::Display>(values: &[T], sep: &str) -> String {
    values
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(sep)
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.graph {
            GraphSource::File(path) => writeln!(f, "graph = {}", path.display())?,
            GraphSource::Generate { nodes, edge_prob } => {
                writeln!(f, "graph = generate")?;
                writeln!(f, "nodes = {nodes}")?;
                writeln!(f, "edge_prob = {edge_prob}")?;
            }
        }
        match &self.problem {
            ProblemConfig::Logistic {
                dim,
                samples_per_agent,
                label_flip,
                data,
            } => {
                writeln!(f, "problem = logistic")?;
                writeln!(f, "dim = {dim}")?;
                writeln!(f, "samples_per_agent = {samples_per_agent}")?;
                writeln!(f, "label_flip = {label_flip}")?;
                if let Some(path) = data {
                    writeln!(f, "data = {}", path.display())?;
                }
            }
            ProblemConfig::SumOfDistances { anchors, data } => {
                writeln!(f, "problem = sum_of_distances")?;
                if !anchors.is_empty() {
                    let items: Vec<String> = anchors
                        .iter()
                        .map(|(agent, point)| format!("{agent}:{}", join(point, ",")))
                        .collect();
                    writeln!(f, "anchors = {}", items.join("; "))?;
                }
                if let Some(path) = data {
                    writeln!(f, "data = {}", path.display())?;
                }
            }
        }
        match &self.constraint {
            ConstraintConfig::None => writeln!(f, "constraint = none")?,
            ConstraintConfig::Ball { radius, center } => {
                writeln!(f, "constraint = ball")?;
                writeln!(f, "ball_radius = {radius}")?;
                if let Some(c) = center {
                    writeln!(f, "ball_center = {}", join(c, ","))?;
                }
            }
            ConstraintConfig::Box { lower, upper } => {
                writeln!(f, "constraint = box")?;
                writeln!(f, "box_lower = {}", join(lower, ","))?;
                writeln!(f, "box_upper = {}", join(upper, ","))?;
            }
        }
        writeln!(f, "step_scale = {}", self.step_scale)?;
        match self.epsilon {
            EpsilonPolicy::Explicit(e) => writeln!(f, "epsilon = {e}")?,
            EpsilonPolicy::CappedAuto { cap } => {
                writeln!(f, "epsilon = auto")?;
                writeln!(f, "epsilon_cap = {cap}")?;
            }
        }
        writeln!(f, "iters = {}", self.iters)?;
        writeln!(f, "record_every = {}", self.record_every)?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "output = {}", self.output.display())?;
        if let Some(b) = self.reference_budget {
            writeln!(f, "reference_budget = {b}")?;
        }
        Ok(())
    }
}

const KEYS: &[&str] = &[
    "graph",
    "nodes",
    "edge_prob",
    "problem",
    "dim",
    "samples_per_agent",
    "label_flip",
    "data",
    "anchors",
    "constraint",
    "ball_radius",
    "ball_center",
    "box_lower",
    "box_upper",
    "step_scale",
    "epsilon",
    "epsilon_cap",
    "iters",
    "record_every",
    "seed",
    "output",
    "reference_budget",
];

struct Entries {
    // (line, key, value); later lookups consume entries.
    items: Vec<(usize, String, String)>,
    used: HashSet<String>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.used.insert(key.to_string());
        self.items
            .iter()
            .find(|(_, k, _)| k == key)
            .map(|(line, _, v)| (*line, v.clone()))
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<T>().map(Some).map_err(|e| Error::Config {
                line,
                message: format!("`{key}`: {e}"),
            }),
        }
    }

    fn floats(&mut self, key: &str) -> Result<Option<(usize, Vec<f64>)>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => parse_floats(&v)
                .map(|xs| Some((line, xs)))
                .map_err(|message| Error::Config {
                    line,
                    message: format!("`{key}`: {message}"),
                }),
        }
    }

    /// Errors on keys present but irrelevant to the chosen variants.
    fn finish(self) -> Result<()> {
        for (line, key, _) in &self.items {
            if !self.used.contains(key) {
                return Err(Error::Config {
                    line: *line,
                    message: format!("`{key}` does not apply to this configuration"),
                });
            }
        }
        Ok(())
    }
}

fn parse_floats(text: &str) -> std::result::Result<Vec<f64>, String> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("{s:?}: {e}")))
        .collect()
}

fn parse_anchors(text: &str) -> std::result::Result<Vec<(usize, Vec<f64>)>, String> {
    text.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (agent, coords) = item
                .split_once(':')
                .ok_or_else(|| format!("expected `agent:coords`, got {item:?}"))?;
            let agent = agent
                .trim()
                .parse::<usize>()
                .map_err(|e| format!("agent {agent:?}: {e}"))?;
            Ok((agent, parse_floats(coords)?))
        })
        .collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut items = Vec::new();
        let mut seen = HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| Error::Config {
                line,
                message: format!("expected `key = value`, got {trimmed:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(Error::Config {
                    line,
                    message: format!("unknown key `{key}`"),
                });
            }
            if !seen.insert(key.to_string()) {
                return Err(Error::Config {
                    line,
                    message: format!("duplicate key `{key}`"),
                });
            }
            if value.is_empty() {
                return Err(Error::Config {
                    line,
                    message: format!("`{key}` has no value"),
                });
            }
            items.push((line, key.to_string(), value.to_string()));
        }
        let mut e = Entries {
            items,
            used: HashSet::new(),
        };
        let d = RunConfig::default();
        let invalid = |line: usize, message: String| Error::Config { line, message };

        let graph = match e.take("graph") {
            Some((_, v)) if v != "generate" => GraphSource::File(PathBuf::from(v)),
            _ => GraphSource::Generate {
                nodes: e.parse("nodes")?.unwrap_or(10),
                edge_prob: e.parse("edge_prob")?.unwrap_or(0.15),
            },
        };
        if let GraphSource::Generate { nodes, edge_prob } = graph {
            if nodes == 0 || !(0.0..=1.0).contains(&edge_prob) {
                return Err(invalid(0, "need nodes ≥ 1 and edge_prob in [0, 1]".into()));
            }
        }

        let data = e.take("data").map(|(_, v)| PathBuf::from(v));
        let problem = match e.take("problem") {
            None => {
                let mut p = d.problem.clone();
                if let ProblemConfig::Logistic { data: slot, .. } = &mut p {
                    *slot = data;
                }
                complete_logistic(&mut e, p)?
            }
            Some((_, v)) if v == "logistic" => complete_logistic(
                &mut e,
                ProblemConfig::Logistic {
                    dim: 100,
                    samples_per_agent: 10,
                    label_flip: 0.1,
                    data,
                },
            )?,
            Some((line, v)) if v == "sum_of_distances" => {
                let anchors = match e.take("anchors") {
                    None => Vec::new(),
                    Some((l, text)) => parse_anchors(&text).map_err(|m| invalid(l, m))?,
                };
                if anchors.is_empty() && data.is_none() {
                    return Err(invalid(line, "sum_of_distances needs `anchors` or `data`".into()));
                }
                ProblemConfig::SumOfDistances { anchors, data }
            }
            Some((line, v)) => return Err(invalid(line, format!("unknown problem {v:?}"))),
        };

        let constraint = match e.take("constraint") {
            None => ConstraintConfig::Ball {
                radius: e.parse("ball_radius")?.unwrap_or(5.0),
                center: e.floats("ball_center")?.map(|(_, c)| c),
            },
            Some((_, v)) if v == "none" => ConstraintConfig::None,
            Some((_, v)) if v == "ball" => ConstraintConfig::Ball {
                radius: e.parse("ball_radius")?.unwrap_or(5.0),
                center: e.floats("ball_center")?.map(|(_, c)| c),
            },
            Some((line, v)) if v == "box" => {
                let lower = e.floats("box_lower")?;
                let upper = e.floats("box_upper")?;
                match (lower, upper) {
                    (Some((_, lower)), Some((_, upper))) => ConstraintConfig::Box { lower, upper },
                    _ => return Err(invalid(line, "box needs `box_lower` and `box_upper`".into())),
                }
            }
            Some((line, v)) => return Err(invalid(line, format!("unknown constraint {v:?}"))),
        };

        let epsilon = match e.take("epsilon") {
            Some((line, v)) if v != "auto" => {
                let eps = v
                    .parse::<f64>()
                    .map_err(|err| invalid(line, format!("`epsilon`: {err}")))?;
                EpsilonPolicy::Explicit(eps)
            }
            _ => EpsilonPolicy::CappedAuto {
                cap: e.parse("epsilon_cap")?.unwrap_or(1e-3),
            },
        };

        let cfg = RunConfig {
            graph,
            problem,
            constraint,
            step_scale: e.parse("step_scale")?.unwrap_or(d.step_scale),
            epsilon,
            iters: e.parse("iters")?.unwrap_or(d.iters),
            record_every: e.parse("record_every")?.unwrap_or(d.record_every),
            seed: e.parse("seed")?.unwrap_or(d.seed),
            output: e
                .take("output")
                .map(|(_, v)| PathBuf::from(v))
                .unwrap_or(d.output),
            reference_budget: e.parse("reference_budget")?,
        };
        e.finish()?;
        if cfg.iters == 0 || cfg.record_every == 0 {
            return Err(invalid(0, "`iters` and `record_every` must be positive".into()));
        }
        if !(cfg.step_scale > 0.0 && cfg.step_scale.is_finite()) {
            return Err(invalid(0, "`step_scale` must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Builds graph, objective and constraint set. Relative paths resolve
    /// against `base_dir`.
    pub fn resolve(&self, base_dir: &Path) -> Result<Experiment> {
        let at = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base_dir.join(p)
            }
        };
        let graph = match &self.graph {
            GraphSource::File(path) => DirectedGraph::load(at(path))?,
            GraphSource::Generate { nodes, edge_prob } => {
                DirectedGraph::random_strongly_connected(*nodes, *edge_prob, self.seed)?
            }
        };
        let n = graph.n();
        let spec = match &self.problem {
            ProblemConfig::Logistic { data: Some(path), .. } => {
                ObjectiveSpec::logistic_from_csv(at(path), n)?
            }
            ProblemConfig::Logistic {
                dim,
                samples_per_agent,
                label_flip,
                data: None,
            } => ObjectiveSpec::synthetic_logistic(
                n,
                *dim,
                *samples_per_agent,
                *label_flip,
                self.seed.wrapping_add(1),
            )?,
            ProblemConfig::SumOfDistances { data: Some(path), .. } => {
                ObjectiveSpec::anchors_from_csv(at(path), n)?
            }
            ProblemConfig::SumOfDistances { anchors, data: None } => {
                let p = anchors[0].1.len();
                let mut per_agent = vec![Vec::new(); n];
                for (agent, point) in anchors {
                    if *agent >= n {
                        return Err(Error::AgentOutOfRange { index: *agent, n });
                    }
                    per_agent[*agent].push(point.clone());
                }
                ObjectiveSpec::new(
                    p,
                    per_agent
                        .into_iter()
                        .map(|anchors| LocalObjective::SumOfDistances { anchors })
                        .collect(),
                )?
            }
        };
        let p = spec.p();
        let broadcast = |v: &[f64]| -> Vec<f64> {
            if v.len() == 1 {
                vec![v[0]; p]
            } else {
                v.to_vec()
            }
        };
        let set = match &self.constraint {
            ConstraintConfig::None => ConstraintSet::whole_space(p)?,
            ConstraintConfig::Ball { radius, center } => {
                let c = center.as_deref().map(broadcast).unwrap_or_else(|| vec![0.0; p]);
                if c.len() != p {
                    return Err(Error::DimensionMismatch { expected: p, got: c.len() });
                }
                ConstraintSet::ball(c, *radius)?
            }
            ConstraintConfig::Box { lower, upper } => {
                let (lo, hi) = (broadcast(lower), broadcast(upper));
                if lo.len() != p {
                    return Err(Error::DimensionMismatch { expected: p, got: lo.len() });
                }
                ConstraintSet::boxed(lo, hi)?
            }
        };
        Ok(Experiment {
            graph,
            spec,
            set,
            sched: StepSchedule::new(self.step_scale)?,
            policy: self.epsilon,
            iters: self.iters,
            record_every: self.record_every,
            reference_budget: self.reference_budget.unwrap_or(10 * self.iters),
            reference_seed: self.seed.wrapping_add(2),
        })
    }
}

fn complete_logistic(e: &mut Entries, base: ProblemConfig) -> Result<ProblemConfig> {
    let ProblemConfig::Logistic {
        dim,
        samples_per_agent,
        label_flip,
        data,
    } = base
    else {
        unreachable!("called with a logistic problem")
    };
    let cfg = ProblemConfig::Logistic {
        dim: e.parse("dim")?.unwrap_or(dim),
        samples_per_agent: e.parse("samples_per_agent")?.unwrap_or(samples_per_agent),
        label_flip: e.parse("label_flip")?.unwrap_or(label_flip),
        data,
    };
    if let ProblemConfig::Logistic {
        dim: 0,
        data: None,
        ..
    } = cfg
    {
        return Err(Error::Config {
            line: 0,
            message: "`dim` must be positive".into(),
        });
    }
    Ok(cfg)
}

/// Where the optimum used for residuals and gaps came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimumSource {
    ClippedMedian,
    ReferenceSolver,
}

/// A configuration with all inputs materialized.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub graph: DirectedGraph,
    pub spec: ObjectiveSpec,
    pub set: ConstraintSet,
    pub sched: StepSchedule,
    pub policy: EpsilonPolicy,
    pub iters: usize,
    pub record_every: usize,
    pub reference_budget: usize,
    pub reference_seed: u64,
}

impl Experiment {
    /// Analytic optimum for scalar sum-of-distances problems over an
    /// interval, the centralized reference solver otherwise.
    pub fn optimum(&self) -> Result<(Vec<f64>, f64, OptimumSource)> {
        if self.spec.p() == 1 {
            let anchors: Option<Vec<f64>> = self
                .spec
                .locals()
                .iter()
                .map(|l| match l {
                    LocalObjective::SumOfDistances { anchors } => {
                        Some(anchors.iter().map(|a| a[0]).collect::<Vec<_>>())
                    }
                    LocalObjective::Logistic { .. } => None,
                })
                .collect::<Option<Vec<_>>>()
                .map(|v| v.concat());
            let bounds = match &self.set {
                ConstraintSet::WholeSpace { .. } => Some((f64::NEG_INFINITY, f64::INFINITY)),
                ConstraintSet::Box { lower, upper } => Some((lower[0], upper[0])),
                ConstraintSet::Ball { center, radius } => Some((center[0] - radius, center[0] + radius)),
            };
            if let (Some(anchors), Some((lo, hi))) = (anchors, bounds) {
                if let Some((x, f)) = clipped_median(&anchors, lo, hi) {
                    return Ok((vec![x], f, OptimumSource::ClippedMedian));
                }
            }
        }
        let r = reference_optimum(&self.spec, &self.set, self.reference_budget, self.reference_seed)?;
        Ok((r.x_star, r.f_star, OptimumSource::ReferenceSolver))
    }

    pub fn run_options(&self, x_star: Vec<f64>, f_star: f64) -> RunOptions {
        RunOptions::new(self.iters, self.record_every).with_optimum(Some(x_star), Some(f_star))
    }
}
