//! Experiment configuration files: flat `key = value` lines, `#` comments.
//!
//! ```text
//! m = 15
//! t = 1..7            # or a single value, or a list "1, 3, 5"
//! s = 0
//! seed = 42
//! adversary = gaussian   # honest | gaussian | sign-flip | decoy | adaptive, optional "-fixed"
//! sigma = 100
//! straggler_policy = none  # none | random
//! dataset = synthetic:10000x250   # or "X.txt, y.txt" relative to the config file
//! task = gd           # gd | lasso | ridge | box | logistic | cd | sgd
//! iterations = 50
//! tau = 0.1, 0.25     # fractions of the parameter blocks, cd only
//! step_size = auto    # or a number
//! lambda = 0.5        # l1/l2 weight; box task uses [-lambda, lambda]
//! ```

use crate::cluster::{Adversary, AdversaryKind, ClusterConfig, StragglerPolicy, Targeting};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::optim::{default_step, Loss, ModelSpec, Regularizer, StepSchedule};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Gd,
    Lasso,
    Ridge,
    Box,
    Logistic,
    Cd,
    Sgd,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Gd => "gd",
            Task::Lasso => "lasso",
            Task::Ridge => "ridge",
            Task::Box => "box",
            Task::Logistic => "logistic",
            Task::Cd => "cd",
            Task::Sgd => "sgd",
        }
    }

    fn parse(s: &str) -> Option<Task> {
        Some(match s {
            "gd" => Task::Gd,
            "lasso" => Task::Lasso,
            "ridge" => Task::Ridge,
            "box" => Task::Box,
            "logistic" => Task::Logistic,
            "cd" => Task::Cd,
            "sgd" => Task::Sgd,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synthetic { n: usize, d: usize },
    Files { x: PathBuf, y: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepChoice {
    /// `1/L` for full-gradient methods, `1/max_i ‖x_i‖²` for SGD.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub m: usize,
    pub ts: Vec<usize>,
    pub s: usize,
    pub seed: u64,
    pub adversary: Adversary,
    pub stragglers: StragglerPolicy,
    pub dataset: DatasetSource,
    pub task: Task,
    pub iterations: usize,
    pub taus: Vec<f64>,
    pub step: StepChoice,
    pub lambda: f64,
}

const KEYS: [&str; 13] =
    ["m", "t", "s", "seed", "adversary", "sigma", "straggler_policy", "dataset", "task", "iterations", "tau", "step_size", "lambda"];

impl RunConfig {
    /// Parses a config; relative dataset paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut values: Vec<(usize, String, String)> = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = no + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| err(line, format!("expected 'key = value', found '{content}'")))?;
            let (key, value) = (key.trim().to_string(), value.trim().to_string());
            if !KEYS.contains(&key.as_str()) {
                return Err(err(line, format!("unknown key '{key}'")));
            }
            if values.iter().any(|(_, k, _)| *k == key) {
                return Err(err(line, format!("duplicate key '{key}'")));
            }
            values.push((line, key, value));
        }
        let get = |key: &str| values.iter().find(|(_, k, _)| k == key).map(|(l, _, v)| (*l, v.as_str()));

        let m = number(get("m"), 15)?;
        let ts = match get("t") {
            Some((l, v)) => int_list(l, v)?,
            None => vec![1],
        };
        let s = number(get("s"), 0)?;
        let seed = number(get("seed"), 0)?;
        let sigma: f64 = number(get("sigma"), 100.0)?;
        let adversary = match get("adversary") {
            Some((l, v)) => adversary(l, v, sigma)?,
            None => Adversary::honest(),
        };
        let stragglers = match get("straggler_policy") {
            None if s > 0 => StragglerPolicy::RandomPerRound,
            None => StragglerPolicy::None,
            Some((_, "none")) => StragglerPolicy::None,
            Some((_, "random" | "random-per-round")) => StragglerPolicy::RandomPerRound,
            Some((l, v)) => return Err(err(l, format!("unknown straggler policy '{v}'"))),
        };
        let dataset = match get("dataset") {
            Some((l, v)) => dataset(l, v, base)?,
            None => DatasetSource::Synthetic { n: 1000, d: 30 },
        };
        let task = match get("task") {
            Some((l, v)) => Task::parse(v).ok_or_else(|| err(l, format!("unknown task '{v}'")))?,
            None => Task::Gd,
        };
        let iterations = number(get("iterations"), 50)?;
        let taus = match get("tau") {
            Some((l, v)) => {
                let taus = v.split(',').map(|x| parse_at(l, x.trim())).collect::<Result<Vec<f64>>>()?;
                if taus.is_empty() || taus.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
                    return Err(err(l, "tau fractions must lie in (0, 1]".into()));
                }
                taus
            }
            None => vec![0.1],
        };
        let step = match get("step_size") {
            None | Some((_, "auto")) => StepChoice::Auto,
            Some((l, v)) => {
                let a: f64 = parse_at(l, v)?;
                if !(a > 0.0 && a.is_finite()) {
                    return Err(err(l, format!("step size {a} must be positive")));
                }
                StepChoice::Fixed(a)
            }
        };
        let lambda: f64 = number(get("lambda"), 0.0)?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(err(get("lambda").map_or(0, |x| x.0), format!("lambda {lambda} must be finite and nonnegative")));
        }
        if task == Task::Cd && lambda != 0.0 {
            return Err(err(get("lambda").map_or(0, |x| x.0), "coordinate descent runs unregularized; drop lambda".into()));
        }
        let cfg = RunConfig { m, ts, s, seed, adversary, stragglers, dataset, task, iterations, taus, step, lambda };
        for &t in &cfg.ts {
            cfg.cluster(t).map_err(|e| err(get("t").map_or(0, |x| x.0), e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Cluster for Byzantine budget `t`.
    pub fn cluster(&self, t: usize) -> Result<ClusterConfig> {
        let cfg = ClusterConfig::new(self.m, t, self.s, self.seed)?.with_adversary(self.adversary).with_stragglers(self.stragglers);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn loss(&self) -> Loss {
        if self.task == Task::Logistic {
            Loss::Logistic
        } else {
            Loss::Squared
        }
    }

    pub fn regularizer(&self) -> Regularizer {
        match self.task {
            Task::Lasso => Regularizer::L1(self.lambda),
            Task::Ridge => Regularizer::L2(self.lambda),
            Task::Box => Regularizer::Box { lo: -self.lambda, hi: self.lambda },
            Task::Cd => Regularizer::None,
            _ if self.lambda > 0.0 => Regularizer::L2(self.lambda),
            _ => Regularizer::None,
        }
    }

    /// Model for data `x`; resolves the automatic step size.
    pub fn model(&self, x: &Matrix) -> Result<ModelSpec> {
        let step = match self.step {
            StepChoice::Fixed(a) => a,
            StepChoice::Auto if self.task == Task::Sgd => {
                let widest = (0..x.rows()).map(|r| x.row(r).iter().map(|v| v * v).sum::<f64>()).fold(0.0, f64::max);
                if widest > 0.0 {
                    1.0 / widest
                } else {
                    1.0
                }
            }
            StepChoice::Auto if self.task == Task::Logistic => 4.0 * default_step(x),
            StepChoice::Auto => default_step(x),
        };
        ModelSpec::new(self.loss(), self.regularizer(), StepSchedule::Constant(step))
    }
}

fn err(line: usize, message: String) -> Error {
    Error::Config { line, message }
}

fn parse_at<T: std::str::FromStr>(line: usize, v: &str) -> Result<T> {
    v.parse().map_err(|_| err(line, format!("cannot parse '{v}'")))
}

fn number<T: std::str::FromStr>(entry: Option<(usize, &str)>, default: T) -> Result<T> {
    entry.map_or(Ok(default), |(l, v)| parse_at(l, v))
}

fn int_list(line: usize, v: &str) -> Result<Vec<usize>> {
    let out = if let Some((a, b)) = v.split_once("..") {
        let (a, b): (usize, usize) = (parse_at(line, a.trim())?, parse_at(line, b.trim())?);
        if a > b {
            return Err(err(line, format!("empty range '{v}'")));
        }
        (a..=b).collect()
    } else {
        v.split(',').map(|x| parse_at(line, x.trim())).collect::<Result<Vec<usize>>>()?
    };
    Ok(out)
}

fn adversary(line: usize, v: &str, sigma: f64) -> Result<Adversary> {
    let (base, targeting) = match v.strip_suffix("-fixed") {
        Some(b) => (b, Targeting::FixedSet),
        None => (v, Targeting::PerRound),
    };
    let kind = match base {
        "honest" => return Ok(Adversary::honest()),
        "gaussian" | "gaussian-noise" => AdversaryKind::GaussianNoise { sigma },
        "sign-flip" => AdversaryKind::SignFlip,
        "decoy" => AdversaryKind::Decoy,
        "adaptive" => AdversaryKind::AdaptiveRandomSubset { sigma },
        _ => return Err(err(line, format!("unknown adversary '{v}'"))),
    };
    Ok(Adversary { kind, targeting })
}

fn dataset(line: usize, v: &str, base: &Path) -> Result<DatasetSource> {
    if let Some(dims) = v.strip_prefix("synthetic:") {
        let (n, d) = dims.split_once('x').ok_or_else(|| err(line, format!("expected synthetic:NxD, found '{v}'")))?;
        let (n, d): (usize, usize) = (parse_at(line, n.trim())?, parse_at(line, d.trim())?);
        if n == 0 || d == 0 {
            return Err(err(line, "dataset dimensions must be positive".into()));
        }
        return Ok(DatasetSource::Synthetic { n, d });
    }
    let (x, y) = v.split_once(',').ok_or_else(|| err(line, format!("expected 'X-file, y-file', found '{v}'")))?;
    Ok(DatasetSource::Files { x: base.join(x.trim()), y: base.join(y.trim()) })
}
