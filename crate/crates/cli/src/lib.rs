//! Experiment harness: synthetic data, coded-versus-serial runs and CSV output.

use byzcode::cluster::{Cluster, Request};
use byzcode::config::{DatasetSource, RunConfig, Task};
use byzcode::encoder::{encode, Provenance};
use byzcode::io::{read_matrix, read_vector};
use byzcode::linalg::{rel_err, Flops, Matrix};
use byzcode::mvp::{decode, worker_product};
use byzcode::optim::{
    cd_iteration, pgd_step, round_robin, serial_cd, serial_pgd, serial_sgd, sgd_step_at, CodedCd, CodedGlm, CodedSgd, GlmState, Metrics,
    ModelSpec,
};
use byzcode::{Error, Result};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use std::io::Write;

pub const CSV_HEADER: [&str; 13] = [
    "task",
    "m",
    "t",
    "s",
    "adversary",
    "tau",
    "iteration",
    "max_worker_flops",
    "master_flops",
    "wall_time_worker_max",
    "wall_time_master",
    "objective",
    "trajectory_deviation",
];

/// Largest trajectory deviation tolerated by `verify`.
pub const DEVIATION_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<f64>,
    /// Generating parameters, when known.
    pub theta: Option<Vec<f64>>,
}

/// `X ~ N(0, I)`, `θ` with `⌈d/3⌉` nonzero `N(0, 4)` entries, `y = Xθ + z`
/// with `z ~ N(0, I)`.
pub fn gen_dataset(n: usize, d: usize, seed: u64) -> Dataset {
    assert!(n >= 1 && d >= 1, "dataset dimensions must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = vec![0.0; d];
    let wide = Normal::new(0.0, 2.0).expect("valid normal");
    for j in sample(&mut rng, d, d.div_ceil(3)) {
        theta[j] = wide.sample(&mut rng);
    }
    let x = Matrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
    let mut y = x.mul_vec(&theta);
    for v in &mut y {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += z;
    }
    Dataset { x, y, theta: Some(theta) }
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let mut data = match &cfg.dataset {
        DatasetSource::Synthetic { n, d } => gen_dataset(*n, *d, cfg.seed),
        DatasetSource::Files { x, y } => {
            let (x, y) = (read_matrix(x)?, read_vector(y)?);
            if x.rows() != y.len() {
                return Err(Error::DimensionMismatch(format!("{} samples but {} labels", x.rows(), y.len())));
            }
            Dataset { x, y, theta: None }
        }
    };
    if cfg.task == Task::Logistic {
        for v in &mut data.y {
            *v = if *v > 0.0 { 1.0 } else { 0.0 };
        }
    }
    Ok(data)
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub task: &'static str,
    pub m: usize,
    pub t: usize,
    pub s: usize,
    pub adversary: String,
    /// Blocks updated per iteration (coordinate descent), otherwise 0.
    pub tau: usize,
    /// 1-based iteration index.
    pub iteration: usize,
    pub max_worker_flops: u64,
    pub master_flops: u64,
    pub wall_time_worker_max: f64,
    pub wall_time_master: f64,
    pub objective: f64,
    /// `‖w − w_serial‖ / ‖w_serial‖` at this iteration.
    pub trajectory_deviation: f64,
}

impl ExperimentRecord {
    pub fn fields(&self) -> Vec<String> {
        vec![
            self.task.to_string(),
            self.m.to_string(),
            self.t.to_string(),
            self.s.to_string(),
            self.adversary.clone(),
            self.tau.to_string(),
            self.iteration.to_string(),
            self.max_worker_flops.to_string(),
            self.master_flops.to_string(),
            format!("{:.16e}", self.wall_time_worker_max),
            format!("{:.16e}", self.wall_time_master),
            format!("{:.16e}", self.objective),
            format!("{:.16e}", self.trajectory_deviation),
        ]
    }
}

/// Runs every `t` (and every `τ` for coordinate descent) of `cfg`, writing
/// one CSV row per iteration to `out`.
pub fn run_experiment<W: Write>(cfg: &RunConfig, data: &Dataset, out: W) -> Result<Vec<ExperimentRecord>> {
    let mut writer = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    writer.write_record(CSV_HEADER).map_err(csv_err)?;
    let model = cfg.model(&data.x)?;
    let mut records = Vec::new();
    for &t in &cfg.ts {
        let taus: Vec<Option<f64>> = if cfg.task == Task::Cd { cfg.taus.iter().map(|f| Some(*f)).collect() } else { vec![None] };
        for tau in taus {
            let rows = run_one(cfg, data, &model, t, tau)?;
            for r in rows {
                writer.write_record(r.fields()).map_err(csv_err)?;
                records.push(r);
            }
        }
    }
    writer.flush()?;
    Ok(records)
}

fn run_one(cfg: &RunConfig, data: &Dataset, model: &ModelSpec, t: usize, tau: Option<f64>) -> Result<Vec<ExperimentRecord>> {
    let cluster = cfg.cluster(t)?;
    let (x, y) = (&data.x, data.y.as_slice());
    let d = x.cols();
    let mut rows = Vec::with_capacity(cfg.iterations);
    let mut record = |iteration: usize, tau: usize, metrics: Metrics, w: &[f64], serial: &[f64]| {
        rows.push(ExperimentRecord {
            task: cfg.task.name(),
            m: cfg.m,
            t,
            s: cfg.s,
            adversary: cfg.adversary.label(),
            tau,
            iteration,
            max_worker_flops: metrics.max_worker_flops(),
            master_flops: metrics.master_flops,
            wall_time_worker_max: metrics.max_worker_time().as_secs_f64(),
            wall_time_master: metrics.master_time.as_secs_f64(),
            objective: model.objective(x, y, w),
            trajectory_deviation: rel_err(w, serial),
        });
    };
    match cfg.task {
        Task::Cd => {
            let mut cd = CodedCd::new(x, y, cluster)?;
            let p2 = cd.blocks();
            let tau = ((tau.unwrap_or(1.0) * p2 as f64).ceil() as usize).clamp(1, p2);
            let geometry = cd.codebook().params;
            let mut state = cd.start(vec![0.0; d])?;
            let mut serial = state.w.clone();
            for it in 0..cfg.iterations {
                let blocks = round_robin(it, tau, p2);
                state = cd_iteration(&mut cd, &state, &blocks, model)?;
                serial = serial_cd(x, y, &serial, &shifted(model, it), &geometry, &[blocks]).pop().unwrap();
                record(it + 1, tau, cd.take_metrics(), &state.w, &serial);
            }
        }
        Task::Sgd => {
            let mut sgd = CodedSgd::new(x, y, cluster)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut state = GlmState::zeros(d);
            let mut serial = state.w.clone();
            for it in 0..cfg.iterations {
                let r = rng.random_range(0..x.rows());
                state = sgd_step_at(&mut sgd, &state, model, r)?;
                serial = serial_sgd(x, y, &serial, &shifted(model, it), &[r]).pop().unwrap();
                record(it + 1, 0, sgd.take_metrics(), &state.w, &serial);
            }
        }
        _ => {
            let mut glm = CodedGlm::new(x, y, cluster)?;
            let mut state = GlmState::zeros(d);
            let mut serial = state.w.clone();
            for it in 0..cfg.iterations {
                state = pgd_step(&mut glm, &state, model)?;
                serial = serial_pgd(x, y, &serial, &shifted(model, it), 1).pop().unwrap();
                record(it + 1, 0, glm.take_metrics(), &state.w, &serial);
            }
        }
    }
    Ok(rows)
}

/// `model` with its step schedule advanced to iteration `it`, for one-step
/// serial updates.
fn shifted(model: &ModelSpec, it: usize) -> ModelSpec {
    ModelSpec { step: byzcode::optim::StepSchedule::Constant(model.step.at(it)), ..model.clone() }
}

/// Outcome of one `verify` check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Randomized coded products on the configured cluster for each `t`:
/// exact recovery and exact localization of the workers that lied.
pub fn verify_products(cfg: &RunConfig, trials: usize) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for &t in &cfg.ts {
        let mut cluster = Cluster::new(cfg.cluster(t)?)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED);
        let q = cluster.q();
        let (mut worst, mut mislocated) = (0.0f64, 0usize);
        for _ in 0..trials {
            let rows = q * rng.random_range(1..5) + rng.random_range(0..q);
            let cols = rng.random_range(1..6);
            let a = Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng));
            let v: Vec<f64> = (0..cols).map(|_| StandardNormal.sample(&mut rng)).collect();
            let shares = encode(cluster.basis(), &a, Provenance::Data, &mut Flops::default())?;
            let round = cluster.run_round(&Request::Vector(v.clone()), |i, req, fl| match req {
                Request::Vector(u) => worker_product(&shares[i], u, fl),
                _ => unreachable!("only vector requests are sent"),
            })?;
            let seed = cluster.decode_seed(round.index);
            let out = decode(&round.responses, cluster.locator(), cluster.basis(), &shares[0].geometry(), seed, &mut Flops::default())?;
            worst = worst.max(rel_err(&out.product, &a.mul_vec(&v)));
            let lied: Vec<usize> = round
                .responses
                .iter()
                .filter(|r| r.payload.as_ref().is_some_and(|p| p != &round.honest[r.worker]))
                .map(|r| r.worker)
                .collect();
            if lied != out.corrupt {
                mislocated += 1;
            }
        }
        checks.push(Check {
            name: format!("coded products m={} t={t} s={}", cfg.m, cfg.s),
            passed: worst < 1e-8 && mislocated == 0,
            detail: format!("{trials} trials, worst relative error {worst:.3e}, {mislocated} mislocated"),
        });
    }
    Ok(checks)
}

/// Trajectory check over the records of [`run_experiment`].
pub fn verify_trajectories(records: &[ExperimentRecord]) -> Check {
    let worst = records.iter().map(|r| r.trajectory_deviation).fold(0.0, f64::max);
    let finite = records.iter().all(|r| r.trajectory_deviation.is_finite());
    Check {
        name: "trajectory matches serial".into(),
        passed: finite && worst < DEVIATION_LIMIT,
        detail: format!("{} iterations, worst deviation {worst:.3e}", records.len()),
    }
}
