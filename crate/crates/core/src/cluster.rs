//! Deterministic master–worker simulation: synchronous request/response
//! rounds with injected Byzantine payloads and stragglers.
//!
//! Which workers misbehave in a round is a pure function of the seed and the
//! round index (see [`replay`]). Workers' stored data is never modified; only
//! the messages they send are.

use crate::codec::{null_basis, BasisVariant, ErrorLocatorMatrix, NodeScheme, NullBasis};
use crate::error::{Error, Result};
use crate::linalg::Flops;
use crate::mvp::WorkerResponse;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use std::time::{Duration, Instant};

/// Stream reserved for the fixed corrupt set.
const FIXED_SET_STREAM: u64 = u64::MAX;
/// Keeps payload randomness independent of target selection.
const PAYLOAD_SALT: u64 = 0xA076_1D64_78BD_642F;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdversaryKind {
    Honest,
    /// Adds i.i.d. `N(0, σ²)` noise to every payload entry.
    GaussianNoise { sigma: f64 },
    /// Sends the negated payload.
    SignFlip,
    /// Sends a consistent-looking answer for a random request of the same shape.
    Decoy,
    /// Corrupts a random number (up to `t`) of workers, each with a random one
    /// of the attacks above (noise uses σ).
    AdaptiveRandomSubset { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Targeting {
    /// One set of `t` workers, fixed for the whole run.
    FixedSet,
    /// A fresh set each round.
    PerRound,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adversary {
    pub kind: AdversaryKind,
    pub targeting: Targeting,
}

impl Adversary {
    pub fn honest() -> Self {
        Adversary { kind: AdversaryKind::Honest, targeting: Targeting::PerRound }
    }

    pub fn per_round(kind: AdversaryKind) -> Self {
        Adversary { kind, targeting: Targeting::PerRound }
    }

    pub fn fixed(kind: AdversaryKind) -> Self {
        Adversary { kind, targeting: Targeting::FixedSet }
    }

    pub fn label(&self) -> String {
        let base = match self.kind {
            AdversaryKind::Honest => return "honest".into(),
            AdversaryKind::GaussianNoise { .. } => "gaussian",
            AdversaryKind::SignFlip => "sign-flip",
            AdversaryKind::Decoy => "decoy",
            AdversaryKind::AdaptiveRandomSubset { .. } => "adaptive",
        };
        match self.targeting {
            Targeting::FixedSet => format!("{base}-fixed"),
            Targeting::PerRound => base.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StragglerPolicy {
    None,
    /// `s` workers, chosen afresh each round, do not answer.
    RandomPerRound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    pub m: usize,
    /// Byzantine budget.
    pub t: usize,
    /// Straggler budget.
    pub s: usize,
    /// Redundancy parameter; `q = m/(1+ε)` coordinates per block.
    pub epsilon: f64,
    pub seed: u64,
    pub adversary: Adversary,
    pub stragglers: StragglerPolicy,
    pub scheme: NodeScheme,
}

impl ClusterConfig {
    /// Configuration with the least redundancy that covers `s + t` faults.
    pub fn new(m: usize, t: usize, s: usize, seed: u64) -> Result<Self> {
        let faults = s + t;
        if m < 2 {
            return Err(Error::InvalidWorkerCount(m));
        }
        if 2 * faults >= m {
            return Err(Error::InvalidThreshold { m, t: faults });
        }
        let cfg = ClusterConfig {
            m,
            t,
            s,
            epsilon: (2 * faults) as f64 / (m - 2 * faults) as f64,
            seed,
            adversary: Adversary::honest(),
            stragglers: if s > 0 { StragglerPolicy::RandomPerRound } else { StragglerPolicy::None },
            scheme: NodeScheme::Chebyshev,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_adversary(mut self, adversary: Adversary) -> Self {
        self.adversary = adversary;
        self
    }

    pub fn with_stragglers(mut self, policy: StragglerPolicy) -> Self {
        self.stragglers = policy;
        self
    }

    /// Faults the code corrects: `⌊(ε/(1+ε))·m/2⌋`.
    pub fn code_threshold(&self) -> usize {
        let x = self.epsilon / (1.0 + self.epsilon) * self.m as f64 / 2.0;
        (x + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::InvalidWorkerCount(self.m));
        }
        if !(0.0..=(self.m - 1) as f64).contains(&self.epsilon) {
            return Err(Error::InvalidParameter(format!("epsilon {} outside [0, m-1]", self.epsilon)));
        }
        if self.s + self.t > self.code_threshold() {
            return Err(Error::BudgetExceeded(format!(
                "s + t = {} exceeds the {} faults tolerated at epsilon {}",
                self.s + self.t,
                self.code_threshold(),
                self.epsilon
            )));
        }
        if let AdversaryKind::GaussianNoise { sigma } | AdversaryKind::AdaptiveRandomSubset { sigma } = self.adversary.kind {
            if !(sigma.is_finite() && sigma >= 0.0) {
                return Err(Error::InvalidParameter(format!("sigma {sigma} must be finite and nonnegative")));
            }
        }
        Ok(())
    }
}

/// Broadcast payload of one round.
#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Vector(Vec<f64>),
    /// A vector that is zero outside `indices`.
    Sparse { indices: Vec<usize>, values: Vec<f64> },
    /// A single index into `0..bound`.
    Index { index: usize, bound: usize },
    /// A vector together with a subset of parameter blocks and a step scale.
    Blocks { blocks: Vec<usize>, vector: Vec<f64>, scale: f64 },
}

impl Request {
    /// A random request of the same shape, used by the decoy adversary.
    fn decoy(&self, rng: &mut ChaCha8Rng) -> Request {
        let gauss = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(rng)).collect() };
        match self {
            Request::Vector(v) => Request::Vector(gauss(rng, v.len())),
            Request::Sparse { indices, values } => Request::Sparse { indices: indices.clone(), values: gauss(rng, values.len()) },
            Request::Index { index, bound } => {
                let mut other = rng.random_range(0..*bound);
                if *bound > 1 && other == *index {
                    other = (other + 1) % bound;
                }
                Request::Index { index: other, bound: *bound }
            }
            Request::Blocks { blocks, vector, scale } => {
                Request::Blocks { blocks: blocks.clone(), vector: gauss(rng, vector.len()), scale: *scale }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub corrupted: Vec<usize>,
    pub stragglers: Vec<usize>,
}

/// Corrupted and straggling workers of round `round`.
pub fn replay(config: &ClusterConfig, round: u64) -> Selection {
    let m = config.m;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(round);
    let count = match config.adversary.kind {
        AdversaryKind::Honest => 0,
        AdversaryKind::AdaptiveRandomSubset { .. } => rng.random_range(0..=config.t),
        _ => config.t,
    };
    let mut corrupted = match config.adversary.targeting {
        Targeting::PerRound => sample(&mut rng, m, count).into_vec(),
        Targeting::FixedSet => {
            let mut fixed_rng = ChaCha8Rng::seed_from_u64(config.seed);
            fixed_rng.set_stream(FIXED_SET_STREAM);
            let pool = sample(&mut fixed_rng, m, config.t).into_vec();
            sample(&mut rng, pool.len(), count).into_iter().map(|j| pool[j]).collect()
        }
    };
    corrupted.sort_unstable();
    let mut stragglers = match config.stragglers {
        StragglerPolicy::None => vec![],
        StragglerPolicy::RandomPerRound => {
            let others: Vec<usize> = (0..m).filter(|i| !corrupted.contains(i)).collect();
            let s = config.s.min(others.len());
            sample(&mut rng, others.len(), s).into_iter().map(|j| others[j]).collect()
        }
    };
    stragglers.sort_unstable();
    Selection { corrupted, stragglers }
}

/// Everything observed in one round.
#[derive(Debug, Clone)]
pub struct Round {
    pub index: u64,
    /// What the master received.
    pub responses: Vec<WorkerResponse>,
    /// What each worker actually computed (including stragglers and liars).
    pub honest: Vec<Vec<f64>>,
    pub selection: Selection,
    pub worker_flops: Vec<u64>,
    pub worker_times: Vec<Duration>,
}

impl Round {
    pub fn max_worker_flops(&self) -> u64 {
        self.worker_flops.iter().copied().max().unwrap_or(0)
    }

    pub fn max_worker_time(&self) -> Duration {
        self.worker_times.iter().copied().max().unwrap_or_default()
    }
}

/// The simulated cluster: the shared code, the adversary and a round counter.
#[derive(Debug, Clone)]
pub struct Cluster {
    config: ClusterConfig,
    locator: ErrorLocatorMatrix,
    basis: NullBasis,
    round: u64,
}

impl Cluster {
    pub fn new(config: ClusterConfig) -> Result<Self> {
        config.validate()?;
        let locator = ErrorLocatorMatrix::build(config.m, config.code_threshold(), config.scheme)?;
        let basis = null_basis(&locator, BasisVariant::RrefSparse);
        Ok(Cluster { config, locator, basis, round: 0 })
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.config
    }

    pub fn locator(&self) -> &ErrorLocatorMatrix {
        &self.locator
    }

    /// RREF null basis shared by all share sets built for this cluster.
    pub fn basis(&self) -> &NullBasis {
        &self.basis
    }

    pub fn q(&self) -> usize {
        self.basis.q()
    }

    /// Index of the next round.
    pub fn round(&self) -> u64 {
        self.round
    }

    /// Seed of the master's combination weights for round `round`.
    pub fn decode_seed(&self, round: u64) -> u64 {
        self.config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(round)
    }

    /// Broadcasts `request`, lets every worker run `compute`, and applies the
    /// adversary and straggler selection of this round.
    pub fn run_round<F>(&mut self, request: &Request, compute: F) -> Result<Round>
    where
        F: Fn(usize, &Request, &mut Flops) -> Result<Vec<f64>>,
    {
        let index = self.round;
        self.round += 1;
        let selection = replay(&self.config, index);
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ PAYLOAD_SALT);
        rng.set_stream(index);

        let m = self.config.m;
        let mut honest = Vec::with_capacity(m);
        let mut worker_flops = Vec::with_capacity(m);
        let mut worker_times = Vec::with_capacity(m);
        for i in 0..m {
            let mut flops = Flops::default();
            let start = Instant::now();
            honest.push(compute(i, request, &mut flops)?);
            worker_times.push(start.elapsed());
            worker_flops.push(flops.get());
        }

        let mut responses = Vec::with_capacity(m);
        for (i, truth) in honest.iter().enumerate() {
            let payload = if selection.stragglers.contains(&i) {
                None
            } else if selection.corrupted.contains(&i) {
                Some(self.corrupt(i, truth, request, &compute, &mut rng)?)
            } else {
                Some(truth.clone())
            };
            responses.push(WorkerResponse { worker: i, payload });
        }
        Ok(Round { index, responses, honest, selection, worker_flops, worker_times })
    }

    fn corrupt<F>(&self, worker: usize, truth: &[f64], request: &Request, compute: &F, rng: &mut ChaCha8Rng) -> Result<Vec<f64>>
    where
        F: Fn(usize, &Request, &mut Flops) -> Result<Vec<f64>>,
    {
        let kind = match self.config.adversary.kind {
            AdversaryKind::AdaptiveRandomSubset { sigma } => match rng.random_range(0..3) {
                0 => AdversaryKind::GaussianNoise { sigma },
                1 => AdversaryKind::SignFlip,
                _ => AdversaryKind::Decoy,
            },
            k => k,
        };
        Ok(match kind {
            AdversaryKind::Honest | AdversaryKind::AdaptiveRandomSubset { .. } => truth.to_vec(),
            AdversaryKind::GaussianNoise { sigma } => {
                let noise = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
                truth.iter().map(|x| x + noise.sample(rng)).collect()
            }
            AdversaryKind::SignFlip => truth.iter().map(|x| -x).collect(),
            AdversaryKind::Decoy => compute(worker, &request.decoy(rng), &mut Flops::default())?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn echo(i: usize, req: &Request, _: &mut Flops) -> Result<Vec<f64>> {
        match req {
            Request::Vector(v) => Ok(v.iter().map(|x| x * (i + 1) as f64).collect()),
            _ => unreachable!(),
        }
    }

    #[test]
    fn honest_cluster_returns_truth() {
        let mut c = Cluster::new(ClusterConfig::new(7, 2, 0, 1).unwrap()).unwrap();
        let r = c.run_round(&Request::Vector(vec![1.0, 2.0]), echo).unwrap();
        for (resp, truth) in r.responses.iter().zip(&r.honest) {
            assert_eq!(resp.payload.as_ref(), Some(truth));
        }
        assert_eq!(c.round(), 1);
    }

    #[test]
    fn stragglers_are_absent() {
        let cfg = ClusterConfig::new(15, 1, 2, 9).unwrap().with_adversary(Adversary::per_round(AdversaryKind::SignFlip));
        let mut c = Cluster::new(cfg).unwrap();
        for _ in 0..20 {
            let r = c.run_round(&Request::Vector(vec![1.0]), echo).unwrap();
            assert_eq!(r.responses.iter().filter(|x| x.payload.is_none()).count(), 2);
            assert_eq!(r.selection.corrupted.len(), 1);
            assert!(r.selection.stragglers.iter().all(|s| !r.selection.corrupted.contains(s)));
        }
    }

    #[test]
    fn budget_is_validated() {
        assert!(ClusterConfig::new(15, 5, 3, 0).is_err());
        let mut cfg = ClusterConfig::new(15, 3, 0, 0).unwrap();
        cfg.s = 1;
        assert!(cfg.validate().is_err());
        cfg.epsilon = 14.0;
        assert_eq!(cfg.code_threshold(), 7);
        assert!(cfg.validate().is_ok());
        cfg.epsilon = 15.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn minimal_epsilon_matches_budget() {
        for m in 3..20 {
            for t in 0..=(m - 1) / 2 {
                assert_eq!(ClusterConfig::new(m, t, 0, 0).unwrap().code_threshold(), t);
            }
        }
    }

    #[test]
    fn replay_is_deterministic() {
        let cfg = ClusterConfig::new(15, 3, 1, 42).unwrap().with_adversary(Adversary::per_round(AdversaryKind::Decoy));
        for round in 0..50 {
            assert_eq!(replay(&cfg, round), replay(&cfg, round));
        }
    }

    #[test]
    fn different_seeds_pick_different_sets() {
        let pick = |seed| {
            let cfg = ClusterConfig::new(15, 3, 0, seed).unwrap().with_adversary(Adversary::per_round(AdversaryKind::Decoy));
            replay(&cfg, 0).corrupted
        };
        let reference = pick(0);
        let collisions = (1..1000).filter(|&s| pick(s) == reference).count();
        // 455 possible sets, so about two collisions are expected.
        assert!(collisions <= 12, "{collisions} collisions");
    }

    #[test]
    fn fixed_targeting_keeps_one_set() {
        let cfg = ClusterConfig::new(15, 4, 0, 5).unwrap().with_adversary(Adversary::fixed(AdversaryKind::SignFlip));
        let first = replay(&cfg, 0).corrupted;
        assert_eq!(first.len(), 4);
        for round in 1..30 {
            assert_eq!(replay(&cfg, round).corrupted, first);
        }
    }

    #[test]
    fn adaptive_stays_within_budget() {
        let cfg = ClusterConfig::new(11, 4, 0, 3)
            .unwrap()
            .with_adversary(Adversary::per_round(AdversaryKind::AdaptiveRandomSubset { sigma: 10.0 }));
        let sizes: Vec<usize> = (0..200).map(|r| replay(&cfg, r).corrupted.len()).collect();
        assert!(sizes.iter().all(|&s| s <= 4));
        assert!(sizes.contains(&0) && sizes.contains(&4));
    }

    #[test]
    fn decoy_index_differs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            match (Request::Index { index: 3, bound: 5 }).decoy(&mut rng) {
                Request::Index { index, bound } => assert!(index != 3 && index < bound),
                _ => unreachable!(),
            }
        }
    }
}
