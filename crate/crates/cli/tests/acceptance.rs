//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use byzcode::cluster::{Adversary, AdversaryKind, Cluster, ClusterConfig, Request};
use byzcode::codec::{null_basis, recover_support, BasisVariant, ErrorLocatorMatrix, NodeScheme, DEFAULT_TOL};
use byzcode::encoder::{append_column, append_row, encode, BlockGeometry, EncodedShare, Provenance};
use byzcode::linalg::{max_abs_diff, rank, rel_err, Flops, Matrix};
use byzcode::mvp::{decode, worker_product, WorkerResponse};
use byzcode::optim::{
    cd_iteration, default_step, pgd_step, round_robin, serial_cd, serial_pgd, serial_sgd, sgd_step_at, CodedCd, CodedGlm, CodedSgd,
    GlmState, Loss, ModelSpec, Regularizer, StepSchedule,
};
use byzsim::{gen_dataset, Dataset};
use common::exhaustive_support;
use nalgebra::DVector;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::process::ExitCode;
use std::time::Instant;

type Outcome = Result<String, String>;

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Workers whose sent payload differs from what they computed.
fn liars(responses: &[WorkerResponse], honest: &[Vec<f64>]) -> Vec<usize> {
    responses.iter().filter(|r| r.payload.as_ref().is_some_and(|p| p != &honest[r.worker])).map(|r| r.worker).collect()
}

fn exact_products() -> Outcome {
    let start = Instant::now();
    let (mut worst, mut mislocated, mut runs) = (0.0f64, 0usize, 0usize);
    for m in [5usize, 10, 15, 31] {
        for t in 0..=(m - 1) / 2 {
            let locator = ErrorLocatorMatrix::build(m, t, NodeScheme::Chebyshev).unwrap();
            let basis = null_basis(&locator, BasisVariant::RrefSparse);
            let q = basis.q();
            let mut rng = ChaCha8Rng::seed_from_u64((m * 1000 + t) as u64);
            for trial in 0..500 {
                let rows = q * rng.random_range(1..4) + rng.random_range(0..q);
                let cols = rng.random_range(1..5);
                let a = gaussian(&mut rng, rows, cols);
                let v = gaussian_vec(&mut rng, cols);
                let decoy = gaussian_vec(&mut rng, cols);
                let shares = encode(&basis, &a, Provenance::Data, &mut Flops::default()).unwrap();
                let bad = sample(&mut rng, m, t).into_vec();
                let mut honest = Vec::new();
                let mut responses = Vec::new();
                for sh in &shares {
                    let truth = worker_product(sh, &v, &mut Flops::default()).unwrap();
                    let sent = if !bad.contains(&sh.worker()) {
                        truth.clone()
                    } else {
                        match trial % 3 {
                            0 => truth
                                .iter()
                                .map(|x| {
                                    let z: f64 = StandardNormal.sample(&mut rng);
                                    x + 100.0 * z
                                })
                                .collect(),
                            1 => truth.iter().map(|x| -x).collect(),
                            _ => worker_product(sh, &decoy, &mut Flops::default()).unwrap(),
                        }
                    };
                    responses.push(WorkerResponse { worker: sh.worker(), payload: Some(sent) });
                    honest.push(truth);
                }
                runs += 1;
                match decode(&responses, &locator, &basis, &shares[0].geometry(), trial, &mut Flops::default()) {
                    Ok(out) => {
                        worst = worst.max(rel_err(&out.product, &a.mul_vec(&v)));
                        if out.corrupt != liars(&responses, &honest) {
                            mislocated += 1;
                        }
                    }
                    Err(_) => mislocated += 1,
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst < 1e-8 && mislocated == 0 && secs < 120.0,
        format!("{runs} decodes, worst rel err {worst:.2e}, {mislocated} failed or mislocated, {secs:.1}s"),
    )
}

fn erasures_and_errors() -> Outcome {
    let kinds = [AdversaryKind::GaussianNoise { sigma: 100.0 }, AdversaryKind::SignFlip, AdversaryKind::Decoy];
    let (mut worst, mut failures, mut runs) = (0.0f64, 0usize, 0usize);
    for t in 0..=7usize {
        for s in 0..=7 - t {
            let mut clusters: Vec<Cluster> = kinds
                .iter()
                .map(|&k| Cluster::new(ClusterConfig::new(15, t, s, (t * 10 + s) as u64).unwrap().with_adversary(Adversary::per_round(k))).unwrap())
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64((t * 100 + s) as u64);
            for trial in 0..100 {
                let cluster = &mut clusters[trial % 3];
                let q = cluster.q();
                let rows = q * rng.random_range(1..4) + rng.random_range(0..q);
                let cols = rng.random_range(1..5);
                let a = gaussian(&mut rng, rows, cols);
                let v = gaussian_vec(&mut rng, cols);
                let shares = encode(cluster.basis(), &a, Provenance::Data, &mut Flops::default()).unwrap();
                let round = cluster
                    .run_round(&Request::Vector(v.clone()), |i, req, fl| match req {
                        Request::Vector(u) => worker_product(&shares[i], u, fl),
                        _ => unreachable!(),
                    })
                    .unwrap();
                runs += 1;
                let seed = cluster.decode_seed(round.index);
                match decode(&round.responses, cluster.locator(), cluster.basis(), &shares[0].geometry(), seed, &mut Flops::default()) {
                    Ok(out) if out.corrupt == liars(&round.responses, &round.honest) && out.erased == round.selection.stragglers => {
                        worst = worst.max(rel_err(&out.product, &a.mul_vec(&v)));
                    }
                    _ => failures += 1,
                }
            }
        }
    }
    check(worst < 1e-8 && failures == 0, format!("{runs} rounds over s + t <= 7, worst rel err {worst:.2e}, {failures} failures"))
}

fn support_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut disagreements = 0;
    for _ in 0..1000 {
        let t = rng.random_range(1..=2);
        let m = rng.random_range(2 * t + 1..=10);
        let locator = ErrorLocatorMatrix::build(m, t, NodeScheme::Chebyshev).unwrap();
        let mut e = vec![0.0; m];
        let count = rng.random_range(0..=t);
        for i in sample(&mut rng, m, count) {
            let mag: f64 = rng.random_range(1.0..=100.0);
            e[i] = if rng.random() { mag } else { -mag };
        }
        let s = locator.syndrome(&e);
        let oracle = exhaustive_support(&locator.to_matrix().to_nalgebra(), &DVector::from_vec(s.clone()), t);
        let got = recover_support(&locator, &s, t, DEFAULT_TOL).unwrap();
        if got.declared_failure || Some(got.support) != oracle {
            disagreements += 1;
        }
    }
    check(disagreements == 0, format!("1000 instances, {disagreements} disagreements"))
}

fn pgd_trajectories(data: &Dataset) -> Outcome {
    let (x, y) = (&data.x, data.y.as_slice());
    let step = StepSchedule::Constant(default_step(x));
    let lambda = 0.1 * inf_norm(&x.tr_mul_vec(y));
    let models = [
        ModelSpec::new(Loss::Squared, Regularizer::None, step.clone()).unwrap(),
        ModelSpec::new(Loss::Squared, Regularizer::L1(lambda), step.clone()).unwrap(),
        ModelSpec::new(Loss::Squared, Regularizer::Box { lo: -1.0, hi: 1.0 }, step).unwrap(),
    ];
    let d = x.cols();
    let serial: Vec<Vec<Vec<f64>>> = models.iter().map(|md| serial_pgd(x, y, &vec![0.0; d], md, 50)).collect();
    let mut worst = 0.0f64;
    for t in 1..=7 {
        let cfg = ClusterConfig::new(15, t, 0, t as u64).unwrap().with_adversary(Adversary::per_round(AdversaryKind::GaussianNoise { sigma: 100.0 }));
        let mut glm = CodedGlm::new(x, y, cfg).map_err(|e| e.to_string())?;
        for (model, reference) in models.iter().zip(&serial) {
            let mut state = GlmState::zeros(d);
            for want in &reference[1..] {
                state = pgd_step(&mut glm, &state, model).map_err(|e| format!("t={t}: {e}"))?;
                worst = worst.max(rel_err(&state.w, want));
            }
        }
    }
    check(worst < 1e-6, format!("n=10000 d=250 m=15, t=1..7, 3 objectives x 50 iterations, worst deviation {worst:.2e}"))
}

fn cd_equivalence(data: &Dataset) -> Outcome {
    let (x, y) = (&data.x, data.y.as_slice());
    let model = ModelSpec::new(Loss::Squared, Regularizer::None, StepSchedule::Constant(default_step(x))).unwrap();
    let d = x.cols();
    let (mut worst_w, mut worst_v, mut runs) = (0.0f64, 0.0f64, 0);
    for t in 1..=6 {
        let cfg = ClusterConfig::new(15, t, 0, 50 + t as u64).unwrap().with_adversary(Adversary::per_round(AdversaryKind::GaussianNoise { sigma: 100.0 }));
        let mut cd = CodedCd::new(x, y, cfg).map_err(|e| e.to_string())?;
        let p2 = cd.blocks();
        let geometry = cd.codebook().params;
        let mut taus = vec![1, (0.1 * p2 as f64).ceil() as usize, (0.25 * p2 as f64).ceil() as usize];
        taus.dedup();
        for tau in taus {
            let mut state = cd.start(vec![0.0; d]).map_err(|e| e.to_string())?;
            let mut serial = state.w.clone();
            for it in 0..100 {
                let blocks = round_robin(it, tau, p2);
                state = cd_iteration(&mut cd, &state, &blocks, &model).map_err(|e| format!("t={t} tau={tau}: {e}"))?;
                serial = serial_cd(x, y, &serial, &model, &geometry, &[blocks]).pop().unwrap();
                let scale = inf_norm(&serial).max(1.0);
                worst_w = worst_w.max(max_abs_diff(&state.w, &serial) / scale);
                worst_v = worst_v.max(cd.invariant_gap(&state.w) / scale);
            }
            runs += 1;
        }
    }
    check(
        worst_w < 1e-8 && worst_v < 1e-8,
        format!("{runs} runs of 100 iterations, worst w deviation {worst_w:.2e}, worst invariant gap {worst_v:.2e}"),
    )
}

fn flop_scaling(data: &Dataset) -> Outcome {
    let (x, y) = (&data.x, data.y.as_slice());
    let (n, d) = x.shape();
    let model = ModelSpec::new(Loss::Squared, Regularizer::None, StepSchedule::Constant(default_step(x))).unwrap();

    let mut gd_ratio = Vec::new();
    let mut gd_t1 = 0.0;
    let mut gd_secs = Vec::new();
    for t in 1..=7 {
        let cfg = ClusterConfig::new(15, t, 0, t as u64).unwrap();
        let eps = cfg.epsilon;
        let mut glm = CodedGlm::new(x, y, cfg).map_err(|e| e.to_string())?;
        pgd_step(&mut glm, &GlmState::zeros(d), &model).map_err(|e| e.to_string())?;
        let m = glm.take_metrics();
        let flops = m.max_worker_flops() as f64;
        gd_secs.push(m.max_worker_time().as_secs_f64());
        if t == 1 {
            gd_t1 = flops;
        }
        gd_ratio.push(flops / ((1.0 + eps) * (n * d) as f64 / 15.0));
    }
    let mean = gd_ratio.iter().sum::<f64>() / gd_ratio.len() as f64;
    let gd_linear = gd_ratio.iter().all(|r| (r - mean).abs() <= 0.2 * mean);

    let mut cd = CodedCd::new(x, y, ClusterConfig::new(15, 1, 0, 1).unwrap()).map_err(|e| e.to_string())?;
    let p2 = cd.blocks();
    let mut taus: Vec<usize> = [0.1, 0.25, 0.5, 1.0].iter().map(|f| ((f * p2 as f64).ceil() as usize).max(1)).collect();
    taus.insert(0, 1);
    taus.dedup();
    let mut per_iter = Vec::new();
    let mut cd_secs = Vec::new();
    for &tau in &taus {
        let mut state = cd.start(vec![0.0; d]).map_err(|e| e.to_string())?;
        // The first iteration starts from w = 0 and skips the X·w round.
        state = cd_iteration(&mut cd, &state, &round_robin(0, tau, p2), &model).map_err(|e| e.to_string())?;
        cd.take_metrics();
        let mut total = 0.0;
        let mut secs = 0.0;
        for it in 1..5 {
            state = cd_iteration(&mut cd, &state, &round_robin(it, tau, p2), &model).map_err(|e| e.to_string())?;
            let m = cd.take_metrics();
            total += m.max_worker_flops() as f64;
            secs += m.max_worker_time().as_secs_f64();
        }
        per_iter.push(total / 4.0);
        cd_secs.push(secs / 4.0);
    }
    let slope = taus.iter().zip(&per_iter).map(|(&t, f)| t as f64 * f).sum::<f64>() / taus.iter().map(|&t| (t * t) as f64).sum::<f64>();
    let cd_linear = taus.iter().zip(&per_iter).all(|(&t, f)| (f - slope * t as f64).abs() <= 0.2 * slope * t as f64);
    let tenth = taus.iter().position(|&t| t == ((0.1 * p2 as f64).ceil() as usize).max(1)).unwrap();
    let share = per_iter[tenth] / gd_t1;
    check(
        gd_linear && cd_linear && share <= 0.15,
        format!(
            "CD flops/iter {:?} for tau {:?} (slope {slope:.0}), GD flops/(1+eps)nd/m {:?}, CD(0.1p2)/GD = {share:.3}; \
             wall seconds (not asserted) CD {:?} GD {:?}",
            per_iter.iter().map(|f| *f as u64).collect::<Vec<_>>(),
            taus,
            gd_ratio.iter().map(|r| (r * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            cd_secs.iter().map(|s| format!("{s:.1e}")).collect::<Vec<_>>(),
            gd_secs.iter().map(|s| format!("{s:.1e}")).collect::<Vec<_>>(),
        ),
    )
}

fn storage() -> Outcome {
    let mut mismatches = Vec::new();
    let mut at_15_5 = 0.0;
    for m in [5usize, 8, 10, 15, 31] {
        for t in 0..=(m - 1) / 2 {
            let q = m - 2 * t;
            let x = Matrix::from_fn(4 * q, 3 * q, |i, j| (i + 2 * j) as f64);
            let y = vec![0.0; 4 * q];
            let glm = CodedGlm::new(&x, &y, ClusterConfig::new(m, t, 0, 0).unwrap()).unwrap();
            let got = glm.storage().redundancy;
            if got != (2 * m) as f64 / q as f64 {
                mismatches.push((m, t, got));
            }
            if (m, t) == (15, 5) {
                at_15_5 = got;
            }
        }
    }
    check(mismatches.is_empty() && at_15_5 == 6.0, format!("m=15 t=5 gives {at_15_5}, mismatches {mismatches:?}"))
}

fn sgd_exactness(data: &Dataset) -> Outcome {
    let (x, y) = (&data.x, data.y.as_slice());
    let (n, d) = x.shape();
    let widest = (0..n).map(|r| x.row(r).iter().map(|v| v * v).sum::<f64>()).fold(0.0, f64::max);
    let model = ModelSpec::new(Loss::Squared, Regularizer::None, StepSchedule::Constant(1.0 / widest)).unwrap();
    let cfg = ClusterConfig::new(15, 7, 0, 8).unwrap().with_adversary(Adversary::per_round(AdversaryKind::Decoy));
    let mut sgd = CodedSgd::new(x, y, cfg).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let indices: Vec<usize> = (0..1000).map(|_| rng.random_range(0..n)).collect();
    let serial = serial_sgd(x, y, &vec![0.0; d], &model, &indices);
    let mut state = GlmState::zeros(d);
    let (mut worst_row, mut worst_w) = (0.0f64, 0.0f64);
    for (k, &r) in indices.iter().enumerate() {
        state = sgd_step_at(&mut sgd, &state, &model, r).map_err(|e| e.to_string())?;
        let (_, row) = sgd.last_sample().unwrap();
        worst_row = worst_row.max(max_abs_diff(row, x.row(r)));
        worst_w = worst_w.max(max_abs_diff(&state.w, &serial[k + 1]) / inf_norm(&serial[k + 1]).max(1.0));
    }
    check(
        worst_row <= 1e-10 && worst_w <= 1e-8,
        format!("1000 steps at m=15 t=7, worst row error {worst_row:.2e}, worst trajectory deviation {worst_w:.2e}"),
    )
}

fn streaming() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut worst, mut worst_flop_ratio) = (0.0f64, 0.0f64);
    for _ in 0..500 {
        let m = rng.random_range(2..=16);
        let t = rng.random_range(0..=(m - 1) / 2);
        let basis = null_basis(&ErrorLocatorMatrix::build(m, t, NodeScheme::Chebyshev).unwrap(), BasisVariant::RrefSparse);
        let (rows, cols) = (rng.random_range(1..10), rng.random_range(1..6));
        let mut source = gaussian(&mut rng, rows, cols);
        let mut shares: Vec<EncodedShare> = encode(&basis, &source, Provenance::Data, &mut Flops::default()).unwrap();
        for _ in 0..rng.random_range(1..12) {
            let mut flops = Flops::default();
            let len = if rng.random() {
                let row = gaussian_vec(&mut rng, source.cols());
                append_row(&mut shares, &row, &mut flops).unwrap();
                source.push_row(&row);
                row.len()
            } else {
                let col = gaussian_vec(&mut rng, source.rows());
                append_column(&mut shares, &col, &mut flops).unwrap();
                source.push_column(&col);
                col.len()
            };
            worst_flop_ratio = worst_flop_ratio.max(flops.get() as f64 / ((2 * t + 1) * len) as f64);
        }
        let batch = encode(&basis, &source, Provenance::Data, &mut Flops::default()).unwrap();
        for (s, b) in shares.iter().zip(&batch) {
            worst = worst.max(rel_err(s.matrix.as_slice(), b.matrix.as_slice()));
        }
    }
    check(
        worst <= 1e-12 && worst_flop_ratio <= 2.0,
        format!("500 sequences, worst rel err {worst:.2e}, max flops per append / ((2t+1)·len) = {worst_flop_ratio:.2} (bound 2)"),
    )
}

fn rank_claims() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut claim1, mut claim2, mut claim3) = (0, 0, 0);
    let mut worst_product = 0.0f64;
    for _ in 0..1000 {
        let m = rng.random_range(2..=32);
        let t = rng.random_range(0..=(m - 1) / 2);
        let locator = ErrorLocatorMatrix::build(m, t, NodeScheme::Chebyshev).unwrap();
        let basis = null_basis(&locator, BasisVariant::RrefSparse);
        let q = basis.q();
        let mut honest = sample(&mut rng, m, m - t).into_vec();
        honest.sort_unstable();

        // Any m − t rows of the null basis are independent.
        if rank(&basis.matrix().select(&honest, q), 1e-8) != q {
            claim1 += 1;
        }

        // Every assembled block system is annihilated by the locator.
        let geometry = BlockGeometry::new(q * rng.random_range(1..4) + rng.random_range(0..q), q).unwrap();
        let f = locator.to_matrix();
        for j in 0..geometry.p {
            let width = geometry.width(j);
            let block = Matrix::from_fn(m, width, |i, c| basis.coeffs(i)[c]);
            let prod = f.matmul(&block);
            let rel = prod.frobenius() / (f.frobenius() * block.frobenius());
            worst_product = worst_product.max(rel);
            if rel > 1e-10 {
                claim2 += 1;
            }
        }

        // The honest workers' stacked encoding matrices have full column rank.
        let mut stacked = Matrix::zeros(0, geometry.rows);
        for &i in &honest {
            let s = byzcode::encoder::WorkerEncoder::new(&basis, i, geometry).dense();
            for r in 0..s.rows() {
                stacked.push_row(s.row(r));
            }
        }
        if rank(&stacked, 1e-8) != geometry.rows {
            claim3 += 1;
        }
    }
    check(
        claim1 + claim2 + claim3 == 0,
        format!("1000 random codes with m <= 32: deficiencies {claim1}/{claim2}/{claim3}, worst |F·S| relative {worst_product:.1e}"),
    )
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let data = gen_dataset(10_000, 250, 2024);
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("exact coded matrix-vector products", Box::new(exact_products)),
        ("erasures plus errors within budget", Box::new(erasures_and_errors)),
        ("support recovery equals exhaustive oracle", Box::new(support_oracle)),
        ("coded PGD tracks serial PGD", Box::new(|| pgd_trajectories(&data))),
        ("coded CD tracks serial CD with invariant", Box::new(|| cd_equivalence(&data))),
        ("flop counts scale as predicted", Box::new(|| flop_scaling(&data))),
        ("storage redundancy 2m/(m-2t)", Box::new(storage)),
        ("coded SGD recovers samples exactly", Box::new(|| sgd_exactness(&data))),
        ("streaming appends equal batch encoding", Box::new(streaming)),
        ("rank claims on honest subsets", Box::new(rank_claims)),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{}] {name} ({secs:.1}s): {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{}] {name} ({secs:.1}s): {detail}", k + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
