//! Losses, gradients, partitions and the two training loops.

use multiairfed::learn::{
    global_loss, partition_dataset, quadratic_constants, run, run_hierfed, run_multiairfed, Algorithm, Batch, Dataset,
    LearnParams, PartitionKind, Task, Transmission,
};
use multiairfed::rng::substream;
use multiairfed::spatial::{sample_topology, SystemParams, Topology};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn regression(n: usize, p: usize, seed: u64) -> Dataset {
    Dataset::linear_regression(n, p, 4.0, 0.1, &mut substream(seed, 0))
}

fn blobs(n: usize, seed: u64) -> Dataset {
    Dataset::gaussian_blobs(n, 4, 3, 2.0, &mut substream(seed, 0))
}

fn random_w(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, 5);
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn check_finite_difference(data: &Dataset, seed: u64) {
    let idx: Vec<usize> = (0..data.n).collect();
    let w = random_w(data.dim(), seed);
    let u = random_w(data.dim(), seed + 1);
    let g = data.mean_grad(&w, &idx);
    let eps = 1e-6;
    let shift = |s: f64| w.iter().zip(&u).map(|(a, b)| a + s * b).collect::<Vec<_>>();
    let fd = (data.mean_loss(&shift(eps), &idx) - data.mean_loss(&shift(-eps), &idx)) / (2.0 * eps);
    let an: f64 = g.iter().zip(&u).map(|(a, b)| a * b).sum();
    assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "fd {fd} vs analytic {an}");
}

#[test]
fn gradients_match_central_differences() {
    for seed in 0..5 {
        check_finite_difference(&regression(60, 5, seed), seed);
        check_finite_difference(&blobs(60, seed), seed);
    }
}

#[test]
fn full_batch_gradient_is_mean_of_sample_gradients() {
    for data in [regression(40, 3, 1), blobs(40, 1)] {
        let idx: Vec<usize> = (0..data.n).collect();
        let w = random_w(data.dim(), 2);
        let mut acc = vec![0.0; data.dim()];
        for &i in &idx {
            let mut gi = vec![0.0; data.dim()];
            data.add_sample_grad(&w, i, 1.0, &mut gi);
            acc.iter_mut().zip(&gi).for_each(|(a, g)| *a += g / data.n as f64);
        }
        for (a, b) in acc.iter().zip(data.mean_grad(&w, &idx)) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }
}

fn iid_task(data: Dataset, m: usize, c: usize) -> Task {
    let shards = partition_dataset(&data, PartitionKind::Iid, m, c, 3).unwrap();
    Task { train: data, shards, test: None }
}

/// Hessian-vector product of a quadratic from two gradients.
fn hess_vec(data: &Dataset, idx: &[usize], v: &[f64]) -> Vec<f64> {
    let zero = vec![0.0; v.len()];
    let g0 = data.mean_grad(&zero, idx);
    data.mean_grad(v, idx).iter().zip(&g0).map(|(a, b)| a - b).collect()
}

fn power_iteration(apply: impl Fn(&[f64]) -> Vec<f64>, dim: usize) -> f64 {
    let mut v = random_w(dim, 77);
    let mut lambda = 0.0;
    for _ in 0..2000 {
        let hv = apply(&v);
        let norm = hv.iter().map(|x| x * x).sum::<f64>().sqrt();
        lambda = hv.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / v.iter().map(|x| x * x).sum::<f64>();
        v = hv.iter().map(|x| x / norm).collect();
    }
    lambda
}

#[test]
fn quadratic_constants_agree_with_gradient_oracles() {
    let task = iid_task(regression(240, 4, 4), 4, 2);
    let data = &task.train;
    let dim = data.dim();
    let qc = quadratic_constants(data, &task.shards, 3, 1.5).unwrap();
    let g_star: Vec<f64> = {
        let per: Vec<Vec<f64>> = task.shards.iter().map(|s| data.mean_grad(&qc.w_star, s)).collect();
        (0..dim).map(|j| per.iter().map(|g| g[j]).sum::<f64>() / per.len() as f64).collect()
    };
    assert!(g_star.iter().all(|g| g.abs() < 1e-10), "global gradient at w* {g_star:?}");
    assert!((global_loss(&task, &qc.w_star) - qc.f_star).abs() < 1e-12);

    let l = task.shards.iter().map(|s| power_iteration(|v| hess_vec(data, s, v), dim)).fold(0.0, f64::max);
    assert!((l - qc.l).abs() < 1e-8 * qc.l, "L {l} vs {}", qc.l);
    let global = |v: &[f64]| {
        let per: Vec<Vec<f64>> = task.shards.iter().map(|s| hess_vec(data, s, v)).collect();
        (0..dim).map(|j| qc.l * v[j] - per.iter().map(|h| h[j]).sum::<f64>() / per.len() as f64).collect()
    };
    let delta = qc.l - power_iteration(global, dim);
    assert!((delta - qc.delta).abs() < 1e-6 * qc.l, "delta {delta} vs {}", qc.delta);

    // σ² bounds B·E‖g_y − ∇F‖² for with-replacement minibatches anywhere in the ball.
    let b = 3.0;
    let mut rng = substream(8, 0);
    for _ in 0..200 {
        let dir = random_w(dim, rng.gen());
        let n = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        let r = qc.radius * rng.gen::<f64>();
        let w: Vec<f64> = qc.w_star.iter().zip(&dir).map(|(s, d)| s + r * d / n).collect();
        let grads: Vec<Vec<f64>> = task.shards.iter().map(|s| data.mean_grad(&w, s)).collect();
        let full: Vec<f64> = (0..dim).map(|j| grads.iter().map(|g| g[j]).sum::<f64>() / grads.len() as f64).collect();
        for (s, gy) in task.shards.iter().zip(&grads) {
            let drift: f64 = gy.iter().zip(&full).map(|(a, b)| (a - b).powi(2)).sum();
            let spread = s
                .iter()
                .map(|&i| {
                    let mut gi = vec![0.0; dim];
                    data.add_sample_grad(&w, i, 1.0, &mut gi);
                    gi.iter().zip(gy).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
                })
                .sum::<f64>()
                / s.len() as f64;
            let exact = b * drift + spread;
            assert!(exact <= qc.sigma2 * (1.0 + 1e-9), "{exact} exceeds σ² {}", qc.sigma2);
        }
    }
}

fn isolated_topology(m: usize) -> (SystemParams, Topology) {
    let p = SystemParams { lambda_p: 0.0, c: 1, m, ..SystemParams::reference(1e-7) };
    let t = sample_topology(&p, 1).unwrap();
    (p, t)
}

fn orthogonal(mu: f64, tau: usize, gamma: usize, rounds: usize) -> LearnParams {
    LearnParams { mu, tau, gamma, rounds, transmission: Transmission::Orthogonal, ..LearnParams::reference() }
}

#[test]
fn zero_learning_rate_keeps_the_initial_model() {
    let (p, t) = isolated_topology(5);
    let task = iid_task(regression(100, 3, 2), 5, 1);
    let init = vec![0.3, -0.2, 0.1];
    let learn = LearnParams { mu: 0.0, init: Some(init.clone()), ..orthogonal(0.1, 2, 1, 3) };
    for alg in [Algorithm::MultiAirFed, Algorithm::HierFed] {
        let trace = run(&t, &p, &LearnParams { algorithm: alg, ..learn.clone() }, &task, 3).unwrap();
        assert!(trace.final_models.iter().all(|w| w == &init));
    }
    let negative = LearnParams { mu: -0.1, ..learn };
    assert!(run(&t, &p, &negative, &task, 1).is_err());
}

#[test]
fn orthogonal_single_step_is_gradient_descent() {
    let (p, t) = isolated_topology(6);
    let task = iid_task(regression(120, 4, 3), 6, 1);
    let mu = 0.05;
    let rounds = 15;
    let trace = run_multiairfed(&t, &p, &orthogonal(mu, 1, 0, rounds), &task, 4).unwrap();
    let mut w = vec![0.0; 4];
    for round in 0..rounds {
        let per: Vec<Vec<f64>> = task.shards.iter().map(|s| task.train.mean_grad(&w, s)).collect();
        for j in 0..w.len() {
            w[j] -= mu * per.iter().map(|g| g[j]).sum::<f64>() / per.len() as f64;
        }
        let got = &trace.reference_models[round];
        for (a, b) in got.iter().zip(&w) {
            assert!((a - b).abs() <= 1e-13 * b.abs().max(1.0), "round {round}: {a} vs {b}");
        }
    }
    for m in &trace.final_models {
        assert_eq!(m, &trace.final_models[0]);
    }
}

#[test]
fn hierfed_matches_multiairfed_in_the_degenerate_setting() {
    let (p, t) = isolated_topology(5);
    let task = iid_task(regression(100, 3, 5), 5, 1);
    let a = run_multiairfed(&t, &p, &orthogonal(0.05, 1, 0, 12), &task, 6).unwrap();
    let b = run_hierfed(&t, &p, &orthogonal(0.05, 1, 1, 12), &task, 6).unwrap();
    for (x, y) in a.reference_models.iter().zip(&b.reference_models) {
        for (u, v) in x.iter().zip(y) {
            assert!((u - v).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }
    for (x, y) in a.rounds.iter().zip(&b.rounds) {
        assert!((x.loss_mean - y.loss_mean).abs() <= 1e-12 * y.loss_mean);
    }
}

#[test]
fn orthogonal_models_synchronize_and_loss_descends() {
    let p = SystemParams::reference(1e-7);
    let t = sample_topology(&p, 2).unwrap();
    let task = iid_task(regression(450, 4, 6), p.m, p.c);
    let qc = quadratic_constants(&task.train, &task.shards, 1, 0.0).unwrap();
    let mu = 0.5 / qc.l;
    let trace = run_multiairfed(&t, &p, &orthogonal(mu, 3, 2, 10), &task, 2).unwrap();
    for w in &trace.final_models {
        assert_eq!(w, &trace.final_models[0]);
    }
    for pair in trace.rounds.windows(2) {
        assert!(pair[1].loss_mean <= pair[0].loss_mean, "{} then {}", pair[0].loss_mean, pair[1].loss_mean);
    }
    let h = run_hierfed(&t, &p, &orthogonal(mu, 3, 2, 10), &task, 2).unwrap();
    for w in &h.final_models {
        assert_eq!(w, &h.final_models[0]);
    }
}

#[test]
fn iid_shards_have_equal_size_and_global_label_mix() {
    let data = Dataset::gaussian_blobs(1000, 4, 3, 2.0, &mut substream(1, 0));
    let shards = partition_dataset(&data, PartitionKind::Iid, 5, 2, 9).unwrap();
    assert_eq!(shards.len(), 10);
    assert!(shards.iter().all(|s| s.len() == 100));
    let (labels, classes) = data.labels().unwrap();
    let global: Vec<f64> =
        (0..classes).map(|k| labels.iter().filter(|&&l| l == k).count() as f64 / data.n as f64).collect();
    for s in &shards {
        for (k, &q) in global.iter().enumerate() {
            // Hypergeometric sd is below the multinomial one; 4 sd band.
            let count = s.iter().filter(|&&i| labels[i] == k).count() as f64;
            let sd = (100.0 * q * (1.0 - q)).sqrt();
            assert!((count - 100.0 * q).abs() <= 4.0 * sd, "class {k}: {count}");
        }
    }
}

#[test]
fn two_class_shards_hold_at_most_two_labels() {
    let data = Dataset::gaussian_blobs(900, 10, 3, 2.0, &mut substream(2, 0));
    let shards = partition_dataset(&data, PartitionKind::TwoClassNonIid, 15, 3, 4).unwrap();
    let (labels, _) = data.labels().unwrap();
    for s in &shards {
        assert!(!s.is_empty());
        let mut ls: Vec<usize> = s.iter().map(|&i| labels[i]).collect();
        ls.sort_unstable();
        ls.dedup();
        assert!(ls.len() <= 2, "{ls:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn partitions_are_disjoint_and_cover(
        n in 60usize..400,
        m in 1usize..6,
        c in 1usize..4,
        noniid: bool,
        seed: u64,
    ) {
        let data = Dataset::gaussian_blobs(n, 10, 2, 2.0, &mut substream(seed, 0));
        let kind = if noniid { PartitionKind::TwoClassNonIid } else { PartitionKind::Iid };
        let Ok(shards) = partition_dataset(&data, kind, m, c, seed) else {
            // Only a label with fewer samples than owners may fail.
            prop_assert!(noniid);
            return Ok(());
        };
        prop_assert_eq!(shards.len(), m * c);
        let mut all: Vec<usize> = shards.concat();
        all.sort_unstable();
        // With two labels per device, labels nobody owns are left out.
        let (labels, classes) = data.labels().unwrap();
        let owned = |l: usize| !noniid || (0..m * c).any(|d| (2 * d) % classes == l || (2 * d + 1) % classes == l);
        let expect: Vec<usize> = (0..n).filter(|&i| owned(labels[i])).collect();
        prop_assert_eq!(all, expect);
    }

    #[test]
    fn gradient_vanishes_at_the_regression_minimizer(seed in 0u64..1000) {
        let data = regression(50, 3, seed);
        let shards = vec![(0..data.n).collect::<Vec<_>>()];
        let qc = quadratic_constants(&data, &shards, 1, 0.0).unwrap();
        let g = data.mean_grad(&qc.w_star, &shards[0]);
        prop_assert!(g.iter().all(|x| x.abs() < 1e-10));
    }
}

#[test]
fn minibatches_follow_their_seed() {
    let (p, t) = isolated_topology(4);
    let task = iid_task(regression(80, 3, 7), 4, 1);
    let learn = LearnParams { batch: Batch::Mini(2), ..orthogonal(0.05, 2, 2, 4) };
    let a = run(&t, &p, &learn, &task, 11).unwrap();
    let b = run(&t, &p, &learn, &task, 11).unwrap();
    let c = run(&t, &p, &learn, &task, 12).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.final_models, b.final_models);
    assert_ne!(a.final_models, c.final_models);
}
