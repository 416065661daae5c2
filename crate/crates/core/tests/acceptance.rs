//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//!
//! Runs without the libtest harness so the report is always printed.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use multiairfed::analytics::{
    active_expectations, error_bounds, gap_bound, intra_scaling_factors, latency, optimality_gap, BoundForm,
    BoundInputs, LatencyInputs, LinkBudget, ThetaCaps,
};
use multiairfed::channel::compute_rho;
use multiairfed::harness::checks::{
    exact_recovery_error, measure_estimator, measure_interference, measure_tx_power, EstimatorKind, EstimatorStats,
};
use multiairfed::harness::{build_task, quadratic_bound_inputs, run_experiment, run_trials, SimConfig};
use multiairfed::learn::{run_hierfed, run_multiairfed, Algorithm, Targets, Transmission};
use multiairfed::ota::ForeignDownlink;
use multiairfed::spatial::{sample_topology, SystemParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ENUM_TOL: f64 = 1e-12;
const ENUM_BUDGET: Duration = Duration::from_secs(1);
const POWER_DRAWS: usize = 1_000_000;
const POWER_LOW: f64 = 0.98;
const POWER_SE: f64 = 3.0;
const POWER_BUDGET: Duration = Duration::from_secs(10);
const PSI_TOPOLOGIES: usize = 200_000;
const PSI_TOL_HARDCORE: f64 = 0.20;
const PSI_TOL_PPP: f64 = 0.08;
const PSI_BUDGET: Duration = Duration::from_secs(300);
const ESTIMATOR_TRIALS: usize = 100_000;
const ESTIMATOR_DIM: usize = 8;
const OPTIMALITY_BATCHES: usize = 5;
const BIAS_SE: f64 = 3.0;
const EXACT_TOL: f64 = 1e-9;
const BOUND_TRIALS: usize = 100;
const BOUND_ROUNDS: [usize; 4] = [1, 5, 10, 20];
const IDENTITY_TOL: f64 = 1e-12;
const LIMIT_CLUSTERS: usize = 1_000_000;
const LIMIT_TOL: f64 = 1e-6;
const FIT_TOL: f64 = 1e-6;
const TAU_RATIO_TOL: f64 = 0.01;
const PAIRED_SEEDS: usize = 10;
const PAIRED_WINS: usize = 8;
const AFFINE_TOL: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn reference() -> SystemParams {
    SystemParams::reference(1e-7)
}

/// Brute force over every Bernoulli activity pattern given non-empty clusters.
fn enumerate(m: usize, c: usize, th1: f64) -> [f64; 5] {
    let q = (-th1).exp();
    let (mut acc, mut mass) = ([0.0; 5], 0.0);
    for pattern in 0u64..(1 << (m * c)) {
        let counts: Vec<u32> = (0..c).map(|x| ((pattern >> (x * m)) & ((1 << m) - 1)).count_ones()).collect();
        if counts.contains(&0) {
            continue;
        }
        let on = pattern.count_ones() as i32;
        let prob = q.powi(on) * (1.0 - q).powi((m * c) as i32 - on);
        let (own, all) = (counts[0] as f64, on as f64);
        let squares: f64 = counts.iter().map(|&k| (k as f64).powi(2)).sum();
        let v = [1.0 / own, 1.0 / (own * own), 1.0 / all, 1.0 / (all * all), squares / (all * all)];
        for (a, x) in acc.iter_mut().zip(v) {
            *a += prob * x;
        }
        mass += prob;
    }
    acc.map(|a| a / mass)
}

fn enumeration() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for m in 1..=4 {
        for c in 1..=3 {
            for th1 in [0.2, 0.5, 1.0] {
                let closed = active_expectations(m, c, th1).unwrap().as_array();
                for (a, b) in closed.iter().zip(enumerate(m, c, th1)) {
                    worst = worst.max(rel(*a, b));
                }
            }
        }
    }
    let took = start.elapsed();
    outcome(worst <= ENUM_TOL && took < ENUM_BUDGET, format!("max rel {worst:.2e} (tol {ENUM_TOL:e}), {took:.2?}"))
}

fn power_control() -> Outcome {
    let p = reference();
    let start = Instant::now();
    let m = measure_tx_power(&p, 1.0, POWER_DRAWS, 2024).unwrap();
    let took = start.elapsed();
    let pass = m.mean >= POWER_LOW * p.p_u && m.mean <= p.p_u + POWER_SE * m.stderr && took < POWER_BUDGET;
    outcome(pass, format!("E|p|² = {:.5} ± {:.5} (ρ = {:.4e}), {took:.2?}", m.mean, m.stderr, compute_rho(&p).unwrap()))
}

fn interference() -> Outcome {
    let start = Instant::now();
    let hard = measure_interference(&reference(), PSI_TOPOLOGIES, 31).unwrap();
    let ppp = measure_interference(&SystemParams { hardcore: false, ..reference() }, PSI_TOPOLOGIES, 32).unwrap();
    let took = start.elapsed();
    let (eh, ep) = (rel(hard.measured.mean, hard.analytic), rel(ppp.measured.mean, ppp.analytic));
    outcome(
        eh <= PSI_TOL_HARDCORE && ep <= PSI_TOL_PPP && took < PSI_BUDGET,
        format!(
            "hard-core {:.3e} vs {:.3e} (rel {eh:.3}, tol {PSI_TOL_HARDCORE}); plain {:.3e} vs {:.3e} (rel {ep:.3}, tol {PSI_TOL_PPP}); {} topologies each, {took:.1?}",
            hard.measured.mean, hard.analytic, ppp.measured.mean, ppp.analytic, PSI_TOPOLOGIES
        ),
    )
}

fn estimator_optimality(physical: &EstimatorStats) -> Outcome {
    // The ratio estimate of κ_opt has SE ≈ 0.05 at 1e5 trials, the grid step; pool batches.
    let batches: Vec<EstimatorStats> = (0..OPTIMALITY_BATCHES)
        .map(|b| {
            let kind = EstimatorKind::Intra;
            measure_estimator(&reference(), kind, ForeignDownlink::Independent, ESTIMATOR_TRIALS, ESTIMATOR_DIM, 41 + b as u64)
                .unwrap()
        })
        .collect();
    let kappas = batches[0].kappas.clone();
    let pooled: Vec<f64> =
        (0..kappas.len()).map(|i| batches.iter().map(|s| s.mse_grid[i]).sum::<f64>() / batches.len() as f64).collect();
    let best = (0..pooled.len()).min_by(|&a, &b| pooled[a].total_cmp(&pooled[b])).unwrap();
    let nearest = (0..kappas.len()).min_by(|&a, &b| (kappas[a] - 1.0).abs().total_cmp(&(kappas[b] - 1.0).abs())).unwrap();
    let opts: Vec<f64> = batches.iter().map(|s| s.kappa_opt).collect();
    let mean = opts.iter().sum::<f64>() / opts.len() as f64;
    let sd = (opts.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / (opts.len() - 1) as f64).sqrt();
    outcome(
        best == nearest,
        format!(
            "pooled argmin κ = {:.2} over {} trials; batch κ_opt {} (mean {mean:.3}, batch SE {:.3}, delta-method SE per batch {:.3}); with physical rebroadcast κ_opt = {:.3}",
            kappas[best],
            OPTIMALITY_BATCHES * ESTIMATOR_TRIALS,
            opts.iter().map(|k| format!("{k:.3}")).collect::<Vec<_>>().join(" "),
            sd / (opts.len() as f64).sqrt(),
            batches[0].kappa_opt_se,
            physical.kappa_opt
        ),
    )
}

fn unbiasedness(intra: &EstimatorStats, inter: &EstimatorStats) -> Outcome {
    let worst = |s: &EstimatorStats| s.bias.iter().map(|b| b.mean.abs() / b.stderr).fold(0.0, f64::max);
    let (a, b) = (worst(intra), worst(inter));
    outcome(a <= BIAS_SE && b <= BIAS_SE, format!("max |mean|/SE intra {a:.2}, inter {b:.2} (band {BIAS_SE})"))
}

fn exact_recovery() -> Outcome {
    let p = reference();
    let mut worst = 0.0f64;
    for seed in 0..10 {
        worst = worst.max(exact_recovery_error(&p, EstimatorKind::Intra, 32, 0.0, seed).unwrap());
        worst = worst.max(exact_recovery_error(&p, EstimatorKind::Inter, 32, 1e8, seed).unwrap());
    }
    outcome(worst <= EXACT_TOL, format!("max relative error {worst:.2e} over 10 seeds (tol {EXACT_TOL:e})"))
}

fn bound_validity() -> Outcome {
    let text = "sigma_n2 = 1e-7\ndataset = regression\nsamples = 900\nfeatures = 4\ncond = 4\nnoise = 0.1\n\
                partition = iid\nB = 1\nmu = 0.01\ntau = 6\ngamma = 2\nT = 20\nseed = 7\n";
    let base = SimConfig { trials: BOUND_TRIALS, ..SimConfig::parse(text).unwrap() };
    let task = build_task(&base).unwrap();
    let Targets::Real(b) = &task.train.targets else { unreachable!() };
    let (_, qc) = quadratic_bound_inputs(&base, &task, ThetaCaps::uniform(1.0)).unwrap();
    let dim = task.train.dim() as f64;
    // Payload std is at most its RMS; bound gradient and model norms over the ball.
    let w_max = qc.w_star.iter().map(|x| x * x).sum::<f64>().sqrt() + qc.radius;
    let g_max = (0..task.train.n)
        .map(|i| {
            let a = task.train.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            a * (a * w_max + b[i].abs())
        })
        .fold(0.0, f64::max);
    let caps = ThetaCaps { intra: g_max / dim.sqrt(), inter: w_max / dim.sqrt() };

    let mut pass = true;
    let mut parts = Vec::new();
    for mode in [Transmission::Ota, Transmission::Orthogonal] {
        let mut cfg = base.clone();
        cfg.learn.transmission = mode;
        let traces = run_trials(&cfg, &task, Algorithm::MultiAirFed).unwrap();
        let in_ball = traces.iter().all(|tr| {
            tr.reference_models.iter().chain(&tr.final_models).all(|w| {
                w.iter().zip(&qc.w_star).map(|(a, s)| (a - s).powi(2)).sum::<f64>().sqrt() <= qc.radius
            })
        });
        pass &= in_ball;
        let mut line = format!("{mode:?}:");
        for t in BOUND_ROUNDS {
            let gap = traces.iter().map(|tr| tr.rounds[t].loss_mean).sum::<f64>() / traces.len() as f64 - qc.f_star;
            let mut at_t = cfg.clone();
            at_t.learn.rounds = t;
            let (inputs, _) = quadratic_bound_inputs(&at_t, &task, caps).unwrap();
            let report = gap_bound(&inputs).unwrap();
            let ok = gap <= report.gap && report.lr_conditions_ok.iter().all(|&c| c);
            pass &= ok;
            line.push_str(&format!(" T={t} {gap:.3e}≤{:.3e}{}", report.gap, if ok { "" } else { "!" }));
        }
        if !in_ball {
            line.push_str(" (iterates left the σ² ball)");
        }
        parts.push(line);
    }
    outcome(pass, format!("L {:.3} δ {:.3} σ² {:.3}; {}", qc.l, qc.delta, qc.sigma2, parts.join("; ")))
}

fn random_inputs(rng: &mut ChaCha8Rng, c: usize) -> BoundInputs {
    let m = rng.gen_range(2..20);
    let th1 = rng.gen_range(0.05..1.5);
    let l = rng.gen_range(0.5..5.0);
    let p = SystemParams { m, c, th1, ..reference() };
    let budget = LinkBudget::compute(&p).unwrap();
    BoundInputs {
        l,
        delta: l * rng.gen_range(0.05..1.0),
        sigma2: rng.gen_range(0.0..10.0),
        b: rng.gen_range(1..64),
        mu: rng.gen_range(1e-4..1e-2),
        tau: rng.gen_range(1..10),
        gamma: rng.gen_range(0..5),
        t: rng.gen_range(1..100),
        expectations: active_expectations(m, c, th1).unwrap(),
        err_bounds: error_bounds(&p, &budget, ThetaCaps::uniform(rng.gen_range(0.1..2.0))).unwrap().for_dimension(8),
        f0_gap: rng.gen_range(0.0..10.0),
    }
}

fn table_inputs(p: &SystemParams) -> BoundInputs {
    let budget = LinkBudget::compute(p).unwrap();
    BoundInputs {
        l: 1.0,
        delta: 0.5,
        sigma2: 1.0,
        b: 1,
        mu: 0.01,
        tau: 6,
        gamma: 2,
        t: 40,
        expectations: active_expectations(p.m, p.c, p.th1).unwrap(),
        err_bounds: error_bounds(p, &budget, ThetaCaps::uniform(1.0)).unwrap().for_dimension(10),
        f0_gap: 1.0,
    }
}

fn limit_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let worst = (0..10)
        .map(|_| {
            let i = random_inputs(&mut rng, 1);
            rel(gap_bound(&i).unwrap().gap, optimality_gap(&i, BoundForm::SingleCluster).unwrap().gap)
        })
        .fold(0.0, f64::max);
    let limit = table_inputs(&SystemParams { c: LIMIT_CLUSTERS, ..reference() });
    let r = gap_bound(&limit).unwrap();
    let share = r.terms.vanishing() / r.bracket;
    let limit_gap = optimality_gap(&limit, BoundForm::ManyClusters).unwrap().gap;
    let at_1e4 = gap_bound(&table_inputs(&SystemParams { c: 10_000, ..reference() })).unwrap();
    let (up, down) = intra_scaling_factors(&limit);
    let spread = (up - down).abs() / up.abs().max(down.abs());
    let decay = r.terms.vanishing() * LIMIT_CLUSTERS as f64 / (at_1e4.terms.vanishing() * 1e4);
    outcome(
        worst <= IDENTITY_TOL && share < LIMIT_TOL && spread < LIMIT_TOL,
        format!(
            "C=1 identity max rel {worst:.2e} (tol {IDENTITY_TOL:e}); at C=1e6 vanishing terms are {share:.3e} of the bracket \
             (tol {LIMIT_TOL:e}), intra scaling factors differ by {spread:.3e}, limit-form gap rel {:.3e}; C·vanishing constant to {:.4} from C=1e4, so they decay only like 1/C",
            rel(limit_gap, r.gap),
            decay
        ),
    )
}

fn parameter_sweeps() -> Outcome {
    let base = reference();
    let by_c: Vec<f64> = (1..=10).map(|c| gap_bound(&table_inputs(&SystemParams { c, ..base.clone() })).unwrap().gap).collect();
    let by_m: Vec<f64> = (2..=30).map(|m| gap_bound(&table_inputs(&SystemParams { m, ..base.clone() })).unwrap().gap).collect();
    let dec_c = by_c.windows(2).all(|w| w[1] < w[0]);
    let dec_m = by_m.windows(2).all(|w| w[1] < w[0]);

    let xs: Vec<f64> = (0..8).map(|i| i as f64 * 0.5).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&s| gap_bound(&table_inputs(&SystemParams { lambda_p: s * 1e-5, ..base.clone() })).unwrap().bracket)
        .collect();
    let a = nalgebra::DMatrix::from_fn(xs.len(), 3, |i, j| xs[i].powi(j as i32));
    let y = nalgebra::DVector::from_column_slice(&ys);
    let coef = (a.transpose() * &a).cholesky().unwrap().solve(&(a.transpose() * &y));
    let resid = (&a * coef - &y).norm() / y.norm();

    let mut inputs = table_inputs(&base);
    let ratio = |tau: usize, inputs: &mut BoundInputs| {
        inputs.tau = tau;
        let a = intra_scaling_factors(inputs).0;
        inputs.tau = 2 * tau;
        intra_scaling_factors(inputs).0 / a
    };
    let ratios: Vec<f64> = [4, 64, 1024, 16_384, 65_536].iter().map(|&t| ratio(t, &mut inputs)).collect();
    let approaching = ratios.windows(2).all(|w| (w[1] - 4.0).abs() < (w[0] - 4.0).abs());
    let last = (ratios[ratios.len() - 1] - 4.0).abs();
    outcome(
        dec_c && dec_m && resid < FIT_TOL && approaching && last < TAU_RATIO_TOL,
        format!(
            "decreasing in C {dec_c}, in M {dec_m}; λ quadratic residual {resid:.2e} (tol {FIT_TOL:e}); τ→2τ ratios {}",
            ratios.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn algorithm_comparison() -> Outcome {
    let cfg = SimConfig::parse("sigma_n2 = 1e-7\npaired = true\ntrials = 10\nmu = 0.3\nseed = 1\n").unwrap();
    assert_eq!(cfg.trials, PAIRED_SEEDS);
    let out = run_experiment(&cfg).unwrap();
    let acc = |a: Algorithm| -> Vec<f64> {
        out.traces.iter().find(|r| r.0 == a).unwrap().1.iter().map(|t| t.final_round().accuracy).collect()
    };
    let (ours, theirs) = (acc(Algorithm::MultiAirFed), acc(Algorithm::HierFed));
    let wins = ours.iter().zip(&theirs).filter(|(a, b)| a > b).count();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;

    let degenerate = SimConfig::parse(
        "sigma_n2 = 0\nC = 1\nM = 10\nlambda_p = 0\ntransmission = orthogonal\npartition = iid\nsamples = 1000\nT = 20\nmu = 0.1\n",
    )
    .unwrap();
    let task = build_task(&degenerate).unwrap();
    let topo = sample_topology(&degenerate.system, 3).unwrap();
    let learn = |tau, gamma| multiairfed::learn::LearnParams { tau, gamma, ..degenerate.learn.clone() };
    let a = run_multiairfed(&topo, &degenerate.system, &learn(1, 0), &task, 3).unwrap();
    let b = run_hierfed(&topo, &degenerate.system, &learn(1, 1), &task, 3).unwrap();
    let dev = a
        .rounds
        .iter()
        .zip(&b.rounds)
        .map(|(x, y)| rel(x.loss_mean, y.loss_mean).max((x.accuracy - y.accuracy).abs()))
        .fold(0.0, f64::max);
    outcome(
        wins >= PAIRED_WINS && dev <= IDENTITY_TOL,
        format!(
            "MultiAirFed ahead in {wins}/{PAIRED_SEEDS} pairs (need {PAIRED_WINS}), mean accuracy {:.3} vs {:.3}; \
             degenerate traces max deviation {dev:.1e}",
            mean(&ours),
            mean(&theirs)
        ),
    )
}

fn latency_check() -> Outcome {
    let inp = LatencyInputs::from_link(20.0, 2.5e6, 1e9, 1e6, 1e6, 10.0);
    let l = latency(&inp, 40, 6, 2);
    let second_diff = |f: &dyn Fn(usize) -> f64| (1..30).map(|k| (f(k + 1) - 2.0 * f(k) + f(k - 1)).abs()).fold(0.0, f64::max);
    let in_tau = second_diff(&|tau| latency(&inp, 40, tau, 2));
    let in_t = second_diff(&|t| latency(&inp, t, 6, 2));
    let scale = l.max(1.0);
    outcome(
        (l - 976.0).abs() < 1e-9 && in_tau <= AFFINE_TOL * scale && in_t <= AFFINE_TOL * scale,
        format!("latency {l} s; max second difference in τ {in_tau:.1e}, in T {in_t:.1e}"),
    )
}

fn determinism() -> Outcome {
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/reference.cfg");
    let root = std::env::temp_dir().join(format!("multiairfed-acceptance-{}", std::process::id()));
    let run = |sub: &str| {
        let dir = root.join(sub);
        let st = Command::new(env!("CARGO_BIN_EXE_multiairfed"))
            .args(["simulate", "--config", cfg, "--seed", "7", "--trials", "2", "--out"])
            .arg(&dir)
            .output()
            .unwrap();
        assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        files
    };
    let (a, b) = (run("a"), run("b"));
    let _ = std::fs::remove_dir_all(&root);
    let bytes: usize = a.iter().map(|f| f.1.len()).sum();
    outcome(a == b && !a.is_empty(), format!("{} files, {bytes} bytes, identical {}", a.len(), a == b))
}

fn main() -> ExitCode {
    let p = reference();
    let mut results: Vec<(usize, &str, Outcome, Duration)> = Vec::new();
    let mut record = |id: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let took = start.elapsed();
        println!("{} {id:>2} {name}: {} [{took:.1?}]", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, name, o, took));
    };
    record(1, "enumeration exactness", &mut enumeration);
    record(2, "power control", &mut power_control);
    record(3, "interference consistency", &mut interference);
    let intra = measure_estimator(&p, EstimatorKind::Intra, ForeignDownlink::Rebroadcast, ESTIMATOR_TRIALS, ESTIMATOR_DIM, 51)
        .unwrap();
    let inter = measure_estimator(&p, EstimatorKind::Inter, ForeignDownlink::Rebroadcast, ESTIMATOR_TRIALS, ESTIMATOR_DIM, 52)
        .unwrap();
    record(4, "estimator optimality", &mut || estimator_optimality(&intra));
    record(5, "unbiasedness", &mut || unbiasedness(&intra, &inter));
    record(6, "exact recovery", &mut exact_recovery);
    record(7, "bound validity", &mut bound_validity);
    record(8, "closed-form identities", &mut limit_identities);
    record(9, "parameter sweeps", &mut parameter_sweeps);
    record(10, "algorithm comparison", &mut algorithm_comparison);
    record(11, "latency", &mut latency_check);
    record(12, "determinism", &mut determinism);
    let failed: Vec<String> = results.iter().filter(|r| !r.2.pass).map(|r| format!("{} ({})", r.0, r.1)).collect();
    println!("{}/{} criteria passed", results.len() - failed.len(), results.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
