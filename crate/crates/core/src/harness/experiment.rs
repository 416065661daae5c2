//! Seeded multi-trial training runs and their CSV output.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::config::{DatasetKind, SimConfig};
use super::mnist::load_idx;
use crate::error::{Error, Result};
use crate::learn::{partition_dataset, run, Algorithm, Dataset, LearnParams, RoundTrace, Task};
use crate::rng::substream;
use crate::spatial::sample_topology;

/// Stream of the base seed reserved for dataset generation.
const DATA_STREAM: u64 = 1 << 40;

/// Builds the training task from the config's dataset keys and base seed.
pub fn build_task(cfg: &SimConfig) -> Result<Task> {
    let spec = &cfg.dataset;
    let mut rng = substream(cfg.seed, DATA_STREAM);
    let mnist = match spec.kind {
        DatasetKind::Mnist if !spec.mnist_images.is_empty() => load_idx(
            Path::new(&spec.mnist_images),
            Path::new(&spec.mnist_labels),
            spec.samples + spec.test_samples,
        )?,
        _ => None,
    };
    let (train, test) = match (spec.kind, mnist) {
        (DatasetKind::Regression, _) => {
            (Dataset::linear_regression(spec.samples, spec.features, spec.cond, spec.noise, &mut rng), None)
        }
        (DatasetKind::Mnist, Some(all)) => {
            let mut idx: Vec<usize> = (0..all.n).collect();
            idx.shuffle(&mut rng);
            let n_train = spec.samples.min(all.n);
            (all.subset(&idx[..n_train]), Some(all.subset(&idx[n_train..])).filter(|t| t.n > 0))
        }
        _ => {
            let centres = Dataset::blob_centres(spec.classes, spec.features, spec.separation, &mut rng);
            let train = Dataset::blobs_around(spec.samples, &centres, &mut rng);
            let test = Dataset::blobs_around(spec.test_samples, &centres, &mut rng);
            (train, (test.n > 0).then_some(test))
        }
    };
    let shards = partition_dataset(&train, spec.partition, cfg.system.m, cfg.system.c, cfg.seed)?;
    Ok(Task { train, shards, test })
}

/// Trial k: topology and training both seeded by `cfg.seed + k`.
pub fn run_trials(cfg: &SimConfig, task: &Task, algorithm: Algorithm) -> Result<Vec<RoundTrace>> {
    let learn = LearnParams { algorithm, ..cfg.learn.clone() };
    (0..cfg.trials)
        .into_par_iter()
        .map(|k| {
            let seed = cfg.seed.wrapping_add(k as u64);
            sample_topology(&cfg.system, seed)
                .and_then(|topo| run(&topo, &cfg.system, &learn, task, seed))
                .map_err(|e| Error::Trial { trial: k, seed, source: Box::new(e) })
        })
        .collect()
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn algorithm_name(a: Algorithm) -> &'static str {
    match a {
        Algorithm::MultiAirFed => "multiairfed",
        Algorithm::HierFed => "hierfed",
    }
}

/// Named CSV files, in the order they are written.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub files: Vec<(String, String)>,
    pub traces: Vec<(Algorithm, Vec<RoundTrace>)>,
}

impl ExperimentOutput {
    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|f| f.0 == name).map(|f| f.1.as_str())
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, body) in &self.files {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }
}

/// Column layout of `rounds.csv`.
pub const ROUNDS_HEADER: &str = "algorithm,t,loss_mean,loss_stderr,accuracy_mean,accuracy_stderr,\
intra_err_mean,intra_err_stderr,inter_err_mean,inter_err_stderr,active_mean,trials";
/// Column layout of `summary.csv`.
pub const SUMMARY_HEADER: &str = "algorithm,trials,rounds,initial_loss_mean,final_loss_mean,final_loss_stderr,\
final_accuracy_mean,final_accuracy_stderr,config_hash,seed";
/// Column layout of `paired.csv`; the differences are first algorithm minus second, per seed.
pub const PAIRED_HEADER: &str = "t,loss_diff_mean,loss_diff_stderr,accuracy_diff_mean,accuracy_diff_stderr,first_wins";

fn column(traces: &[RoundTrace], t: usize, f: impl Fn(&crate::learn::RoundRecord) -> f64) -> Vec<f64> {
    traces.iter().map(|tr| f(&tr.rounds[t])).collect()
}

fn rounds_rows(out: &mut String, algo: Algorithm, traces: &[RoundTrace]) {
    let rounds = traces[0].rounds.len();
    for t in 0..rounds {
        let (lm, ls) = mean_stderr(&column(traces, t, |r| r.loss_mean));
        let (am, as_) = mean_stderr(&column(traces, t, |r| r.accuracy));
        let (im, is) = mean_stderr(&column(traces, t, |r| r.intra_err_norm_mean));
        let (em, es) = mean_stderr(&column(traces, t, |r| r.inter_err_norm));
        let (cm, _) = mean_stderr(&column(traces, t, |r| r.active_count_mean));
        let _ = writeln!(
            out,
            "{},{t},{lm:e},{ls:e},{am:e},{as_:e},{im:e},{is:e},{em:e},{es:e},{cm:e},{}",
            algorithm_name(algo),
            traces.len()
        );
    }
}

/// Runs every configured trial (and the other algorithm too when `paired`)
/// and renders the CSV files. Identical configs give identical bytes.
pub fn run_experiment(cfg: &SimConfig) -> Result<ExperimentOutput> {
    let task = build_task(cfg)?;
    let first = cfg.learn.algorithm;
    let mut algos = vec![first];
    if cfg.paired {
        algos.push(match first {
            Algorithm::MultiAirFed => Algorithm::HierFed,
            Algorithm::HierFed => Algorithm::MultiAirFed,
        });
    }
    let mut runs = Vec::new();
    for &a in &algos {
        runs.push((a, run_trials(cfg, &task, a)?));
    }
    let header = cfg.header("simulate");
    let mut rounds = format!("{header}{ROUNDS_HEADER}\n");
    let mut summary = format!("{header}{SUMMARY_HEADER}\n");
    let mut trials = format!("{header}algorithm,trial,seed,{}\n", crate::learn::RoundRecord::CSV_HEADER);
    let mut slots = format!("{header}algorithm,trial,iteration,cluster,device,error_norm,active_count,inter,skip\n");
    for (a, traces) in &runs {
        rounds_rows(&mut rounds, *a, traces);
        let last = traces[0].rounds.len() - 1;
        let (l0, _) = mean_stderr(&column(traces, 0, |r| r.loss_mean));
        let (lm, ls) = mean_stderr(&column(traces, last, |r| r.loss_mean));
        let (am, as_) = mean_stderr(&column(traces, last, |r| r.accuracy));
        let _ = writeln!(
            summary,
            "{},{},{last},{l0:e},{lm:e},{ls:e},{am:e},{as_:e},{},{}",
            algorithm_name(*a),
            traces.len(),
            cfg.hash(),
            cfg.seed
        );
        for (k, tr) in traces.iter().enumerate() {
            let seed = cfg.seed.wrapping_add(k as u64);
            for r in &tr.rounds {
                let _ = writeln!(trials, "{},{k},{seed},{}", algorithm_name(*a), r.csv_fields());
            }
            for s in &tr.slots {
                let _ = writeln!(
                    slots,
                    "{},{k},{},{},{},{:e},{},{},{}",
                    algorithm_name(*a),
                    s.slot,
                    s.cluster,
                    s.device,
                    s.error_norm,
                    s.active,
                    s.inter,
                    s.skip
                );
            }
        }
    }
    let mut files =
        vec![("rounds.csv".to_string(), rounds), ("summary.csv".into(), summary), ("trials.csv".into(), trials)];
    if cfg.paired {
        let (a, b) = (&runs[0].1, &runs[1].1);
        let mut paired = format!("{header}{PAIRED_HEADER}\n");
        for t in 0..a[0].rounds.len() {
            let dl: Vec<f64> = a.iter().zip(b).map(|(x, y)| x.rounds[t].loss_mean - y.rounds[t].loss_mean).collect();
            let da: Vec<f64> = a.iter().zip(b).map(|(x, y)| x.rounds[t].accuracy - y.rounds[t].accuracy).collect();
            let wins = da.iter().filter(|d| **d > 0.0).count();
            let (lm, ls) = mean_stderr(&dl);
            let (am, as_) = mean_stderr(&da);
            let _ = writeln!(paired, "{t},{lm:e},{ls:e},{am:e},{as_:e},{wins}");
        }
        files.push(("paired.csv".into(), paired));
    }
    if cfg.learn.record_slots {
        files.push(("slots.csv".into(), slots));
    }
    Ok(ExperimentOutput { files, traces: runs })
}
