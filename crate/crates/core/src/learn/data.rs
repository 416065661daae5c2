//! Datasets, per-sample losses and device partitions.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Dirichlet, Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::rng::{from_seed, SimRng};

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    /// Regression targets; the loss is ½(a·w − b)².
    Real(Vec<f64>),
    /// Class labels; the loss is softmax cross-entropy with w laid out as
    /// `classes` rows of `p` weights.
    Labels { labels: Vec<usize>, classes: usize },
}

/// Row-major samples with `p` features each.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub n: usize,
    pub p: usize,
    pub features: Vec<f64>,
    pub targets: Targets,
}

impl Dataset {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.p..(i + 1) * self.p]
    }

    /// Model dimension.
    pub fn dim(&self) -> usize {
        match &self.targets {
            Targets::Real(_) => self.p,
            Targets::Labels { classes, .. } => classes * self.p,
        }
    }

    pub fn labels(&self) -> Option<(&[usize], usize)> {
        match &self.targets {
            Targets::Labels { labels, classes } => Some((labels, *classes)),
            Targets::Real(_) => None,
        }
    }

    fn logits(&self, w: &[f64], x: &[f64], classes: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..classes).map(|k| w[k * self.p..(k + 1) * self.p].iter().zip(x).map(|(a, b)| a * b).sum::<f64>()));
    }

    /// Loss of sample `i` at model `w`.
    pub fn sample_loss(&self, w: &[f64], i: usize) -> f64 {
        let x = self.row(i);
        match &self.targets {
            Targets::Real(b) => {
                let r: f64 = x.iter().zip(w).map(|(a, w)| a * w).sum::<f64>() - b[i];
                0.5 * r * r
            }
            Targets::Labels { labels, classes } => {
                let mut z = Vec::with_capacity(*classes);
                self.logits(w, x, *classes, &mut z);
                let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                lse - z[labels[i]]
            }
        }
    }

    /// Adds `weight · ∇ℓ_i(w)` to `out`.
    pub fn add_sample_grad(&self, w: &[f64], i: usize, weight: f64, out: &mut [f64]) {
        let x = self.row(i);
        match &self.targets {
            Targets::Real(b) => {
                let r: f64 = x.iter().zip(w).map(|(a, w)| a * w).sum::<f64>() - b[i];
                for (o, a) in out.iter_mut().zip(x) {
                    *o += weight * r * a;
                }
            }
            Targets::Labels { labels, classes } => {
                let mut z = Vec::with_capacity(*classes);
                self.logits(w, x, *classes, &mut z);
                let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let total: f64 = z.iter().map(|v| (v - m).exp()).sum();
                for k in 0..*classes {
                    let prob = (z[k] - m).exp() / total;
                    let coef = weight * (prob - if labels[i] == k { 1.0 } else { 0.0 });
                    for (o, a) in out[k * self.p..(k + 1) * self.p].iter_mut().zip(x) {
                        *o += coef * a;
                    }
                }
            }
        }
    }

    pub fn mean_loss(&self, w: &[f64], idx: &[usize]) -> f64 {
        idx.iter().map(|&i| self.sample_loss(w, i)).sum::<f64>() / idx.len() as f64
    }

    pub fn mean_grad(&self, w: &[f64], idx: &[usize]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        let wt = 1.0 / idx.len() as f64;
        for &i in idx {
            self.add_sample_grad(w, i, wt, &mut g);
        }
        g
    }

    /// Fraction of samples whose largest logit is the true label.
    pub fn accuracy(&self, w: &[f64], idx: &[usize]) -> Option<f64> {
        let (labels, classes) = self.labels()?;
        let mut z = Vec::with_capacity(classes);
        let hits = idx
            .iter()
            .filter(|&&i| {
                self.logits(w, self.row(i), classes, &mut z);
                let best = z.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(k, _)| k);
                best == Some(labels[i])
            })
            .count();
        Some(hits as f64 / idx.len() as f64)
    }

    /// Linear-regression samples a ~ N(0, diag(s_j²)) with s_j spread
    /// geometrically so the feature covariance has condition number `cond`,
    /// targets b = a·w_true + noise·N(0,1), w_true ~ N(0, I).
    pub fn linear_regression(n: usize, p: usize, cond: f64, noise: f64, rng: &mut SimRng) -> Self {
        let scales: Vec<f64> =
            (0..p).map(|j| if p > 1 { cond.powf(-(j as f64) / (2.0 * (p - 1) as f64)) } else { 1.0 }).collect();
        let w_true: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let mut features = Vec::with_capacity(n * p);
        let mut b = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = scales.iter().map(|s| s * rng.sample::<f64, _>(StandardNormal)).collect();
            let e: f64 = rng.sample(StandardNormal);
            b.push(row.iter().zip(&w_true).map(|(a, w)| a * w).sum::<f64>() + noise * e);
            features.extend(row);
        }
        Self { n, p, features, targets: Targets::Real(b) }
    }

    /// Isotropic Gaussian blobs around class centres drawn from N(0, separation²·I);
    /// a constant feature 1 is appended as the bias input. Labels cycle through
    /// the classes so every class has ⌊n/K⌋ or ⌈n/K⌉ samples.
    pub fn gaussian_blobs(n: usize, classes: usize, features: usize, separation: f64, rng: &mut SimRng) -> Self {
        let centres = Self::blob_centres(classes, features, separation, rng);
        Self::blobs_around(n, &centres, rng)
    }

    pub fn blob_centres(classes: usize, features: usize, separation: f64, rng: &mut SimRng) -> Vec<Vec<f64>> {
        (0..classes)
            .map(|_| (0..features).map(|_| separation * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect()
    }

    /// The samples at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let features = idx.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        let targets = match &self.targets {
            Targets::Real(b) => Targets::Real(idx.iter().map(|&i| b[i]).collect()),
            Targets::Labels { labels, classes } => {
                Targets::Labels { labels: idx.iter().map(|&i| labels[i]).collect(), classes: *classes }
            }
        };
        Self { n: idx.len(), p: self.p, features, targets }
    }

    /// Samples around fixed centres; used for held-out sets of the same task.
    pub fn blobs_around(n: usize, centres: &[Vec<f64>], rng: &mut SimRng) -> Self {
        let classes = centres.len();
        let f = centres[0].len();
        let p = f + 1;
        let mut feats = Vec::with_capacity(n * p);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let k = i % classes;
            feats.extend(centres[k].iter().map(|c| c + rng.sample::<f64, _>(StandardNormal)));
            feats.push(1.0);
            labels.push(k);
        }
        Self { n, p, features: feats, targets: Targets::Labels { labels, classes } }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PartitionKind {
    Iid,
    /// Each device holds exactly two labels; within a label the devices' shares
    /// follow Dirichlet(1, …, 1) proportions, every device getting at least one sample.
    TwoClassNonIid,
}

/// Splits the dataset over the M·C devices of the collaborating clusters.
/// Shard `slot·M + device` belongs to device `device` of collaborator `slot`.
pub fn partition_dataset(data: &Dataset, kind: PartitionKind, m: usize, c: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let devices = m * c;
    if devices == 0 {
        return Err(invalid("M·C", "no devices to partition over"));
    }
    if data.n < devices {
        return Err(Error::DatasetTooSmall { samples: data.n, devices, reason: "fewer samples than devices".into() });
    }
    let mut rng = from_seed(seed);
    match kind {
        PartitionKind::Iid => {
            let mut idx: Vec<usize> = (0..data.n).collect();
            idx.shuffle(&mut rng);
            let (base, extra) = (data.n / devices, data.n % devices);
            let mut shards = Vec::with_capacity(devices);
            let mut start = 0;
            for k in 0..devices {
                let len = base + usize::from(k < extra);
                shards.push(idx[start..start + len].to_vec());
                start += len;
            }
            Ok(shards)
        }
        PartitionKind::TwoClassNonIid => {
            let (labels, classes) = data
                .labels()
                .ok_or_else(|| invalid("partition", "two-class partitioning needs labelled data"))?;
            if classes < 2 {
                return Err(invalid("partition", "two-class partitioning needs at least two classes"));
            }
            let mut users: Vec<Vec<usize>> = vec![Vec::new(); classes];
            for dev in 0..devices {
                users[(2 * dev) % classes].push(dev);
                users[(2 * dev + 1) % classes].push(dev);
            }
            let mut shards = vec![Vec::new(); devices];
            for (k, us) in users.iter().enumerate() {
                if us.is_empty() {
                    continue;
                }
                let mut members: Vec<usize> = (0..data.n).filter(|&i| labels[i] == k).collect();
                if members.len() < us.len() {
                    return Err(Error::DatasetTooSmall {
                        samples: data.n,
                        devices,
                        reason: format!("class {k} has {} samples for {} devices", members.len(), us.len()),
                    });
                }
                members.shuffle(&mut rng);
                let sizes = dirichlet_sizes(members.len(), us.len(), &mut rng)?;
                let mut start = 0;
                for (&dev, len) in us.iter().zip(sizes) {
                    shards[dev].extend_from_slice(&members[start..start + len]);
                    start += len;
                }
            }
            Ok(shards)
        }
    }
}

/// Splits `total` items over `parts` owners, one each plus Dirichlet shares of the rest.
fn dirichlet_sizes(total: usize, parts: usize, rng: &mut SimRng) -> Result<Vec<usize>> {
    if parts == 1 {
        return Ok(vec![total]);
    }
    let props = Dirichlet::new(&vec![1.0; parts]).map_err(|e| invalid("partition", e.to_string()))?.sample(rng);
    let rest = total - parts;
    let raw: Vec<f64> = props.iter().map(|q| q * rest as f64).collect();
    let mut sizes: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut left = rest - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..parts).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())));
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    Ok(sizes.into_iter().map(|s| s + 1).collect())
}
