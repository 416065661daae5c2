//! Monte Carlo measurements that the validation suite compares against the
//! closed forms.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::analytics::{ActiveExpectations, LinkBudget};
use crate::channel::{activity_set, tx_amplitude, Activity, ChannelDraw, DeviceRef, PowerPolicy};
use crate::error::Result;
use crate::ota::{normalize, receive, uplink_receive, Aggregate, Broadcast, ForeignDownlink, NormalizedPayload};
use crate::rng::{substream, SimRng};
use crate::spatial::{sample_topology_with, Point, SystemParams, Topology};

const CHUNK: usize = 10_000;

/// Servers farther than this from the reference server are left out of the
/// estimator experiments. Their downlink share of β is (r0/D)² of the total.
pub const OBSERVATION_RADIUS: f64 = 200.0;

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Running first and second moments.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub sum: f64,
    pub sum_sq: f64,
    pub n: usize,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.sum += x;
        self.sum_sq += x * x;
        self.n += 1;
    }

    pub fn merge(mut self, o: Moments) -> Moments {
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
        self.n += o.n;
        self
    }

    pub fn estimate(&self) -> MeanEstimate {
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        MeanEstimate { mean, stderr: (var / n).sqrt(), n: self.n }
    }
}

fn offset_radius(params: &SystemParams, rng: &mut SimRng) -> f64 {
    let span = params.r_outer * params.r_outer - params.r0 * params.r0;
    (params.r0 * params.r0 + rng.gen::<f64>() * span).sqrt()
}

/// Average transmit power |p|² of one device under truncated channel
/// inversion with ρ scaled by `rho_scale`, over `draws` (offset, fading) pairs.
pub fn measure_tx_power(params: &SystemParams, rho_scale: f64, draws: usize, seed: u64) -> Result<MeanEstimate> {
    let mut policy = PowerPolicy::new(params)?;
    policy.rho *= rho_scale;
    let chunks: Vec<Moments> = (0..draws.div_ceil(CHUNK))
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let mut m = Moments::default();
            for _ in 0..CHUNK.min(draws - i * CHUNK) {
                let y = offset_radius(params, &mut rng);
                let f = crate::channel::complex_gaussian(&mut rng, 1.0);
                m.push(tx_amplitude(f, y, &policy, false).norm_sqr());
            }
            m
        })
        .collect();
    Ok(chunks.into_iter().fold(Moments::default(), Moments::merge).estimate())
}

/// The five active-device moments measured on Rayleigh gains, keeping only
/// draws where every collaborating cluster has an active device.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivityMeasurement {
    pub active_fraction: MeanEstimate,
    pub expectations: [MeanEstimate; 5],
    pub rejected: usize,
}

pub fn measure_activity(params: &SystemParams, draws: usize, seed: u64) -> ActivityMeasurement {
    let (m, c) = (params.m, params.c);
    let chunks: Vec<(Moments, [Moments; 5], usize)> = (0..draws.div_ceil(CHUNK))
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let mut frac = Moments::default();
            let mut ex = [Moments::default(); 5];
            let mut rejected = 0;
            let mut counts = vec![0usize; c];
            for _ in 0..CHUNK.min(draws - i * CHUNK) {
                for k in counts.iter_mut() {
                    *k = (0..m).filter(|_| crate::channel::complex_gaussian(&mut rng, 1.0).norm_sqr() >= params.th1).count();
                    frac.push(*k as f64 / m as f64);
                }
                if counts.iter().any(|&k| k == 0) {
                    rejected += 1;
                    continue;
                }
                let own = counts[0] as f64;
                let all: f64 = counts.iter().sum::<usize>() as f64;
                let sq: f64 = counts.iter().map(|&k| (k * k) as f64).sum();
                for (slot, v) in ex.iter_mut().zip([1.0 / own, 1.0 / (own * own), 1.0 / all, 1.0 / (all * all), sq / (all * all)]) {
                    slot.push(v);
                }
            }
            (frac, ex, rejected)
        })
        .collect();
    let mut frac = Moments::default();
    let mut ex = [Moments::default(); 5];
    let mut rejected = 0;
    for (f, e, r) in chunks {
        frac = frac.merge(f);
        for (a, b) in ex.iter_mut().zip(e) {
            *a = a.merge(b);
        }
        rejected += r;
    }
    ActivityMeasurement { active_fraction: frac.estimate(), expectations: ex.map(|m| m.estimate()), rejected }
}

/// Brute-force moments over all 2^{CM} activity patterns, conditioned on
/// every cluster having an active device.
pub fn enumerate_expectations(m: usize, c: usize, th1: f64) -> ActiveExpectations {
    let p = (-th1).exp();
    let n = m * c;
    let mut acc = [0.0f64; 5];
    let mut mass = 0.0;
    for pattern in 0u64..(1u64 << n) {
        let counts: Vec<u32> = (0..c).map(|x| ((pattern >> (x * m)) & ((1u64 << m) - 1)).count_ones()).collect();
        if counts.contains(&0) {
            continue;
        }
        let on = pattern.count_ones() as i32;
        let w = p.powi(on) * (1.0 - p).powi(n as i32 - on);
        let own = f64::from(counts[0]);
        let all = f64::from(on as u32);
        let sq: f64 = counts.iter().map(|&k| f64::from(k * k)).sum();
        for (a, v) in acc.iter_mut().zip([1.0 / own, 1.0 / (own * own), 1.0 / all, 1.0 / (all * all), sq / (all * all)]) {
            *a += w * v;
        }
        mass += w;
    }
    let [inv_own, inv_own_sq, inv_all, inv_all_sq, square_share] = acc.map(|a| a / mass);
    ActiveExpectations { inv_own, inv_own_sq, inv_all, inv_all_sq, square_share }
}

/// Per-entry interference power at the reference server from every other
/// cluster's active devices, one fading draw per topology.
#[derive(Clone, Debug, PartialEq)]
pub struct InterferenceMeasurement {
    pub measured: MeanEstimate,
    /// Analytic interference part of Ψ at the same truncation radius.
    pub analytic: f64,
    pub tail_bound: f64,
}

pub fn measure_interference(params: &SystemParams, topologies: usize, seed: u64) -> Result<InterferenceMeasurement> {
    let policy = PowerPolicy::new(params)?;
    let psi = crate::analytics::psi(params, params.window_radius)?;
    let chunk = 500;
    let parts: Vec<Result<Moments>> = (0..topologies.div_ceil(chunk))
        .into_par_iter()
        .map(|i| {
            let mut m = Moments::default();
            for t in i * chunk..(i * chunk + chunk).min(topologies) {
                let mut rng = substream(seed, t as u64);
                let topo = sample_topology_with(params, &mut rng)?;
                let draw = ChannelDraw::sample(&topo, params, &[0], &[], &mut rng);
                m.push(interference_at_origin(&topo, &draw, &policy, params.alpha));
            }
            Ok(m)
        })
        .collect();
    let mut total = Moments::default();
    for p in parts {
        total = total.merge(p?);
    }
    Ok(InterferenceMeasurement { measured: total.estimate(), analytic: psi.interference, tail_bound: psi.tail_bound })
}

fn interference_at_origin(topo: &Topology, draw: &ChannelDraw, policy: &PowerPolicy, alpha: f64) -> f64 {
    let mut total = 0.0;
    for c in 1..topo.n_clusters() {
        let act = activity_set(draw, c, policy);
        for &d in &act.devices {
            let amp = tx_amplitude(draw.own(c, d), topo.offsets[c][d].norm(), policy, act.fallback);
            let d2 = topo.device_position(c, d).norm_sq();
            total += amp.norm_sqr() * d2.powf(-alpha / 2.0) * draw.uplink(c, d, 0).norm_sqr();
        }
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimatorKind {
    /// Gradient estimate of the reference cluster.
    Intra,
    /// Model estimate over all collaborating clusters.
    Inter,
}

/// Grid of receive factors κ·θ* scanned by [`measure_estimator`].
pub fn kappa_grid() -> Vec<f64> {
    (0..21).map(|i| 0.5 + 0.05 * i as f64).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorStats {
    /// Entrywise mean of estimate − truth at θ*.
    pub bias: Vec<MeanEstimate>,
    /// Per-entry squared error at θ*.
    pub mse: MeanEstimate,
    pub kappas: Vec<f64>,
    pub mse_grid: Vec<f64>,
    /// Minimizer of the trial-averaged MSE over continuous κ.
    pub kappa_opt: f64,
    /// Delta-method standard error of `kappa_opt`.
    pub kappa_opt_se: f64,
    /// Largest payload std seen; a valid θ cap for the error bounds.
    pub max_sigma: f64,
    pub skipped: usize,
    pub trials: usize,
}

impl EstimatorStats {
    /// Index of the smallest grid MSE.
    pub fn grid_argmin(&self) -> usize {
        self.mse_grid.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |(i, _)| i)
    }
}

struct TrialResult {
    error: Vec<f64>,
    /// θ*²‖u‖², θ*⟨u, t − o⟩, ‖t − o‖², all per entry.
    quad: [f64; 3],
    max_sigma: f64,
}

/// Random payloads: device mean N(0,1), spread U[0.5, 1.5].
fn random_payloads(m: usize, d: usize, rng: &mut SimRng) -> Result<Vec<NormalizedPayload>> {
    (0..m)
        .map(|_| {
            let mean: f64 = rng.sample(StandardNormal);
            let spread = 0.5 + rng.gen::<f64>();
            let v: Vec<f64> = (0..d).map(|_| mean + spread * rng.sample::<f64, _>(StandardNormal)).collect();
            normalize(&v)
        })
        .collect()
}

fn estimator_trial(
    params: &SystemParams,
    budget: &LinkBudget,
    policy: &PowerPolicy,
    kind: EstimatorKind,
    foreign: ForeignDownlink,
    d: usize,
    rng: &mut SimRng,
) -> Result<Option<TrialResult>> {
    let topo = sample_topology_with(params, rng)?;
    let mut observed: Vec<usize> =
        (0..topo.n_clusters()).filter(|&z| topo.parents[z].norm() <= OBSERVATION_RADIUS).collect();
    for &c in &topo.collaborators {
        if !observed.contains(&c) {
            observed.push(c);
        }
    }
    let receivers = [DeviceRef { cluster: 0, device: 0 }];
    let draw = ChannelDraw::sample(&topo, params, &observed, &receivers, rng);
    let activities: Vec<Activity> = (0..topo.n_clusters()).map(|c| activity_set(&draw, c, policy)).collect();
    let senders: Vec<usize> = match kind {
        EstimatorKind::Intra => vec![0],
        EstimatorKind::Inter => topo.collaborators.clone(),
    };
    let payloads: Vec<Vec<NormalizedPayload>> =
        senders.iter().map(|_| random_payloads(params.m, d, rng)).collect::<Result<_>>()?;
    let mut per_cluster: Vec<Option<&[NormalizedPayload]>> = vec![None; topo.n_clusters()];
    for (i, &c) in senders.iter().enumerate() {
        per_cluster[c] = Some(&payloads[i]);
    }
    let rx = uplink_receive(&topo, &draw, &activities, &per_cluster, d, policy, params, budget, rng);
    let refs: Vec<&[NormalizedPayload]> = payloads.iter().map(Vec::as_slice).collect();
    let (bc, agg) = match kind {
        EstimatorKind::Intra => (Broadcast::intra(&rx, params), Aggregate::intra(refs[0], &activities[0], budget)),
        EstimatorKind::Inter => (
            Broadcast::inter(&rx, &topo, params, budget),
            Aggregate::inter(&refs, &topo, &activities, budget),
        ),
    };
    let mut bc = bc;
    if foreign == ForeignDownlink::Independent {
        match kind {
            EstimatorKind::Intra => bc.randomize_foreign(&observed, |z| z == 0, params.p_d, rng),
            EstimatorKind::Inter => bc.randomize_foreign(&observed, |z| topo.is_collaborator(z), params.p_d, rng),
        }
    }
    let reception = receive(&topo, &draw, &bc, 0, &agg, params, budget, rng)?;
    if reception.skip {
        return Ok(None);
    }
    let est = reception.estimate();
    let n = d as f64;
    let th = reception.theta_star;
    let resid: Vec<f64> = reception.truth.iter().map(|t| t - reception.offset).collect();
    let uu: f64 = reception.unit.iter().map(|u| u * u).sum();
    let ur: f64 = reception.unit.iter().zip(&resid).map(|(u, r)| u * r).sum();
    let rr: f64 = resid.iter().map(|r| r * r).sum();
    let max_sigma = agg.payloads.iter().map(|p| p.std).fold(0.0, f64::max);
    Ok(Some(TrialResult { error: est.error, quad: [th * th * uu / n, th * ur / n, rr / n], max_sigma }))
}

/// Runs `trials` independent (topology, fading, payload, noise) realizations of
/// one estimator at device 0 of the reference cluster.
pub fn measure_estimator(
    params: &SystemParams,
    kind: EstimatorKind,
    foreign: ForeignDownlink,
    trials: usize,
    d: usize,
    seed: u64,
) -> Result<EstimatorStats> {
    let budget = LinkBudget::compute(params)?;
    let policy = PowerPolicy::new(params)?;
    let results: Vec<Result<Option<TrialResult>>> = (0..trials)
        .into_par_iter()
        .map(|t| estimator_trial(params, &budget, &policy, kind, foreign, d, &mut substream(seed, t as u64)))
        .collect();
    let mut bias = vec![Moments::default(); d];
    let mut mse = Moments::default();
    let mut quad = [0.0f64; 3];
    let mut max_sigma = 0.0f64;
    let mut skipped = 0;
    let mut pairs = Vec::with_capacity(trials);
    for r in results {
        let Some(r) = r? else {
            skipped += 1;
            continue;
        };
        for (m, e) in bias.iter_mut().zip(&r.error) {
            m.push(*e);
        }
        mse.push(r.error.iter().map(|e| e * e).sum::<f64>() / d as f64);
        for (a, b) in quad.iter_mut().zip(r.quad) {
            *a += b;
        }
        pairs.push((r.quad[0], r.quad[1]));
        max_sigma = max_sigma.max(r.max_sigma);
    }
    let n = mse.n as f64;
    let kappas = kappa_grid();
    let kappa_opt = quad[1] / quad[0];
    let resid: f64 = pairs.iter().map(|(a, b)| (b - kappa_opt * a).powi(2)).sum();
    let mse_grid = kappas.iter().map(|k| (k * k * quad[0] - 2.0 * k * quad[1] + quad[2]) / n).collect();
    Ok(EstimatorStats {
        bias: bias.iter().map(Moments::estimate).collect(),
        mse: mse.estimate(),
        kappas,
        mse_grid,
        kappa_opt,
        kappa_opt_se: resid.sqrt() / quad[0],
        max_sigma,
        skipped,
        trials,
    })
}

/// Largest relative error ‖estimate − truth‖/‖truth‖ over every device of the
/// reference cluster when interference and noise are absent: λ_p = 0,
/// σ_n² = 0, collaborating clusters placed `spacing` metres apart and every
/// payload with the same std.
pub fn exact_recovery_error(params: &SystemParams, kind: EstimatorKind, d: usize, spacing: f64, seed: u64) -> Result<f64> {
    let c = match kind {
        EstimatorKind::Intra => 1,
        EstimatorKind::Inter => params.c,
    };
    let p = SystemParams { lambda_p: 0.0, sigma_n2: 0.0, c: 1, ..params.clone() };
    let mut rng = substream(seed, 0);
    let mut parents = Vec::with_capacity(c);
    let mut offsets = Vec::with_capacity(c);
    for x in 0..c {
        let single = sample_topology_with(&p, &mut rng)?;
        parents.push(Point::polar(x as f64 * spacing, x as f64));
        offsets.push(single.offsets[0].clone());
    }
    let topo = Topology { parents, offsets, collaborators: (0..c).collect() };
    let p = SystemParams { c, ..p };
    let budget = LinkBudget::compute(&p)?;
    let policy = PowerPolicy::new(&p)?;
    let spread = 0.5 + rng.gen::<f64>();
    let payloads: Vec<Vec<NormalizedPayload>> = (0..c)
        .map(|_| {
            (0..p.m)
                .map(|_| {
                    let mean: f64 = rng.sample(StandardNormal);
                    let base = normalize(&(0..d).map(|_| rng.sample(StandardNormal)).collect::<Vec<f64>>())?;
                    normalize(&base.vector.iter().map(|v| mean + spread * v).collect::<Vec<_>>())
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let observed: Vec<usize> = (0..c).collect();
    let receivers: Vec<DeviceRef> = (0..p.m).map(|device| DeviceRef { cluster: 0, device }).collect();
    let draw = ChannelDraw::sample(&topo, &p, &observed, &receivers, &mut rng);
    let activities: Vec<Activity> = (0..c).map(|x| activity_set(&draw, x, &policy)).collect();
    let refs: Vec<&[NormalizedPayload]> = payloads.iter().map(Vec::as_slice).collect();
    let per_cluster: Vec<Option<&[NormalizedPayload]>> = refs.iter().map(|r| Some(*r)).collect();
    let rx = uplink_receive(&topo, &draw, &activities, &per_cluster, d, &policy, &p, &budget, &mut rng);
    let (bc, agg) = match kind {
        EstimatorKind::Intra => (Broadcast::intra(&rx, &p), Aggregate::intra(refs[0], &activities[0], &budget)),
        EstimatorKind::Inter => {
            (Broadcast::inter(&rx, &topo, &p, &budget), Aggregate::inter(&refs, &topo, &activities, &budget))
        }
    };
    let mut worst = 0.0f64;
    for r in 0..receivers.len() {
        let est = receive(&topo, &draw, &bc, r, &agg, &p, &budget, &mut rng)?.estimate();
        let norm = est.truth.iter().map(|t| t * t).sum::<f64>().sqrt();
        worst = worst.max(est.error_norm() / norm);
    }
    Ok(worst)
}
