//! Analog uplink superposition, downlink broadcast and the receive-side
//! estimators of the intra-cluster gradient average and the inter-cluster
//! model average.
//!
//! Payloads are real. Two consecutive entries share one complex channel use
//! (real and imaginary part), so after the receiver removes the known channel
//! phase each real entry sees the full per-entry interference power, while
//! complex noise of variance σ_n² contributes σ_n²/2 per entry.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::analytics::LinkBudget;
use crate::channel::{complex_gaussian, tx_amplitude, Activity, ChannelDraw, PowerPolicy};
use crate::error::{invalid, Result};
use crate::rng::SimRng;
use crate::spatial::{SystemParams, Topology};

/// Floor on the payload std; constant payloads normalize to the zero vector.
pub const STD_FLOOR: f64 = 1e-12;

/// A payload shifted to zero mean and scaled to unit (population) variance.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedPayload {
    pub vector: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl NormalizedPayload {
    pub fn len(&self) -> usize {
        self.vector.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vector.is_empty()
    }

    /// σ·v̄ + μ, the original payload.
    pub fn denormalized(&self) -> Vec<f64> {
        self.vector.iter().map(|v| self.std * v + self.mean).collect()
    }
}

pub fn normalize(v: &[f64]) -> Result<NormalizedPayload> {
    if v.len() < 2 {
        return Err(invalid("payload", format!("need at least 2 entries to normalize, got {}", v.len())));
    }
    let d = v.len() as f64;
    let mean = v.iter().sum::<f64>() / d;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d;
    let std = var.sqrt();
    if !(std >= STD_FLOOR) {
        return Ok(NormalizedPayload { vector: vec![0.0; v.len()], mean, std: STD_FLOOR });
    }
    Ok(NormalizedPayload { vector: v.iter().map(|x| (x - mean) / std).collect(), mean, std })
}

/// Packs real entries pairwise into complex symbols; an odd tail is zero-padded.
pub fn pack(v: &[f64]) -> Vec<Complex64> {
    v.chunks(2).map(|c| Complex64::new(c[0], c.get(1).copied().unwrap_or(0.0))).collect()
}

pub fn unpack(z: &[Complex64], d: usize) -> Vec<f64> {
    z.iter().flat_map(|c| [c.re, c.im]).take(d).collect()
}

/// What one server hears in a slot.
#[derive(Clone, Debug)]
pub struct ServerRx {
    pub server: usize,
    /// Received superposition, one complex symbol per two payload entries.
    pub signal: Vec<Complex64>,
    /// ρ|A^z| + Ψ, the per-entry power the server assumes for normalization.
    pub entry_power_estimate: f64,
    pub active: usize,
}

/// Uplink payload of each cluster in a slot. `None` marks a cluster working
/// on another task; its active devices send fresh standard-normal payloads.
pub type ClusterPayloads<'a> = [Option<&'a [NormalizedPayload]>];

/// Synthesizes the received superposition at every observed server.
#[allow(clippy::too_many_arguments)]
pub fn uplink_receive(
    topology: &Topology,
    draw: &ChannelDraw,
    activities: &[Activity],
    payloads: &ClusterPayloads,
    d: usize,
    policy: &PowerPolicy,
    params: &SystemParams,
    budget: &LinkBudget,
    rng: &mut SimRng,
) -> Vec<ServerRx> {
    let n_sym = d.div_ceil(2);
    let no = draw.observed.len();
    let mut signals = vec![vec![Complex64::new(0.0, 0.0); n_sym]; no];
    let half_alpha = params.alpha / 4.0;
    let sqrt_rho = policy.rho.sqrt();
    let mut scratch = vec![0.0; d];
    for (c, act) in activities.iter().enumerate() {
        for &dev in &act.devices {
            let symbols = match payloads[c] {
                Some(p) => pack(&p[dev].vector),
                None => {
                    scratch.iter_mut().for_each(|s| *s = rng.sample(StandardNormal));
                    pack(&scratch)
                }
            };
            let offset = topology.offsets[c][dev];
            let amp = tx_amplitude(draw.own(c, dev), offset.norm(), policy, act.fallback);
            let pos = topology.parents[c] + offset;
            for (k, &z) in draw.observed.iter().enumerate() {
                let coef = if z == c && !act.fallback {
                    Complex64::new(sqrt_rho, 0.0)
                } else {
                    let d2 = (pos - topology.parents[z]).norm_sq();
                    amp * d2.powf(-half_alpha) * draw.uplink(c, dev, k)
                };
                for (acc, s) in signals[k].iter_mut().zip(&symbols) {
                    *acc += coef * s;
                }
            }
        }
    }
    if params.sigma_n2 > 0.0 {
        for sig in signals.iter_mut() {
            for s in sig.iter_mut() {
                *s += complex_gaussian(rng, params.sigma_n2);
            }
        }
    }
    draw.observed
        .iter()
        .zip(signals)
        .map(|(&z, signal)| {
            let active = activities[z].len();
            ServerRx { server: z, signal, entry_power_estimate: budget.rho * active as f64 + budget.psi, active }
        })
        .collect()
}

/// What each observed server transmits on the downlink in one slot.
#[derive(Clone, Debug)]
pub struct Broadcast {
    /// Transmitted symbols per observed server, already power-normalized.
    pub signals: Vec<Vec<Complex64>>,
    /// Normalization scale √(P_d / E) applied by each observed server.
    pub scales: Vec<f64>,
}

fn floor_power(p: f64) -> f64 {
    p.max(f64::MIN_POSITIVE)
}

impl Broadcast {
    /// Every server rebroadcasts its own received signal.
    pub fn intra(rx: &[ServerRx], params: &SystemParams) -> Self {
        let scales: Vec<f64> = rx.iter().map(|r| (params.p_d / floor_power(r.entry_power_estimate)).sqrt()).collect();
        let signals = rx.iter().zip(&scales).map(|(r, &s)| r.signal.iter().map(|x| x * s).collect()).collect();
        Self { signals, scales }
    }

    /// Collaborating servers send the sum of their received signals,
    /// normalized by ρ|A| + CΨ; the rest rebroadcast their own.
    pub fn inter(rx: &[ServerRx], topology: &Topology, params: &SystemParams, budget: &LinkBudget) -> Self {
        let mut bc = Self::intra(rx, params);
        let collab: Vec<usize> = (0..rx.len()).filter(|&k| topology.is_collaborator(rx[k].server)).collect();
        if collab.is_empty() {
            return bc;
        }
        let n_sym = rx[collab[0]].signal.len();
        let mut sum = vec![Complex64::new(0.0, 0.0); n_sym];
        let mut active = 0;
        for &k in &collab {
            for (a, s) in sum.iter_mut().zip(&rx[k].signal) {
                *a += s;
            }
            active += rx[k].active;
        }
        let power = budget.rho * active as f64 + collab.len() as f64 * budget.psi;
        let scale = (params.p_d / floor_power(power)).sqrt();
        for &k in &collab {
            bc.signals[k] = sum.iter().map(|x| x * scale).collect();
            bc.scales[k] = scale;
        }
        bc
    }
}

/// How servers outside the receiver's own aggregate appear on its downlink.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ForeignDownlink {
    /// Each sends its own normalized received signal, which also carries the
    /// receiver's cluster as leaked uplink interference.
    #[default]
    Rebroadcast,
    /// Each sends fresh unit-variance entries at power P_d, independent of
    /// everything else: the interference model behind β.
    Independent,
}

impl Broadcast {
    /// Replaces the signal of every observed server for which `keep` is false
    /// with independent entries at power P_d.
    pub fn randomize_foreign(&mut self, observed: &[usize], keep: impl Fn(usize) -> bool, p_d: f64, rng: &mut SimRng) {
        for (k, &z) in observed.iter().enumerate() {
            if !keep(z) {
                for s in self.signals[k].iter_mut() {
                    *s = complex_gaussian(rng, 2.0 * p_d);
                }
            }
        }
    }
}

/// Estimate delivered to one device.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviceEstimate {
    pub estimate: Vec<f64>,
    pub truth: Vec<f64>,
    pub error: Vec<f64>,
    pub theta: f64,
    /// Downlink gain below th0: the device must keep its previous state.
    pub skip: bool,
}

impl DeviceEstimate {
    pub fn error_norm(&self) -> f64 {
        self.error.iter().map(|e| e * e).sum::<f64>().sqrt()
    }
}

/// A device's de-scaled downlink signal before the receive factor θ is applied.
#[derive(Clone, Debug)]
pub struct Reception {
    /// Received payload sum divided by √ρ, the channel and the device count.
    pub unit: Vec<f64>,
    /// (1/count)·Σμ, added back after scaling.
    pub offset: f64,
    /// MSE-optimal θ for this reception.
    pub theta_star: f64,
    pub truth: Vec<f64>,
    pub skip: bool,
}

impl Reception {
    pub fn estimate_with(&self, theta: f64) -> DeviceEstimate {
        let estimate: Vec<f64> = self.unit.iter().map(|u| theta * u + self.offset).collect();
        let error = estimate.iter().zip(&self.truth).map(|(e, t)| e - t).collect();
        DeviceEstimate { estimate, truth: self.truth.clone(), error, theta, skip: self.skip }
    }

    pub fn estimate(&self) -> DeviceEstimate {
        self.estimate_with(self.theta_star)
    }
}

/// The payloads an estimate aggregates and its normalization load
/// (|A| + (number of servers)·Ψ/ρ).
pub struct Aggregate<'a> {
    pub payloads: Vec<&'a NormalizedPayload>,
    pub load: f64,
}

impl<'a> Aggregate<'a> {
    /// Active devices of the receiver's own cluster.
    pub fn intra(payloads: &'a [NormalizedPayload], activity: &Activity, budget: &LinkBudget) -> Self {
        let payloads: Vec<_> = activity.devices.iter().map(|&d| &payloads[d]).collect();
        let load = payloads.len() as f64 + budget.psi / budget.rho;
        Self { payloads, load }
    }

    /// Active devices of every collaborating cluster; `per_cluster[i]` holds the
    /// payloads of `topology.collaborators[i]`.
    pub fn inter(
        per_cluster: &[&'a [NormalizedPayload]],
        topology: &Topology,
        activities: &[Activity],
        budget: &LinkBudget,
    ) -> Self {
        let mut payloads = Vec::new();
        for (slot, &c) in topology.collaborators.iter().enumerate() {
            payloads.extend(activities[c].devices.iter().map(|&d| &per_cluster[slot][d]));
        }
        let load = payloads.len() as f64 + topology.collaborators.len() as f64 * budget.psi / budget.rho;
        Self { payloads, load }
    }

    fn truth(&self) -> Vec<f64> {
        let d = self.payloads[0].len();
        let n = self.payloads.len() as f64;
        let mut t = vec![0.0; d];
        for p in &self.payloads {
            for (acc, v) in t.iter_mut().zip(p.denormalized()) {
                *acc += v;
            }
        }
        t.iter_mut().for_each(|v| *v /= n);
        t
    }
}

/// Receives broadcast `bc` at receiver `r` of `draw` and de-scales it.
#[allow(clippy::too_many_arguments)]
pub fn receive(
    topology: &Topology,
    draw: &ChannelDraw,
    bc: &Broadcast,
    r: usize,
    agg: &Aggregate,
    params: &SystemParams,
    budget: &LinkBudget,
    rng: &mut SimRng,
) -> Result<Reception> {
    let dev = draw.receivers[r];
    let k_own = draw
        .observed_index(dev.cluster)
        .ok_or_else(|| invalid("receiver", format!("own server {} is not observed in this draw", dev.cluster)))?;
    if agg.payloads.is_empty() {
        return Err(invalid("aggregate", "no active payloads to estimate"));
    }
    let n_sym = bc.signals[k_own].len();
    let pos = topology.device_position(dev.cluster, dev.device);
    let quarter = params.alpha / 4.0;
    let mut v = vec![Complex64::new(0.0, 0.0); n_sym];
    for (k, &z) in draw.observed.iter().enumerate() {
        let coef = (pos - topology.parents[z]).norm_sq().powf(-quarter) * draw.downlink(r, k);
        for (acc, s) in v.iter_mut().zip(&bc.signals[k]) {
            *acc += coef * s;
        }
    }
    if params.sigma_n2 > 0.0 {
        for s in v.iter_mut() {
            *s += complex_gaussian(rng, params.sigma_n2);
        }
    }
    let f_own = draw.downlink(r, k_own);
    let y0 = topology.offsets[dev.cluster][dev.device].norm();
    let path = y0.powf(-params.alpha / 2.0);
    let count = agg.payloads.len() as f64;
    let descale = budget.rho.sqrt() * bc.scales[k_own] * path * f_own * count;
    let z: Vec<Complex64> = v.iter().map(|s| s / descale).collect();
    let d = agg.payloads[0].len();
    let gain = f_own.norm_sqr() * path * path;
    let sigma_sum: f64 = agg.payloads.iter().map(|p| p.std).sum();
    let theta_star = sigma_sum / ((1.0 + budget.beta / gain) * agg.load);
    Ok(Reception {
        unit: unpack(&z, d),
        offset: agg.payloads.iter().map(|p| p.mean).sum::<f64>() / count,
        theta_star,
        truth: agg.truth(),
        skip: f_own.norm_sqr() < params.th0,
    })
}

/// Intra-cluster gradient estimate at receiver `r` (a device of cluster o)
/// from the per-server uplink signals of the same slot.
#[allow(clippy::too_many_arguments)]
pub fn intra_estimate(
    topology: &Topology,
    draw: &ChannelDraw,
    rx: &[ServerRx],
    r: usize,
    own_payloads: &[NormalizedPayload],
    activity: &Activity,
    params: &SystemParams,
    budget: &LinkBudget,
    rng: &mut SimRng,
) -> Result<DeviceEstimate> {
    let bc = Broadcast::intra(rx, params);
    let agg = Aggregate::intra(own_payloads, activity, budget);
    Ok(receive(topology, draw, &bc, r, &agg, params, budget, rng)?.estimate())
}

/// Inter-cluster model estimate at receiver `r`; `per_cluster[i]` holds the
/// model payloads of collaborator i.
#[allow(clippy::too_many_arguments)]
pub fn inter_estimate(
    topology: &Topology,
    draw: &ChannelDraw,
    rx: &[ServerRx],
    r: usize,
    per_cluster: &[&[NormalizedPayload]],
    activities: &[Activity],
    params: &SystemParams,
    budget: &LinkBudget,
    rng: &mut SimRng,
) -> Result<DeviceEstimate> {
    let bc = Broadcast::inter(rx, topology, params, budget);
    let agg = Aggregate::inter(per_cluster, topology, activities, budget);
    Ok(receive(topology, draw, &bc, r, &agg, params, budget, rng)?.estimate())
}
