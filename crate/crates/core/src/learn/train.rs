use rand::Rng;

use crate::analytics::LinkBudget;
use crate::channel::{activity_set, Activity, ChannelDraw, DeviceRef, PowerPolicy};
use crate::error::{invalid, Error, Result};
use crate::ota::{normalize, receive, uplink_receive, Aggregate, Broadcast, NormalizedPayload};
use crate::rng::{substream, SimRng};
use crate::spatial::{SystemParams, Topology};

use super::data::Dataset;

/// Loss growth factor over the initial loss that aborts a run.
const DIVERGENCE_FACTOR: f64 = 1e6;

/// Stream 0 of a trial seed is left to topology sampling.
pub const CHANNEL_STREAM: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    /// τ intra-cluster gradient aggregations, γ local steps, then a global model sync.
    MultiAirFed,
    /// τ rounds of (γ local steps, intra-cluster model sync), then a global model sync.
    HierFed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transmission {
    Ota,
    /// Error-free aggregation over every device.
    Orthogonal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Batch {
    Full,
    /// Minibatch of the given size drawn with replacement.
    Mini(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnParams {
    pub mu: f64,
    pub tau: usize,
    pub gamma: usize,
    pub rounds: usize,
    pub batch: Batch,
    pub algorithm: Algorithm,
    pub transmission: Transmission,
    /// Starting model for every device; zeros when `None`.
    pub init: Option<Vec<f64>>,
    /// Keep one row per device per aggregation slot.
    pub record_slots: bool,
}

impl LearnParams {
    pub fn reference() -> Self {
        Self {
            mu: 0.01,
            tau: 6,
            gamma: 2,
            rounds: 40,
            batch: Batch::Full,
            algorithm: Algorithm::MultiAirFed,
            transmission: Transmission::Ota,
            init: None,
            record_slots: false,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(invalid("mu", "must be finite and non-negative"));
        }
        if self.tau == 0 {
            return Err(invalid("tau", "must be at least 1"));
        }
        if self.batch == Batch::Mini(0) {
            return Err(invalid("batch", "minibatch size must be positive"));
        }
        if let Some(w) = &self.init {
            if w.len() != dim {
                return Err(invalid("init", format!("length {} does not match model dimension {dim}", w.len())));
            }
        }
        Ok(())
    }
}

/// Training data of the collaborating clusters. Shard `slot·M + device`
/// belongs to device `device` of `topology.collaborators[slot]`.
#[derive(Clone, Debug)]
pub struct Task {
    pub train: Dataset,
    pub shards: Vec<Vec<usize>>,
    pub test: Option<Dataset>,
}

/// Equal-weight average of the device losses at `w`.
pub fn global_loss(task: &Task, w: &[f64]) -> f64 {
    task.shards.iter().map(|s| task.train.mean_loss(w, s)).sum::<f64>() / task.shards.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    /// Mean over devices of the global loss at each device's model.
    pub loss_mean: f64,
    /// Mean test accuracy over devices; NaN without labelled test data.
    pub accuracy: f64,
    /// Mean per-device intra-cluster estimation error norm over the round.
    pub intra_err_norm_mean: f64,
    /// Mean per-device global-sync error norm.
    pub inter_err_norm: f64,
    /// Mean number of active devices per collaborating cluster and slot.
    pub active_count_mean: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlotRecord {
    pub slot: usize,
    pub inter: bool,
    pub cluster: usize,
    pub device: usize,
    pub error_norm: f64,
    /// Active devices behind the estimate.
    pub active: usize,
    pub skip: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundTrace {
    /// Row 0 is the initial state; rows 1..=T follow each global round.
    pub rounds: Vec<RoundRecord>,
    /// Exact global average of the device models after each round's sync.
    pub reference_models: Vec<Vec<f64>>,
    pub final_models: Vec<Vec<f64>>,
    pub slots: Vec<SlotRecord>,
}

impl RoundRecord {
    pub const CSV_HEADER: &'static str = "t,loss_mean,accuracy,intra_err_norm_mean,inter_err_norm,active_count_mean";

    pub fn csv_fields(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e}",
            self.t, self.loss_mean, self.accuracy, self.intra_err_norm_mean, self.inter_err_norm, self.active_count_mean
        )
    }
}

impl RoundTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(RoundRecord::CSV_HEADER);
        out.push('\n');
        for r in &self.rounds {
            out.push_str(&r.csv_fields());
            out.push('\n');
        }
        out
    }

    pub fn final_round(&self) -> &RoundRecord {
        self.rounds.last().expect("trace always holds the initial row")
    }
}

struct SlotStats {
    err_sum: f64,
    count: usize,
    active_sum: f64,
    active_count: usize,
}

impl SlotStats {
    fn new() -> Self {
        Self { err_sum: 0.0, count: 0, active_sum: 0.0, active_count: 0 }
    }

    fn mean_err(&self) -> f64 {
        if self.count == 0 { f64::NAN } else { self.err_sum / self.count as f64 }
    }
}

struct Trainer<'a> {
    topology: &'a Topology,
    params: &'a SystemParams,
    learn: &'a LearnParams,
    task: &'a Task,
    budget: LinkBudget,
    policy: Option<PowerPolicy>,
    channel_rng: SimRng,
    batch_rngs: Vec<SimRng>,
    models: Vec<Vec<f64>>,
    receivers: Vec<DeviceRef>,
    servers: Vec<usize>,
    m: usize,
    slot: usize,
    slots: Vec<SlotRecord>,
    intra: SlotStats,
    inter: SlotStats,
}

impl<'a> Trainer<'a> {
    fn new(topology: &'a Topology, params: &'a SystemParams, learn: &'a LearnParams, task: &'a Task, seed: u64) -> Result<Self> {
        let m = topology.devices_per_cluster();
        let c = topology.collaborators.len();
        let dim = task.train.dim();
        learn.validate(dim)?;
        if task.shards.len() != m * c {
            return Err(invalid("shards", format!("{} shards for {} devices", task.shards.len(), m * c)));
        }
        if let Some(i) = task.shards.iter().position(|s| s.is_empty()) {
            return Err(Error::DatasetTooSmall { samples: task.train.n, devices: m * c, reason: format!("shard {i} is empty") });
        }
        let (budget, policy) = match learn.transmission {
            Transmission::Ota => (LinkBudget::compute(params)?, Some(PowerPolicy::new(params)?)),
            Transmission::Orthogonal => (LinkBudget { rho: 1.0, psi: 0.0, psi_interference: 0.0, beta: 0.0 }, None),
        };
        let init = learn.init.clone().unwrap_or_else(|| vec![0.0; dim]);
        let receivers = topology
            .collaborators
            .iter()
            .flat_map(|&cl| (0..m).map(move |device| DeviceRef { cluster: cl, device }))
            .collect();
        Ok(Self {
            topology,
            params,
            learn,
            task,
            budget,
            policy,
            channel_rng: substream(seed, CHANNEL_STREAM),
            batch_rngs: (0..m * c).map(|k| substream(seed, CHANNEL_STREAM + 1 + k as u64)).collect(),
            models: vec![init; m * c],
            receivers,
            servers: (0..topology.n_clusters()).collect(),
            m,
            slot: 0,
            slots: Vec::new(),
            intra: SlotStats::new(),
            inter: SlotStats::new(),
        })
    }

    fn gradient(&mut self, k: usize) -> Vec<f64> {
        let shard = &self.task.shards[k];
        match self.learn.batch {
            Batch::Full => self.task.train.mean_grad(&self.models[k], shard),
            Batch::Mini(b) => {
                let rng = &mut self.batch_rngs[k];
                let idx: Vec<usize> = (0..b).map(|_| shard[rng.gen_range(0..shard.len())]).collect();
                self.task.train.mean_grad(&self.models[k], &idx)
            }
        }
    }

    fn local_steps(&mut self, steps: usize) {
        for _ in 0..steps {
            for k in 0..self.models.len() {
                let g = self.gradient(k);
                let mu = self.learn.mu;
                self.models[k].iter_mut().zip(&g).for_each(|(w, g)| *w -= mu * g);
            }
        }
    }

    fn exact_mean(vs: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; vs[0].len()];
        for v in vs {
            out.iter_mut().zip(v).for_each(|(o, x)| *o += x);
        }
        let n = vs.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }

    /// Per-device estimates of the aggregate of `payloads` (one per device,
    /// indexed like the shards); `None` marks a skipped reception.
    fn aggregate(&mut self, payloads: &[Vec<f64>], global: bool) -> Result<Vec<Option<Vec<f64>>>> {
        let m = self.m;
        let policy = match self.policy {
            None => {
                let out = if global {
                    let mean = Self::exact_mean(payloads);
                    vec![Some(mean); payloads.len()]
                } else {
                    payloads
                        .chunks(m)
                        .flat_map(|ch| {
                            let mean = Self::exact_mean(ch);
                            std::iter::repeat_n(Some(mean), m)
                        })
                        .collect()
                };
                self.slot += 1;
                return Ok(out);
            }
            Some(p) => p,
        };
        let d = payloads[0].len();
        let normalized: Vec<NormalizedPayload> = payloads.iter().map(|v| normalize(v)).collect::<Result<_>>()?;
        let draw = ChannelDraw::sample(self.topology, self.params, &self.servers, &self.receivers, &mut self.channel_rng);
        let activities: Vec<Activity> =
            (0..self.topology.n_clusters()).map(|c| activity_set(&draw, c, &policy)).collect();
        let per_slot: Vec<&[NormalizedPayload]> = normalized.chunks(m).collect();
        let mut cluster_payloads: Vec<Option<&[NormalizedPayload]>> = vec![None; self.topology.n_clusters()];
        for (slot, &c) in self.topology.collaborators.iter().enumerate() {
            cluster_payloads[c] = Some(per_slot[slot]);
        }
        let rx = uplink_receive(
            self.topology,
            &draw,
            &activities,
            &cluster_payloads,
            d,
            &policy,
            self.params,
            &self.budget,
            &mut self.channel_rng,
        );
        let bc = if global {
            Broadcast::inter(&rx, self.topology, self.params, &self.budget)
        } else {
            Broadcast::intra(&rx, self.params)
        };
        let stats = if global { &mut self.inter } else { &mut self.intra };
        for &c in &self.topology.collaborators {
            stats.active_sum += activities[c].len() as f64;
            stats.active_count += 1;
        }
        let global_agg = global.then(|| Aggregate::inter(&per_slot, self.topology, &activities, &self.budget));
        let mut out = Vec::with_capacity(payloads.len());
        for r in 0..self.receivers.len() {
            let dev = self.receivers[r];
            let local;
            let agg = match &global_agg {
                Some(a) => a,
                None => {
                    local = Aggregate::intra(per_slot[r / m], &activities[dev.cluster], &self.budget);
                    &local
                }
            };
            let est = receive(self.topology, &draw, &bc, r, agg, self.params, &self.budget, &mut self.channel_rng)?
                .estimate();
            let err = est.error_norm();
            let stats = if global { &mut self.inter } else { &mut self.intra };
            stats.err_sum += err;
            stats.count += 1;
            if self.learn.record_slots {
                self.slots.push(SlotRecord {
                    slot: self.slot,
                    inter: global,
                    cluster: dev.cluster,
                    device: dev.device,
                    error_norm: err,
                    active: agg.payloads.len(),
                    skip: est.skip,
                });
            }
            out.push((!est.skip).then_some(est.estimate));
        }
        self.slot += 1;
        Ok(out)
    }

    fn intra_gradient_step(&mut self) -> Result<()> {
        let grads: Vec<Vec<f64>> = (0..self.models.len()).map(|k| self.gradient(k)).collect();
        let est = self.aggregate(&grads, false)?;
        let mu = self.learn.mu;
        for (w, g) in self.models.iter_mut().zip(est) {
            if let Some(g) = g {
                w.iter_mut().zip(&g).for_each(|(w, g)| *w -= mu * g);
            }
        }
        Ok(())
    }

    fn model_sync(&mut self, global: bool) -> Result<()> {
        let models = self.models.clone();
        let est = self.aggregate(&models, global)?;
        for (w, e) in self.models.iter_mut().zip(est) {
            if let Some(e) = e {
                *w = e;
            }
        }
        Ok(())
    }

    fn record(&mut self, t: usize) -> RoundRecord {
        let n = self.models.len() as f64;
        let loss_mean = self.models.iter().map(|w| global_loss(self.task, w)).sum::<f64>() / n;
        let accuracy = match &self.task.test {
            Some(test) if test.labels().is_some() => {
                let idx: Vec<usize> = (0..test.n).collect();
                self.models.iter().filter_map(|w| test.accuracy(w, &idx)).sum::<f64>() / n
            }
            _ => f64::NAN,
        };
        let active = self.intra.active_sum + self.inter.active_sum;
        let active_n = self.intra.active_count + self.inter.active_count;
        let rec = RoundRecord {
            t,
            loss_mean,
            accuracy,
            intra_err_norm_mean: self.intra.mean_err(),
            inter_err_norm: self.inter.mean_err(),
            active_count_mean: if active_n == 0 { f64::NAN } else { active / active_n as f64 },
        };
        self.intra = SlotStats::new();
        self.inter = SlotStats::new();
        rec
    }

    fn train(mut self) -> Result<RoundTrace> {
        let mut rounds = vec![self.record(0)];
        let initial = rounds[0].loss_mean;
        let mut reference_models = Vec::with_capacity(self.learn.rounds);
        for t in 1..=self.learn.rounds {
            match self.learn.algorithm {
                Algorithm::MultiAirFed => {
                    for _ in 0..self.learn.tau {
                        self.intra_gradient_step()?;
                    }
                    self.local_steps(self.learn.gamma);
                }
                Algorithm::HierFed => {
                    for _ in 0..self.learn.tau {
                        self.local_steps(self.learn.gamma);
                        self.model_sync(false)?;
                    }
                }
            }
            reference_models.push(Self::exact_mean(&self.models));
            self.model_sync(true)?;
            let rec = self.record(t);
            if !rec.loss_mean.is_finite() || (initial > 0.0 && rec.loss_mean > DIVERGENCE_FACTOR * initial) {
                return Err(Error::Diverged { round: t, loss: rec.loss_mean, initial });
            }
            rounds.push(rec);
        }
        Ok(RoundTrace { rounds, reference_models, final_models: self.models, slots: self.slots })
    }
}

/// Runs `learn.algorithm` on `task` over `topology`. Channel draws use
/// substream [`CHANNEL_STREAM`] of `seed`; device k's minibatches use the
/// substream k + 1 above it.
pub fn run(topology: &Topology, params: &SystemParams, learn: &LearnParams, task: &Task, seed: u64) -> Result<RoundTrace> {
    Trainer::new(topology, params, learn, task, seed)?.train()
}

pub fn run_multiairfed(
    topology: &Topology,
    params: &SystemParams,
    learn: &LearnParams,
    task: &Task,
    seed: u64,
) -> Result<RoundTrace> {
    let learn = LearnParams { algorithm: Algorithm::MultiAirFed, ..learn.clone() };
    run(topology, params, &learn, task, seed)
}

pub fn run_hierfed(
    topology: &Topology,
    params: &SystemParams,
    learn: &LearnParams,
    task: &Task,
    seed: u64,
) -> Result<RoundTrace> {
    let learn = LearnParams { algorithm: Algorithm::HierFed, ..learn.clone() };
    run(topology, params, &learn, task, seed)
}
