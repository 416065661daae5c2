//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::analytics::{LatencyInputs, ThetaCaps};
use crate::error::{Error, Result};
use crate::learn::{Algorithm, Batch, LearnParams, PartitionKind, Transmission};
use crate::spatial::SystemParams;

/// Every accepted key: name, meaning with units, default (`None` = required).
pub const KEYS: &[(&str, &str, Option<&str>)] = &[
    ("lambda_p", "server density, m^-2 (or give lambda_p_per_km2 in km^-2)", Some("0.00002")),
    ("r0", "protective-zone radius around every server, m", Some("4")),
    ("R", "outer radius of the device annulus, m", Some("30")),
    ("M", "devices per cluster", Some("15")),
    ("C", "collaborating clusters", Some("3")),
    ("alpha", "path-loss exponent (> 2)", Some("4")),
    ("sigma_d2", "downlink fading variance", Some("10")),
    ("sigma_n2", "receiver noise power per complex entry (required)", None),
    ("P_u", "device average transmit power", Some("1")),
    ("P_d", "server transmit power", Some("1")),
    ("th0", "downlink gain threshold below which a device skips the update", Some("0.01")),
    ("th1", "uplink gain threshold for transmitting", Some("0.5")),
    ("window", "radius of the simulated disc, m", Some("1000")),
    ("hardcore", "thin servers to a 2*r0 hard core (true|false)", Some("true")),
    ("mu", "learning rate", Some("0.01")),
    ("tau", "intra-cluster iterations per global round", Some("6")),
    ("gamma", "local steps per global round", Some("2")),
    ("T", "global rounds", Some("40")),
    ("B", "minibatch size, or `full`", Some("full")),
    ("algorithm", "multiairfed | hierfed", Some("multiairfed")),
    ("transmission", "ota | orthogonal", Some("ota")),
    ("dataset", "blobs | regression | mnist", Some("blobs")),
    ("samples", "training samples", Some("2250")),
    ("test_samples", "held-out samples (blobs, mnist)", Some("1000")),
    ("features", "input features (blobs, regression)", Some("10")),
    ("classes", "classes (blobs)", Some("10")),
    ("separation", "std of the blob centres", Some("1.5")),
    ("cond", "feature covariance condition number (regression)", Some("10")),
    ("noise", "target noise std (regression)", Some("0.1")),
    ("partition", "iid | noniid (two labels per device)", Some("noniid")),
    ("mnist_images", "IDX image file; blobs are used when absent", Some("")),
    ("mnist_labels", "IDX label file", Some("")),
    ("trials", "independent realizations", Some("10")),
    ("seed", "base seed; trial k uses seed + k", Some("1")),
    ("paired", "also run the other algorithm on the same seeds (true|false)", Some("false")),
    ("record_slots", "emit per-slot estimation errors (true|false)", Some("false")),
    ("theta_cap_intra", "cap on intra-cluster receive factors", Some("1")),
    ("theta_cap_inter", "cap on inter-cluster receive factors", Some("1")),
    ("debug_rho_scale", "multiplies rho in the power-control check (negative control)", Some("1")),
    ("cycles_per_bit", "CPU cycles per bit of local data", Some("20")),
    ("data_bits", "local data size, bits", Some("2500000")),
    ("cpu_hz", "device CPU frequency, Hz", Some("1000000000")),
    ("latency_d", "model entries sent per broadcast", Some("1000000")),
    ("bandwidth_hz", "channel bandwidth, Hz", Some("1000000")),
    ("backhaul_factor", "backhaul time in broadcast times", Some("10")),
    ("validate_draws", "power-control draws in validate", Some("1000000")),
    ("validate_topologies", "topologies for the interference check", Some("200000")),
    ("validate_trials", "trials for the estimator checks", Some("20000")),
    ("validate_dim", "payload entries in the estimator checks", Some("8")),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    Blobs,
    Regression,
    Mnist,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub samples: usize,
    pub test_samples: usize,
    pub features: usize,
    pub classes: usize,
    pub separation: f64,
    pub cond: f64,
    pub noise: f64,
    pub partition: PartitionKind,
    pub mnist_images: String,
    pub mnist_labels: String,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatencySpec {
    pub cycles_per_bit: f64,
    pub data_bits: f64,
    pub cpu_hz: f64,
    pub d: f64,
    pub bandwidth_hz: f64,
    pub backhaul_factor: f64,
}

impl LatencySpec {
    pub fn inputs(&self) -> LatencyInputs {
        LatencyInputs::from_link(self.cycles_per_bit, self.data_bits, self.cpu_hz, self.d, self.bandwidth_hz, self.backhaul_factor)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidateSpec {
    pub draws: usize,
    pub topologies: usize,
    pub trials: usize,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub system: SystemParams,
    pub learn: LearnParams,
    pub dataset: DatasetSpec,
    pub trials: usize,
    pub seed: u64,
    pub paired: bool,
    pub theta_caps: ThetaCaps,
    pub debug_rho_scale: f64,
    pub latency: LatencySpec,
    pub validate: ValidateSpec,
}

struct Raw {
    values: BTreeMap<String, String>,
}

impl Raw {
    fn take<T: FromStr>(&mut self, key: &'static str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let (text, given) = match self.values.remove(key) {
            Some(v) => (v, true),
            None => match KEYS.iter().find(|k| k.0 == key).and_then(|k| k.2) {
                Some(d) => (d.to_string(), false),
                None => return Err(Error::Config(format!("missing required key `{key}`"))),
            },
        };
        text.parse().map_err(|e: T::Err| {
            let origin = if given { "" } else { " (default)" };
            Error::Config(format!("bad value `{text}` for `{key}`{origin}: {e}"))
        })
    }

    fn take_enum<T>(&mut self, key: &'static str, options: &[(&str, T)]) -> Result<T>
    where
        T: Copy,
    {
        let text: String = self.take(key)?;
        options.iter().find(|o| o.0 == text).map(|o| o.1).ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|o| o.0).collect();
            Error::Config(format!("bad value `{text}` for `{key}`: expected one of {}", names.join(", ")))
        })
    }
}

const ALGORITHMS: &[(&str, Algorithm)] = &[("multiairfed", Algorithm::MultiAirFed), ("hierfed", Algorithm::HierFed)];
const TRANSMISSIONS: &[(&str, Transmission)] = &[("ota", Transmission::Ota), ("orthogonal", Transmission::Orthogonal)];
const DATASETS: &[(&str, DatasetKind)] =
    &[("blobs", DatasetKind::Blobs), ("regression", DatasetKind::Regression), ("mnist", DatasetKind::Mnist)];
const PARTITIONS: &[(&str, PartitionKind)] = &[("iid", PartitionKind::Iid), ("noniid", PartitionKind::TwoClassNonIid)];

fn name_of<T: PartialEq>(options: &[(&'static str, T)], v: &T) -> &'static str {
    options.iter().find(|o| &o.1 == v).map(|o| o.0).unwrap_or("?")
}

impl SimConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw_line) in text.lines().enumerate() {
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: n + 1, reason: format!("expected `key = value`, got `{line}`") })?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if k != "lambda_p_per_km2" && !KEYS.iter().any(|e| e.0 == k) {
                return Err(Error::Config(format!("unknown key `{k}` on line {}", n + 1)));
            }
            if values.insert(k.clone(), v).is_some() {
                return Err(Error::Config(format!("key `{k}` given twice (line {})", n + 1)));
            }
        }
        if let Some(km2) = values.remove("lambda_p_per_km2") {
            if values.contains_key("lambda_p") {
                return Err(Error::Config("give either `lambda_p` or `lambda_p_per_km2`, not both".into()));
            }
            let v: f64 = km2
                .parse()
                .map_err(|e| Error::Config(format!("bad value `{km2}` for `lambda_p_per_km2`: {e}")))?;
            values.insert("lambda_p".into(), format!("{}", v / 1e6));
        }
        let mut raw = Raw { values };
        let system = SystemParams {
            lambda_p: raw.take("lambda_p")?,
            r0: raw.take("r0")?,
            r_outer: raw.take("R")?,
            m: raw.take("M")?,
            c: raw.take("C")?,
            alpha: raw.take("alpha")?,
            sigma_d2: raw.take("sigma_d2")?,
            sigma_n2: raw.take("sigma_n2")?,
            p_u: raw.take("P_u")?,
            p_d: raw.take("P_d")?,
            th0: raw.take("th0")?,
            th1: raw.take("th1")?,
            window_radius: raw.take("window")?,
            hardcore: raw.take("hardcore")?,
        };
        let batch_text: String = raw.take("B")?;
        let batch = if batch_text == "full" {
            Batch::Full
        } else {
            Batch::Mini(batch_text.parse().map_err(|e| Error::Config(format!("bad value `{batch_text}` for `B`: {e}")))?)
        };
        let learn = LearnParams {
            mu: raw.take("mu")?,
            tau: raw.take("tau")?,
            gamma: raw.take("gamma")?,
            rounds: raw.take("T")?,
            batch,
            algorithm: raw.take_enum("algorithm", ALGORITHMS)?,
            transmission: raw.take_enum("transmission", TRANSMISSIONS)?,
            init: None,
            record_slots: false,
        };
        let dataset = DatasetSpec {
            kind: raw.take_enum("dataset", DATASETS)?,
            samples: raw.take("samples")?,
            test_samples: raw.take("test_samples")?,
            features: raw.take("features")?,
            classes: raw.take("classes")?,
            separation: raw.take("separation")?,
            cond: raw.take("cond")?,
            noise: raw.take("noise")?,
            partition: raw.take_enum("partition", PARTITIONS)?,
            mnist_images: raw.take("mnist_images")?,
            mnist_labels: raw.take("mnist_labels")?,
        };
        let trials = raw.take("trials")?;
        let seed = raw.take("seed")?;
        let paired = raw.take("paired")?;
        let record_slots = raw.take("record_slots")?;
        let theta_caps = ThetaCaps { intra: raw.take("theta_cap_intra")?, inter: raw.take("theta_cap_inter")? };
        let debug_rho_scale = raw.take("debug_rho_scale")?;
        let latency = LatencySpec {
            cycles_per_bit: raw.take("cycles_per_bit")?,
            data_bits: raw.take("data_bits")?,
            cpu_hz: raw.take("cpu_hz")?,
            d: raw.take("latency_d")?,
            bandwidth_hz: raw.take("bandwidth_hz")?,
            backhaul_factor: raw.take("backhaul_factor")?,
        };
        let validate = ValidateSpec {
            draws: raw.take("validate_draws")?,
            topologies: raw.take("validate_topologies")?,
            trials: raw.take("validate_trials")?,
            dim: raw.take("validate_dim")?,
        };
        debug_assert!(raw.values.is_empty());
        let cfg = Self {
            system,
            learn: LearnParams { record_slots, ..learn },
            dataset,
            trials,
            seed,
            paired,
            theta_caps,
            debug_rho_scale,
            latency,
            validate,
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        self.system.validate()?;
        if self.trials == 0 {
            return Err(Error::Config("`trials` must be at least 1".into()));
        }
        if self.learn.tau == 0 || self.learn.rounds == 0 {
            return Err(Error::Config("`tau` and `T` must be at least 1".into()));
        }
        if !(self.learn.mu.is_finite() && self.learn.mu >= 0.0) {
            return Err(Error::Config("`mu` must be finite and non-negative".into()));
        }
        if self.learn.batch == Batch::Mini(0) {
            return Err(Error::Config("`B` must be at least 1".into()));
        }
        Ok(())
    }

    /// Canonical text: every key in table order, so parse(serialize(c)) == c.
    pub fn serialize(&self) -> String {
        let s = &self.system;
        let l = &self.learn;
        let d = &self.dataset;
        let batch = match l.batch {
            Batch::Full => "full".to_string(),
            Batch::Mini(b) => b.to_string(),
        };
        let values: Vec<(&str, String)> = vec![
            ("lambda_p", s.lambda_p.to_string()),
            ("r0", s.r0.to_string()),
            ("R", s.r_outer.to_string()),
            ("M", s.m.to_string()),
            ("C", s.c.to_string()),
            ("alpha", s.alpha.to_string()),
            ("sigma_d2", s.sigma_d2.to_string()),
            ("sigma_n2", s.sigma_n2.to_string()),
            ("P_u", s.p_u.to_string()),
            ("P_d", s.p_d.to_string()),
            ("th0", s.th0.to_string()),
            ("th1", s.th1.to_string()),
            ("window", s.window_radius.to_string()),
            ("hardcore", s.hardcore.to_string()),
            ("mu", l.mu.to_string()),
            ("tau", l.tau.to_string()),
            ("gamma", l.gamma.to_string()),
            ("T", l.rounds.to_string()),
            ("B", batch),
            ("algorithm", name_of(ALGORITHMS, &l.algorithm).into()),
            ("transmission", name_of(TRANSMISSIONS, &l.transmission).into()),
            ("dataset", name_of(DATASETS, &d.kind).into()),
            ("samples", d.samples.to_string()),
            ("test_samples", d.test_samples.to_string()),
            ("features", d.features.to_string()),
            ("classes", d.classes.to_string()),
            ("separation", d.separation.to_string()),
            ("cond", d.cond.to_string()),
            ("noise", d.noise.to_string()),
            ("partition", name_of(PARTITIONS, &d.partition).into()),
            ("mnist_images", d.mnist_images.clone()),
            ("mnist_labels", d.mnist_labels.clone()),
            ("trials", self.trials.to_string()),
            ("seed", self.seed.to_string()),
            ("paired", self.paired.to_string()),
            ("record_slots", l.record_slots.to_string()),
            ("theta_cap_intra", self.theta_caps.intra.to_string()),
            ("theta_cap_inter", self.theta_caps.inter.to_string()),
            ("debug_rho_scale", self.debug_rho_scale.to_string()),
            ("cycles_per_bit", self.latency.cycles_per_bit.to_string()),
            ("data_bits", self.latency.data_bits.to_string()),
            ("cpu_hz", self.latency.cpu_hz.to_string()),
            ("latency_d", self.latency.d.to_string()),
            ("bandwidth_hz", self.latency.bandwidth_hz.to_string()),
            ("backhaul_factor", self.latency.backhaul_factor.to_string()),
            ("validate_draws", self.validate.draws.to_string()),
            ("validate_topologies", self.validate.topologies.to_string()),
            ("validate_trials", self.validate.trials.to_string()),
            ("validate_dim", self.validate.dim.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in values {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// First 16 hex digits of the SHA-256 of the canonical text.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.serialize().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// `# `-prefixed provenance lines for output files.
    pub fn header(&self, what: &str) -> String {
        let mut out = format!("# multiairfed {what}\n# config_hash = {}\n# seed = {}\n", self.hash(), self.seed);
        for line in self.serialize().lines() {
            let _ = writeln!(out, "# {line}");
        }
        out
    }
}

/// Key reference for `--help`.
pub fn config_help() -> String {
    let width = KEYS.iter().map(|k| k.0.len()).max().unwrap_or(0);
    let mut out = String::from("Config keys (key = value, '#' starts a comment):\n");
    for (k, help, default) in KEYS {
        let d = match default {
            None => "required".to_string(),
            Some("") => "unset".to_string(),
            Some(d) => format!("default {d}"),
        };
        let _ = writeln!(out, "  {k:width$}  {help} [{d}]");
    }
    let _ = writeln!(out, "  {:width$}  alternative to lambda_p, km^-2", "lambda_p_per_km2");
    out
}
