//! Rayleigh fading, truncated channel-inversion power control and activity sets.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::analytics::exp_integral_e1;
use crate::error::{domain, Result};
use crate::rng::SimRng;
use crate::spatial::{mean_offset_radius_power, SystemParams, Topology};

/// Circularly-symmetric complex Gaussian with E|z|² = `power`.
pub fn complex_gaussian(rng: &mut SimRng, power: f64) -> Complex64 {
    let s = (power / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// A device, addressed by cluster and index within the cluster.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DeviceRef {
    pub cluster: usize,
    pub device: usize,
}

/// Fading for one slot.
///
/// Uplink coefficients are drawn from every device to each server in
/// `observed` (and always to its own server); downlink coefficients from every
/// observed server to each receiver.
#[derive(Clone, Debug)]
pub struct ChannelDraw {
    pub m: usize,
    pub n_clusters: usize,
    pub observed: Vec<usize>,
    pub receivers: Vec<DeviceRef>,
    own: Vec<Complex64>,
    cross: Vec<Complex64>,
    down: Vec<Complex64>,
}

impl ChannelDraw {
    pub fn sample(
        topology: &Topology,
        params: &SystemParams,
        observed: &[usize],
        receivers: &[DeviceRef],
        rng: &mut SimRng,
    ) -> Self {
        let (nc, m, no) = (topology.n_clusters(), topology.devices_per_cluster(), observed.len());
        let mut own = Vec::with_capacity(nc * m);
        let mut cross = Vec::with_capacity(nc * m * no);
        for c in 0..nc {
            for _ in 0..m {
                let f = complex_gaussian(rng, 1.0);
                own.push(f);
                for &z in observed {
                    cross.push(if z == c { f } else { complex_gaussian(rng, 1.0) });
                }
            }
        }
        let down = (0..receivers.len() * no).map(|_| complex_gaussian(rng, params.sigma_d2)).collect();
        Self { m, n_clusters: nc, observed: observed.to_vec(), receivers: receivers.to_vec(), own, cross, down }
    }

    /// Uplink coefficient from a device to its own server.
    pub fn own(&self, cluster: usize, device: usize) -> Complex64 {
        self.own[cluster * self.m + device]
    }

    /// Uplink coefficient from a device to the `k`-th observed server.
    pub fn uplink(&self, cluster: usize, device: usize, k: usize) -> Complex64 {
        self.cross[(cluster * self.m + device) * self.observed.len() + k]
    }

    /// Downlink coefficient from the `k`-th observed server to receiver `r`.
    pub fn downlink(&self, r: usize, k: usize) -> Complex64 {
        self.down[r * self.observed.len() + k]
    }

    /// Position of server `z` in `observed`.
    pub fn observed_index(&self, z: usize) -> Option<usize> {
        self.observed.iter().position(|&o| o == z)
    }
}

/// Truncated channel inversion: active devices pre-compensate path loss and
/// fading so their signal arrives with amplitude √ρ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerPolicy {
    pub rho: f64,
    pub th1: f64,
    pub alpha: f64,
    pub p_u: f64,
}

impl PowerPolicy {
    pub fn new(params: &SystemParams) -> Result<Self> {
        Ok(Self { rho: compute_rho(params)?, th1: params.th1, alpha: params.alpha, p_u: params.p_u })
    }
}

/// ρ such that the average transmit power equals P_u:
/// ρ = (2+α)(R² − r0²) / (2·E1(th1)·(R^{α+2} − r0^{α+2})) · P_u.
pub fn compute_rho(params: &SystemParams) -> Result<f64> {
    if !(params.th1 > 0.0) {
        return Err(domain("compute_rho", "th1 must be positive; at th1 = 0 the inverse-gain moment diverges"));
    }
    Ok(params.p_u / (exp_integral_e1(params.th1)? * mean_offset_radius_power(params, params.alpha)))
}

/// Devices of one cluster that transmit in a slot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Activity {
    pub devices: Vec<usize>,
    /// No device cleared th1 and the strongest one transmits at full power.
    pub fallback: bool,
}

impl Activity {
    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }
}

pub fn activity_set(draw: &ChannelDraw, cluster: usize, policy: &PowerPolicy) -> Activity {
    let gains = (0..draw.m).map(|d| draw.own(cluster, d).norm_sqr());
    let devices: Vec<usize> = gains.clone().enumerate().filter(|&(_, g)| g >= policy.th1).map(|(d, _)| d).collect();
    if !devices.is_empty() || draw.m == 0 {
        return Activity { devices, fallback: false };
    }
    let best = gains.enumerate().max_by(|a, b| a.1.total_cmp(&b.1)).map(|(d, _)| d).unwrap_or(0);
    Activity { devices: vec![best], fallback: true }
}

/// Transmit amplitude p for a device with own-server fading `f` at offset
/// length `y_norm`.
pub fn tx_amplitude(f: Complex64, y_norm: f64, policy: &PowerPolicy, fallback: bool) -> Complex64 {
    if fallback {
        return Complex64::from_polar(policy.p_u.sqrt(), -f.arg());
    }
    if f.norm_sqr() >= policy.th1 {
        Complex64::new(policy.rho.sqrt(), 0.0) / (y_norm.powf(-policy.alpha / 2.0) * f)
    } else {
        Complex64::new(0.0, 0.0)
    }
}
