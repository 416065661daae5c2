//! Wireless error bounds and the convergence (optimality-gap) bound.

use super::expectations::ActiveExpectations;
use super::special::exp_integral_e1;
use super::LinkBudget;
use crate::error::{domain, invalid, Result};
use crate::spatial::{mean_offset_radius_power, SystemParams};

/// Upper bounds θ^{bo} (intra) and θ^{b} (inter) on the receive scaling factors.
///
/// Any θ produced by the estimators is at most the largest payload std in its
/// sum, so a cap on payload std is a valid cap on θ and also bounds
/// |θ − σ_y| for every device.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThetaCaps {
    pub intra: f64,
    pub inter: f64,
}

impl ThetaCaps {
    pub fn uniform(cap: f64) -> Self {
        Self { intra: cap, inter: cap }
    }
}

/// Per-entry mean-square error bounds of the four wireless error terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorBounds {
    pub intra_up: f64,
    pub intra_down: f64,
    pub inter_up: f64,
    pub inter_down: f64,
}

impl ErrorBounds {
    pub const ZERO: Self = Self { intra_up: 0.0, intra_down: 0.0, inter_up: 0.0, inter_down: 0.0 };

    /// Whole-vector bounds for a d-entry payload (per-entry values times d).
    pub fn for_dimension(&self, d: usize) -> Self {
        let k = d as f64;
        Self {
            intra_up: self.intra_up * k,
            intra_down: self.intra_down * k,
            inter_up: self.inter_up * k,
            inter_down: self.inter_down * k,
        }
    }
}

/// E{1/(|f^o|²‖y0‖^{-α}) ; |f^o|² ≥ th0}: downlink inverse gain truncated at th0.
pub fn truncated_inverse_downlink_gain(params: &SystemParams) -> Result<f64> {
    if !(params.th0 > 0.0) {
        return Err(domain("error_bounds", "downlink threshold th0 must be positive for a finite bound"));
    }
    let inv_fading = exp_integral_e1(params.th0 / params.sigma_d2)? / params.sigma_d2;
    Ok(inv_fading * mean_offset_radius_power(params, params.alpha))
}

pub fn error_bounds(params: &SystemParams, budget: &LinkBudget, caps: ThetaCaps) -> Result<ErrorBounds> {
    if caps.intra < 0.0 || caps.inter < 0.0 {
        return Err(invalid("theta_caps", "caps must be non-negative"));
    }
    let load = params.m as f64 * (-params.th1).exp() + budget.psi / budget.rho;
    let down = budget.beta * truncated_inverse_downlink_gain(params)?;
    let c = params.c as f64;
    let (bo2, b2) = (caps.intra * caps.intra, caps.inter * caps.inter);
    Ok(ErrorBounds {
        intra_up: bo2 * load,
        intra_down: bo2 * down * load,
        inter_up: c * b2 * load,
        inter_down: c * b2 * down * load,
    })
}

/// Everything the optimality-gap bound depends on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundInputs {
    pub l: f64,
    pub delta: f64,
    pub sigma2: f64,
    pub b: usize,
    pub mu: f64,
    pub tau: usize,
    pub gamma: usize,
    pub t: usize,
    pub expectations: ActiveExpectations,
    /// Whole-vector error bounds (see [`ErrorBounds::for_dimension`]).
    pub err_bounds: ErrorBounds,
    pub f0_gap: f64,
}

/// Contributions to the error bracket; they sum to [`BoundReport::bracket`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TermBreakdown {
    /// Intra-cluster gradient noise through the τ(τ−1)/2 + τγ drift factor.
    pub grad_intra: f64,
    /// Gradient noise carried by the cluster-share moment; vanishes as C → ∞.
    pub grad_share: f64,
    /// Noise of the γ purely local steps.
    pub grad_local: f64,
    /// Local-step noise averaged over all collaborators; vanishes as C → ∞.
    pub grad_global: f64,
    pub intra_up: f64,
    pub intra_down: f64,
    pub inter_up: f64,
    pub inter_down: f64,
}

impl TermBreakdown {
    pub fn sum(&self) -> f64 {
        self.grad_intra
            + self.grad_share
            + self.grad_local
            + self.grad_global
            + self.intra_up
            + self.intra_down
            + self.inter_up
            + self.inter_down
    }

    /// The four terms that vanish as the number of collaborating clusters grows.
    pub fn vanishing(&self) -> f64 {
        self.grad_share + self.grad_global + self.inter_up + self.inter_down
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundReport {
    pub gap: f64,
    /// μ(τ+γ)δ ≤ 1, the intra-step condition and the local-step condition.
    pub lr_conditions_ok: [bool; 3],
    pub contraction: f64,
    /// (1 − c^T)/(1 − c) with c the per-round contraction.
    pub accumulation: f64,
    pub bracket: f64,
    pub terms: TermBreakdown,
}

/// Which closed form to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundForm {
    /// General C.
    General,
    /// Single collaborating cluster, written with own-cluster moments only.
    SingleCluster,
    /// Limit of infinitely many collaborating clusters.
    ManyClusters,
}

/// Intra-cluster drift constant L²μ³/2·(τ(τ−1)/2 + τγ).
pub fn drift_factor(inputs: &BoundInputs) -> f64 {
    let (l, mu, tau, gamma) = (inputs.l, inputs.mu, inputs.tau as f64, inputs.gamma as f64);
    l * l * mu.powi(3) / 2.0 * (tau * (tau - 1.0) / 2.0 + tau * gamma)
}

/// Scaling factors multiplying E{1/|A°|²} times the intra uplink and downlink
/// error bounds in the general form.
pub fn intra_scaling_factors(inputs: &BoundInputs) -> (f64, f64) {
    let k = drift_factor(inputs);
    let half = inputs.l * inputs.mu * inputs.mu / 2.0 * inputs.tau as f64;
    let e = &inputs.expectations;
    (k + half * e.square_share, k + half * e.inv_all)
}

pub fn lr_conditions(inputs: &BoundInputs) -> [bool; 3] {
    let (l, mu, tau, gamma) = (inputs.l, inputs.mu, inputs.tau as f64, inputs.gamma as f64);
    [
        mu * (tau + gamma) * inputs.delta <= 1.0,
        1.0 - l * l * mu * mu * tau * (tau - 1.0) / 2.0 - l * mu * tau - l * l * mu * mu * tau * gamma >= 0.0,
        1.0 - l * l * mu * mu * gamma * (gamma - 1.0) / 2.0 - l * mu * gamma >= 0.0,
    ]
}

fn validate(inputs: &BoundInputs) -> Result<()> {
    if !(inputs.delta > 0.0) || !(inputs.l >= inputs.delta) {
        return Err(invalid("L/delta", format!("need L ≥ δ > 0, got L={} δ={}", inputs.l, inputs.delta)));
    }
    if !(inputs.mu > 0.0) {
        return Err(invalid("mu", "learning rate must be positive"));
    }
    if inputs.b == 0 || inputs.tau == 0 || inputs.t == 0 {
        return Err(invalid("B/tau/T", "batch size, τ and T must be at least 1"));
    }
    if inputs.sigma2 < 0.0 || inputs.f0_gap < 0.0 {
        return Err(invalid("sigma2/F0_gap", "must be non-negative"));
    }
    let eb = inputs.err_bounds;
    if [eb.intra_up, eb.intra_down, eb.inter_up, eb.inter_down].iter().any(|v| !(*v >= 0.0)) {
        return Err(invalid("err_bounds", "error bounds must be non-negative"));
    }
    let c = inputs.mu * (inputs.tau + inputs.gamma) as f64 * inputs.delta;
    if c > 1.0 {
        return Err(domain("gap_bound", format!("μ(τ+γ)δ = {c} exceeds 1, the contraction factor is negative")));
    }
    Ok(())
}

/// Evaluates the optimality-gap bound in the requested form.
pub fn optimality_gap(inputs: &BoundInputs, form: BoundForm) -> Result<BoundReport> {
    validate(inputs)?;
    let (l, mu, tau, gamma) = (inputs.l, inputs.mu, inputs.tau as f64, inputs.gamma as f64);
    let noise = inputs.sigma2 / inputs.b as f64;
    let e = inputs.expectations;
    let eb = inputs.err_bounds;
    let k = drift_factor(inputs);
    let half = l * mu * mu / 2.0;
    let grad_local = l * l * mu.powi(3) / 4.0 * noise * gamma * (gamma - 1.0);
    let down_tail = l * l * mu * (tau + gamma);

    let terms = match form {
        BoundForm::General => TermBreakdown {
            grad_intra: k * noise * e.inv_own,
            grad_share: half * noise * tau * e.inv_own * e.square_share,
            grad_local,
            grad_global: half * gamma * noise * e.inv_all,
            intra_up: e.inv_own_sq * (k + half * tau * e.square_share) * eb.intra_up,
            intra_down: e.inv_own_sq * (k + half * tau * e.inv_all) * eb.intra_down,
            inter_up: l / 2.0 * e.inv_all_sq * eb.inter_up,
            inter_down: e.inv_all_sq * (down_tail + l / 2.0 * e.inv_all + l) * eb.inter_down,
        },
        BoundForm::SingleCluster => {
            // Up- and downlink are each a single combined coefficient here; the
            // inter-cluster errors coincide with the intra ones and are folded in.
            let up = e.inv_own_sq * (k + half * tau + l / 2.0) * eb.intra_up;
            let down = e.inv_own_sq * (k + half * tau * e.inv_own + down_tail + l / 2.0 * e.inv_own + l) * eb.intra_down;
            TermBreakdown {
                grad_intra: k * noise * e.inv_own,
                grad_share: half * noise * tau * e.inv_own,
                grad_local,
                grad_global: half * gamma * noise * e.inv_own,
                intra_up: up,
                intra_down: down,
                inter_up: 0.0,
                inter_down: 0.0,
            }
        }
        BoundForm::ManyClusters => TermBreakdown {
            grad_intra: k * noise * e.inv_own,
            grad_local,
            intra_up: e.inv_own_sq * k * eb.intra_up,
            intra_down: e.inv_own_sq * k * eb.intra_down,
            ..TermBreakdown::default()
        },
    };

    let rate = mu * (tau + gamma) * inputs.delta;
    let contraction = 1.0 - rate;
    let decay = contraction.powi(inputs.t as i32);
    let accumulation = (1.0 - decay) / rate;
    let bracket = terms.sum();
    Ok(BoundReport {
        gap: decay * inputs.f0_gap + accumulation * bracket,
        lr_conditions_ok: lr_conditions(inputs),
        contraction,
        accumulation,
        bracket,
        terms,
    })
}

/// The general optimality-gap bound.
pub fn gap_bound(inputs: &BoundInputs) -> Result<BoundReport> {
    optimality_gap(inputs, BoundForm::General)
}

/// Communication latency T·(t_BH + 2t_BC + γ·t_CM + τ·(t_CM + 2t_BC)) in seconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatencyInputs {
    /// Backhaul time per inter-cluster aggregation (s).
    pub t_bh: f64,
    /// One broadcast or upload over the air (s).
    pub t_bc: f64,
    /// One local computation step (s).
    pub t_cm: f64,
}

impl LatencyInputs {
    /// Derives the three times from link and compute parameters:
    /// t_CM = c·N_b/f, t_BC = d/W, t_BH = backhaul_factor·t_BC.
    pub fn from_link(cycles_per_bit: f64, data_bits: f64, cpu_hz: f64, d: f64, bandwidth_hz: f64, backhaul_factor: f64) -> Self {
        let t_bc = d / bandwidth_hz;
        Self { t_bh: backhaul_factor * t_bc, t_bc, t_cm: cycles_per_bit * data_bits / cpu_hz }
    }
}

pub fn latency(inp: &LatencyInputs, t: usize, tau: usize, gamma: usize) -> f64 {
    let (t, tau, gamma) = (t as f64, tau as f64, gamma as f64);
    t * (inp.t_bh + 2.0 * inp.t_bc + gamma * inp.t_cm + tau * (inp.t_cm + 2.0 * inp.t_bc))
}
