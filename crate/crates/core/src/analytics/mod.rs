//! Closed-form and quadrature evaluation of the derived quantities.

mod bound;
mod expectations;
mod psi;
pub mod quad;
mod special;

pub use bound::{
    drift_factor, error_bounds, intra_scaling_factors, latency, lr_conditions, optimality_gap, gap_bound,
    truncated_inverse_downlink_gain, BoundForm, BoundInputs, BoundReport, ErrorBounds, LatencyInputs, TermBreakdown,
    ThetaCaps,
};
pub use expectations::{active_expectations, by_convolution, by_laplace, nonempty_count_pmf, ActiveExpectations};
pub use psi::{beta, default_x_max, interference_geometry, psi, PsiResult};
pub use special::exp_integral_e1;

use crate::channel::compute_rho;
use crate::error::Result;
use crate::spatial::SystemParams;

/// ρ, Ψ and β for one parameter set: what servers and devices need to
/// normalize and de-scale the analog signals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkBudget {
    pub rho: f64,
    /// Ψ including noise.
    pub psi: f64,
    pub psi_interference: f64,
    pub beta: f64,
}

impl LinkBudget {
    /// Ψ truncated at the simulation window, i.e. matched to the simulated network.
    pub fn compute(params: &SystemParams) -> Result<Self> {
        Self::with_x_max(params, params.window_radius)
    }

    pub fn with_x_max(params: &SystemParams, x_max: f64) -> Result<Self> {
        let p = psi(params, x_max)?;
        Ok(Self { rho: compute_rho(params)?, psi: p.value, psi_interference: p.interference, beta: beta(params)? })
    }
}
