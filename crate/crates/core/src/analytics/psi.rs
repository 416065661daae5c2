//! Expected per-entry uplink interference-plus-noise power Ψ at a server.
//!
//! Interfering devices belong to parents at distance [2·r0, x_max] from the
//! reference server and, like every device, stay outside the r0 protective
//! zone of each server. By Campbell's theorem the interference is
//!
//!   ρ·M·λ_p·E1(th1)·E_y[ ‖y‖^α ∫ |u|^{-α} du ],
//!
//! where u ranges over device positions with |u| ≥ r0 and parent distance
//! |u − y| in [2·r0, x_max]. The inner plane integral is taken in polar
//! coordinates around the server, with the admissible angle in closed form.

use std::f64::consts::PI;

use super::quad::{integrate_pieces, Tolerance};
use super::special::exp_integral_e1;
use crate::channel::compute_rho;
use crate::error::{domain, Result};
use crate::spatial::{mean_offset_radius_power, SystemParams};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsiResult {
    /// Ψ = interference + σ_n².
    pub value: f64,
    pub interference: f64,
    pub noise: f64,
    /// Upper bound on the interference from parents beyond `x_max`.
    pub tail_bound: f64,
    pub x_max: f64,
}

/// Default truncation radius, 10³·R.
pub fn default_x_max(params: &SystemParams) -> f64 {
    1e3 * params.r_outer
}

fn angle_inside(cos_limit: f64) -> f64 {
    cos_limit.clamp(-1.0, 1.0).acos()
}

/// ∫ |u|^{-α} over admissible device positions for a device whose offset from
/// its parent has length `y`.
fn plane_integral(y: f64, r0: f64, alpha: f64, x_max: f64) -> f64 {
    let tol = Tolerance { abs: 0.0, rel: 1e-13, max_intervals: 500 };
    let hard = 2.0 * r0;
    // Near zone: part of the circle of radius r is blocked by the parent
    // exclusion |u − y| < 2·r0.
    let near = |r: f64| {
        let c1 = (r * r + y * y - hard * hard) / (2.0 * r * y);
        r.powf(1.0 - alpha) * 2.0 * (PI - angle_inside(c1))
    };
    let mut pts = vec![r0];
    if y - hard > r0 {
        pts.push(y - hard);
    }
    pts.push(y + hard);
    let near_part = integrate_pieces(&mut { near }, &pts, tol).value;

    let lo = y + hard;
    let hi = x_max - y;
    let closed = 2.0 * PI * (lo.powf(2.0 - alpha) - hi.powf(2.0 - alpha)) / (alpha - 2.0);

    // Edge zone: the parent would fall beyond x_max for part of the circle.
    let edge = |r: f64| {
        let c2 = (r * r + y * y - x_max * x_max) / (2.0 * r * y);
        r.powf(1.0 - alpha) * 2.0 * angle_inside(c2)
    };
    let edge_part = integrate_pieces(&mut { edge }, &[x_max - y, x_max + y], tol).value;
    near_part + closed + edge_part
}

/// E_y[‖y‖^α ∫ |u|^{-α} du], the purely geometric factor of Ψ (units m^{2}).
pub fn interference_geometry(params: &SystemParams, x_max: f64) -> Result<f64> {
    let (r0, r, alpha) = (params.r0, params.r_outer, params.alpha);
    if !(alpha > 2.0) {
        return Err(domain("psi", format!("path-loss exponent must exceed 2, got {alpha}")));
    }
    if !(x_max >= 2.0 * r + 2.0 * r0) || !x_max.is_finite() {
        return Err(domain("psi", format!("x_max = {x_max} must be finite and at least 2(R + r0)")));
    }
    let norm = 2.0 / (r * r - r0 * r0);
    let mut outer = |y: f64| norm * y * y.powf(alpha) * plane_integral(y, r0, alpha, x_max);
    let mut pts = vec![r0];
    if 3.0 * r0 < r {
        pts.push(3.0 * r0);
    }
    pts.push(r);
    Ok(integrate_pieces(&mut outer, &pts, Tolerance { abs: 0.0, rel: 1e-12, max_intervals: 500 }).value)
}

/// Ψ truncated at parent distance `x_max`, with the neglected tail bounded.
pub fn psi(params: &SystemParams, x_max: f64) -> Result<PsiResult> {
    if !(params.alpha > 2.0) {
        return Err(domain("psi", format!("path-loss exponent must exceed 2, got {}", params.alpha)));
    }
    let noise = params.sigma_n2;
    if params.m == 0 || params.lambda_p == 0.0 {
        return Ok(PsiResult { value: noise, interference: 0.0, noise, tail_bound: 0.0, x_max });
    }
    let rho = compute_rho(params)?;
    let scale = rho * params.m as f64 * params.lambda_p * exp_integral_e1(params.th1)?;
    let interference = scale * interference_geometry(params, x_max)?;
    let (a, r) = (params.alpha, params.r_outer);
    let far = x_max - r;
    let tail = scale
        * mean_offset_radius_power(params, a)
        * 2.0
        * PI
        * (far.powf(2.0 - a) / (a - 2.0) + r * far.powf(1.0 - a) / (a - 1.0));
    Ok(PsiResult { value: interference + noise, interference, noise, tail_bound: tail, x_max })
}

/// Downlink interference-plus-noise constant
/// β = 2πλ_p σ_d² / ((α−2) r0^{α−2}) + σ_n²/P_d.
pub fn beta(params: &SystemParams) -> Result<f64> {
    let a = params.alpha;
    if !(a > 2.0) {
        return Err(domain("beta", format!("path-loss exponent must exceed 2, got {a}")));
    }
    if !(params.p_d > 0.0) {
        return Err(domain("beta", "server power P_d must be positive"));
    }
    Ok(2.0 * PI * params.lambda_p * params.sigma_d2 / ((a - 2.0) * params.r0.powf(a - 2.0)) + params.sigma_n2 / params.p_d)
}
