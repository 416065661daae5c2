use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Result};

use super::data::{Dataset, Targets};

/// Smoothness and variance constants of a quadratic task.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticConstants {
    /// Largest eigenvalue over the device Hessians.
    pub l: f64,
    /// Smallest eigenvalue of the global Hessian.
    pub delta: f64,
    pub w_star: Vec<f64>,
    pub f_star: f64,
    /// Upper bound on max_y B·E‖g_y − ∇F‖² over the ball of radius `radius`
    /// around w*, where g_y is a size-B with-replacement minibatch gradient.
    pub sigma2: f64,
    pub radius: f64,
}

struct DeviceMoments {
    h: DMatrix<f64>,
    g: DVector<f64>,
    /// (1/D)Σ‖a‖²·a aᵀ, (1/D)Σ‖a‖²·b·a and (1/D)Σ‖a‖²·b²
    h4: DMatrix<f64>,
    g4: DVector<f64>,
    c4: f64,
}

fn moments(data: &Dataset, shard: &[usize], b: &[f64]) -> DeviceMoments {
    let p = data.p;
    let mut m = DeviceMoments {
        h: DMatrix::zeros(p, p),
        g: DVector::zeros(p),
        h4: DMatrix::zeros(p, p),
        g4: DVector::zeros(p),
        c4: 0.0,
    };
    let inv = 1.0 / shard.len() as f64;
    for &i in shard {
        let a = DVector::from_column_slice(data.row(i));
        let n2 = a.norm_squared();
        let aa = &a * a.transpose();
        m.h += &aa * inv;
        m.g += &a * (b[i] * inv);
        m.h4 += aa * (n2 * inv);
        m.g4 += &a * (n2 * b[i] * inv);
        m.c4 += n2 * b[i] * b[i] * inv;
    }
    m
}

/// Computes L, δ, w*, F* and σ² for the equal-weight average of the shard losses.
///
/// σ²(w) for one device is B‖∇F_y(w) − ∇F(w)‖² + (1/D)Σ‖∇ℓ_i(w) − ∇F_y(w)‖²,
/// a convex quadratic in w; it is bounded over the ball by
/// q(w*) + ‖∇q(w*)‖·r + ½λ_max(∇²q)·r².
pub fn quadratic_constants(data: &Dataset, shards: &[Vec<usize>], batch: usize, radius: f64) -> Result<QuadraticConstants> {
    let Targets::Real(b) = &data.targets else {
        return Err(invalid("task", "quadratic constants need real-valued targets"));
    };
    if shards.is_empty() || shards.iter().any(|s| s.is_empty()) {
        return Err(invalid("shards", "every device needs at least one sample"));
    }
    let p = data.p;
    let per: Vec<DeviceMoments> = shards.iter().map(|s| moments(data, s, b)).collect();
    let n = per.len() as f64;
    let h = per.iter().fold(DMatrix::zeros(p, p), |acc, m| acc + &m.h) / n;
    let g = per.iter().fold(DVector::zeros(p), |acc, m| acc + &m.g) / n;
    let l = per
        .iter()
        .map(|m| SymmetricEigen::new(m.h.clone()).eigenvalues.max())
        .fold(f64::NEG_INFINITY, f64::max);
    let delta = SymmetricEigen::new(h.clone()).eigenvalues.min();
    let w_star = h.clone().cholesky().ok_or_else(|| invalid("task", "global Hessian is singular"))?.solve(&g);
    let f_star = {
        let w: Vec<f64> = w_star.iter().copied().collect();
        shards.iter().map(|s| data.mean_loss(&w, s)).sum::<f64>() / n
    };
    let bsz = batch as f64;
    let mut sigma2 = 0.0f64;
    for m in &per {
        // bias(w) = (H_y − H)w − (g_y − g); spread(w) = wᵀ(H4 − H_y²)w − 2wᵀ(g4 − H_y g_y) + c4 − ‖g_y‖²
        let dh = &m.h - &h;
        let dg = &m.g - &g;
        let q_mat = (&dh * &dh) * bsz + (&m.h4 - &m.h * &m.h);
        let q_lin = (dh.transpose() * &dg) * bsz + (&m.g4 - &m.h * &m.g);
        let q_const = dg.norm_squared() * bsz + m.c4 - m.g.norm_squared();
        let q_at = (w_star.transpose() * &q_mat * &w_star)[(0, 0)] - 2.0 * q_lin.dot(&w_star) + q_const;
        let grad = (&q_mat * &w_star - &q_lin) * 2.0;
        let top = SymmetricEigen::new(q_mat.clone()).eigenvalues.max();
        sigma2 = sigma2.max(q_at.max(0.0) + grad.norm() * radius + top * radius * radius);
    }
    Ok(QuadraticConstants { l, delta, w_star: w_star.iter().copied().collect(), f_star, sigma2, radius })
}
