//! Moments of the active-device counts, conditioned on every collaborating
//! cluster having at least one active device.
//!
//! Each cluster's count is Binomial(M, e^{-th1}) truncated to {1..M}; clusters
//! are independent, so the total |A| is a C-fold convolution of the truncated
//! law. Small instances are convolved exactly; large ones use the Laplace
//! identities E{1/S} = ∫ φ(t)^C dt and E{1/S²} = ∫ t φ(t)^C dt.

use super::quad::{integrate_pieces, Tolerance};
use crate::error::{invalid, Result};

/// The five active-device moments entering the convergence bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActiveExpectations {
    /// E{1/|A°|}, own cluster.
    pub inv_own: f64,
    /// E{1/|A°|²}.
    pub inv_own_sq: f64,
    /// E{1/|A|}, all collaborating clusters.
    pub inv_all: f64,
    /// E{1/|A|²}.
    pub inv_all_sq: f64,
    /// E{Σ_x |A^x|² / |A|²}.
    pub square_share: f64,
}

impl ActiveExpectations {
    pub fn as_array(&self) -> [f64; 5] {
        [self.inv_own, self.inv_own_sq, self.inv_all, self.inv_all_sq, self.square_share]
    }
}

/// Above this many support points of |A| the Laplace route replaces convolution.
const CONVOLUTION_LIMIT: usize = 4096;

/// Law of one cluster's active count given it is non-empty; index k = count.
pub fn nonempty_count_pmf(m: usize, th1: f64) -> Vec<f64> {
    let mut pmf = vec![0.0; m + 1];
    if th1 == 0.0 {
        pmf[m] = 1.0;
        return pmf;
    }
    let ln_p = -th1;
    let ln_q = (-(-th1).exp_m1()).ln();
    let nonempty = -((m as f64) * ln_q).exp_m1();
    let mut ln_binom = 0.0;
    for (k, slot) in pmf.iter_mut().enumerate().skip(1) {
        ln_binom += ((m - k + 1) as f64).ln() - (k as f64).ln();
        *slot = (ln_binom + k as f64 * ln_p + (m - k) as f64 * ln_q).exp() / nonempty;
    }
    pmf
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Computes the five moments for M devices per cluster, C clusters and
/// activity threshold th1 ≥ 0 (th1 = 0 gives the all-active limits).
pub fn active_expectations(m: usize, c: usize, th1: f64) -> Result<ActiveExpectations> {
    if m == 0 {
        return Err(invalid("M", "need at least one device per cluster"));
    }
    if c == 0 {
        return Err(invalid("C", "need at least one collaborating cluster"));
    }
    if !(th1 >= 0.0) || !th1.is_finite() {
        return Err(invalid("th1", format!("must be finite and non-negative, got {th1}")));
    }
    let pmf = nonempty_count_pmf(m, th1);
    let own = moments_of(&pmf);
    let (inv_all, inv_all_sq, square_share) = if c * m <= CONVOLUTION_LIMIT {
        by_convolution(&pmf, c)
    } else {
        by_laplace(&pmf, c)
    };
    Ok(ActiveExpectations { inv_own: own.0, inv_own_sq: own.1, inv_all, inv_all_sq, square_share })
}

fn moments_of(pmf: &[f64]) -> (f64, f64) {
    pmf.iter().enumerate().skip(1).fold((0.0, 0.0), |(a, b), (k, &p)| {
        let k = k as f64;
        (a + p / k, b + p / (k * k))
    })
}

/// Exact route: law of the other C−1 clusters by repeated convolution, then
/// the own cluster is added explicitly so the squared share is available.
pub fn by_convolution(pmf: &[f64], c: usize) -> (f64, f64, f64) {
    let mut rest = vec![1.0];
    for _ in 1..c {
        rest = convolve(&rest, pmf);
    }
    let (mut inv, mut inv_sq, mut share) = (0.0, 0.0, 0.0);
    for (k, &pk) in pmf.iter().enumerate().skip(1) {
        if pk == 0.0 {
            continue;
        }
        let kf = k as f64;
        for (j, &pj) in rest.iter().enumerate() {
            if pj == 0.0 {
                continue;
            }
            let s = (k + j) as f64;
            let w = pk * pj;
            inv += w / s;
            inv_sq += w / (s * s);
            share += w * kf * kf / (s * s);
        }
    }
    (inv, inv_sq, c as f64 * share)
}

/// Laplace-transform route for large C.
pub fn by_laplace(pmf: &[f64], c: usize) -> (f64, f64, f64) {
    let mean: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
    let cf = c as f64;
    // t = s / (C·mean): the integrands decay like e^{-s} in the bulk and no
    // slower than e^{-s/M} in the tail since every cluster holds ≥ 1 device.
    let scale = 1.0 / (cf * mean);
    let laplace = |t: f64| -> (f64, f64) {
        pmf.iter().enumerate().skip(1).fold((0.0, 0.0), |(phi, sq), (k, &p)| {
            let e = p * (-t * k as f64).exp();
            (phi + e, sq + e * (k * k) as f64)
        })
    };
    let m = (pmf.len() - 1) as f64;
    let mut points = vec![0.0];
    let mut edge = 0.5;
    while edge < 60.0 * m.max(1.0) {
        points.push(edge);
        edge *= 2.0;
    }
    points.push(edge);
    let tol = Tolerance { abs: 0.0, rel: 1e-14, max_intervals: 4000 };
    let inv = integrate_pieces(&mut |s: f64| laplace(s * scale).0.powf(cf) * scale, &points, tol).value;
    let inv_sq = integrate_pieces(
        &mut |s: f64| {
            let t = s * scale;
            t * laplace(t).0.powf(cf) * scale
        },
        &points,
        tol,
    )
    .value;
    let share = integrate_pieces(
        &mut |s: f64| {
            let t = s * scale;
            let (phi, sq) = laplace(t);
            t * sq * phi.powf(cf - 1.0) * scale
        },
        &points,
        tol,
    )
    .value;
    (inv, inv_sq, cf * share)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pmf_sums_to_one() {
        for &th in &[0.0, 0.1, 0.5, 3.0] {
            let s: f64 = nonempty_count_pmf(15, th).iter().sum();
            assert!((s - 1.0).abs() < 1e-14, "th1={th}: {s}");
        }
    }

    #[test]
    fn routes_agree() {
        let pmf = nonempty_count_pmf(15, 0.5);
        let a = by_convolution(&pmf, 120);
        let b = by_laplace(&pmf, 120);
        assert!((a.0 / b.0 - 1.0).abs() < 1e-10, "{a:?} {b:?}");
        assert!((a.1 / b.1 - 1.0).abs() < 1e-10, "{a:?} {b:?}");
        assert!((a.2 / b.2 - 1.0).abs() < 1e-10, "{a:?} {b:?}");
    }
}
