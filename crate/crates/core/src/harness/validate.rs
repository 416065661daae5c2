//! Monte Carlo versus closed-form validation suite.

use std::fmt::Write as _;

use super::checks::{
    enumerate_expectations, exact_recovery_error, measure_activity, measure_estimator, measure_interference,
    measure_tx_power, EstimatorKind,
};
use super::config::SimConfig;
use crate::analytics::{
    active_expectations, error_bounds, optimality_gap, gap_bound, BoundForm, BoundInputs, LinkBudget, ThetaCaps,
};
use crate::error::Result;
use crate::ota::ForeignDownlink;
use crate::spatial::SystemParams;

/// Relative tolerance of the interference check with and without hard-core thinning.
pub const PSI_TOL_HARDCORE: f64 = 0.20;
pub const PSI_TOL_PPP: f64 = 0.08;
pub const EXACT_TOL: f64 = 1e-9;
pub const IDENTITY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: String,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub config_hash: String,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect()
    }

    pub fn to_text(&self) -> String {
        let w = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let mut out = format!("# validate config_hash = {} seed = {}\n", self.config_hash, self.seed);
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{}  {:w$}  measured {:>14.6e}  expected {:>14.6e}  {}",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.expected,
                c.tolerance
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# validate config_hash = {} seed = {}\ncheck,pass,measured,expected,tolerance\n", self.config_hash, self.seed);
        for c in &self.checks {
            let _ = writeln!(out, "{},{},{:e},{:e},{}", c.name, c.pass, c.measured, c.expected, c.tolerance);
        }
        out
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b { 0.0 } else { (a - b).abs() / b.abs().max(f64::MIN_POSITIVE) }
}

/// Synthetic smoothness constants used only to exercise the C = 1 identity.
fn identity_inputs(cfg: &SimConfig, params: &SystemParams) -> Result<BoundInputs> {
    let budget = LinkBudget::compute(params)?;
    Ok(BoundInputs {
        l: 1.0,
        delta: 0.5,
        sigma2: 1.0,
        b: 1,
        mu: cfg.learn.mu,
        tau: cfg.learn.tau,
        gamma: cfg.learn.gamma,
        t: cfg.learn.rounds,
        expectations: active_expectations(params.m, 1, params.th1)?,
        err_bounds: error_bounds(params, &budget, cfg.theta_caps)?.for_dimension(cfg.validate.dim),
        f0_gap: 1.0,
    })
}

/// Runs the whole suite; every check is seeded from `cfg.seed`.
pub fn validate(cfg: &SimConfig) -> Result<ValidationReport> {
    let p = &cfg.system;
    let v = &cfg.validate;
    let seed = cfg.seed;
    let mut checks = Vec::new();

    let power = measure_tx_power(p, cfg.debug_rho_scale, v.draws, seed)?;
    checks.push(CheckResult {
        name: "power_control".into(),
        measured: power.mean,
        expected: p.p_u,
        tolerance: format!("[0.98, 1 + 3·SE] x P_u, SE {:.2e}", power.stderr),
        pass: power.mean >= 0.98 * p.p_u && power.mean <= p.p_u + 3.0 * power.stderr,
    });

    let act = measure_activity(p, v.draws, seed ^ 0xa5a5);
    let frac = (-p.th1).exp();
    checks.push(CheckResult {
        name: "activity_fraction".into(),
        measured: act.active_fraction.mean,
        expected: frac,
        tolerance: "4·SE".into(),
        pass: (act.active_fraction.mean - frac).abs() <= 4.0 * act.active_fraction.stderr,
    });
    let exact = active_expectations(p.m, p.c, p.th1)?.as_array();
    let names = ["inv_own", "inv_own_sq", "inv_all", "inv_all_sq", "square_share"];
    for ((name, e), m) in names.iter().zip(exact).zip(&act.expectations) {
        checks.push(CheckResult {
            name: format!("activity_{name}"),
            measured: m.mean,
            expected: e,
            tolerance: "4·SE".into(),
            pass: (m.mean - e).abs() <= 4.0 * m.stderr.max(1e-15),
        });
    }

    let (m_small, c_small) = (p.m.clamp(1, 4), p.c.clamp(1, 3));
    let enumerated = enumerate_expectations(m_small, c_small, p.th1).as_array();
    let closed = active_expectations(m_small, c_small, p.th1)?.as_array();
    let worst = enumerated.iter().zip(closed).map(|(a, b)| rel(b, *a)).fold(0.0, f64::max);
    checks.push(CheckResult {
        name: format!("expectations_enumeration_M{m_small}_C{c_small}"),
        measured: worst,
        expected: 0.0,
        tolerance: "relative 1e-12".into(),
        pass: worst <= IDENTITY_TOL,
    });

    if p.lambda_p > 0.0 && p.m > 0 {
        let inter = measure_interference(p, v.topologies, seed)?;
        let tol = if p.hardcore { PSI_TOL_HARDCORE } else { PSI_TOL_PPP };
        checks.push(CheckResult {
            name: "psi_interference".into(),
            measured: inter.measured.mean,
            expected: inter.analytic,
            tolerance: format!("relative {tol}, SE {:.2e}", inter.measured.stderr),
            pass: rel(inter.measured.mean, inter.analytic) <= tol,
        });
    }

    let budget = LinkBudget::compute(p)?;
    let ex = active_expectations(p.m, p.c, p.th1)?;
    for (kind, label) in [(EstimatorKind::Intra, "intra"), (EstimatorKind::Inter, "inter")] {
        let stats = measure_estimator(p, kind, ForeignDownlink::Rebroadcast, v.trials, v.dim, seed)?;
        let worst_z = stats.bias.iter().map(|b| b.mean.abs() / b.stderr.max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
        checks.push(CheckResult {
            name: format!("{label}_unbiased"),
            measured: worst_z,
            expected: 0.0,
            tolerance: "every entry within 3·SE".into(),
            pass: worst_z <= 3.0,
        });
        if kind == EstimatorKind::Intra {
            let model = measure_estimator(p, kind, ForeignDownlink::Independent, v.trials, v.dim, seed)?;
            let best = model.grid_argmin();
            checks.push(CheckResult {
                name: "intra_theta_optimal".into(),
                measured: model.kappas[best],
                expected: 1.0,
                tolerance: format!(
                    "grid argmin at κ = 1 (step 0.05), or κ_opt {:.3} within 3·SE ({:.3}) of 1",
                    model.kappa_opt, model.kappa_opt_se
                ),
                pass: (model.kappas[best] - 1.0).abs() < 1e-9 || (model.kappa_opt - 1.0).abs() <= 3.0 * model.kappa_opt_se,
            });
        }
        let eb = error_bounds(p, &budget, ThetaCaps::uniform(stats.max_sigma))?;
        let bound = match kind {
            EstimatorKind::Intra => ex.inv_own_sq * (eb.intra_up + eb.intra_down),
            EstimatorKind::Inter => ex.inv_all_sq * (eb.inter_up + eb.inter_down),
        };
        checks.push(CheckResult {
            name: format!("{label}_mse_within_bound"),
            measured: stats.mse.mean,
            expected: bound,
            tolerance: "measured ≤ bound".into(),
            pass: stats.mse.mean <= bound,
        });
        let exact_err = exact_recovery_error(p, kind, v.dim, 1e8, seed)?;
        checks.push(CheckResult {
            name: format!("{label}_exact_recovery"),
            measured: exact_err,
            expected: 0.0,
            tolerance: format!("relative {EXACT_TOL:e}"),
            pass: exact_err <= EXACT_TOL,
        });
    }

    let single = SystemParams { c: 1, ..p.clone() };
    let inputs = identity_inputs(cfg, &single)?;
    let general = gap_bound(&inputs)?.gap;
    let single_cluster = optimality_gap(&inputs, BoundForm::SingleCluster)?.gap;
    checks.push(CheckResult {
        name: "single_cluster_identity".into(),
        measured: general,
        expected: single_cluster,
        tolerance: "relative 1e-12".into(),
        pass: rel(general, single_cluster) <= IDENTITY_TOL,
    });

    Ok(ValidationReport { config_hash: cfg.hash(), seed, checks })
}
