//! Labelled tables behind the `analytic`, `bound` and `latency` commands.

use std::fmt::Write as _;

use super::config::SimConfig;
use super::experiment::build_task;
use crate::analytics::{
    active_expectations, error_bounds, exp_integral_e1, latency, optimality_gap, psi, gap_bound, BoundForm,
    BoundInputs, ErrorBounds, LinkBudget,
};
use crate::error::{invalid, Result};
use crate::learn::{global_loss, quadratic_constants, Batch, QuadraticConstants, Task, Transmission};

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub quantity: String,
    pub value: f64,
    pub method: &'static str,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: String,
    pub rows: Vec<Row>,
}

impl Table {
    fn push(&mut self, quantity: impl Into<String>, value: f64, method: &'static str, note: impl Into<String>) {
        self.rows.push(Row { quantity: quantity.into(), value, method, note: note.into() });
    }

    pub fn get(&self, quantity: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.quantity == quantity).map(|r| r.value)
    }

    pub fn to_text(&self) -> String {
        let w = self.rows.iter().map(|r| r.quantity.len()).max().unwrap_or(0);
        let mut out = self.header.clone();
        for r in &self.rows {
            let _ = writeln!(out, "{:w$}  {:>14.6e}  {:<12}  {}", r.quantity, r.value, r.method, r.note);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}quantity,value,method,note\n", self.header);
        for r in &self.rows {
            let _ = writeln!(out, "{},{:e},{},{}", r.quantity, r.value, r.method, r.note.replace(',', ";"));
        }
        out
    }
}

/// ρ, Ψ, β, the five activity moments and the four per-entry error bounds.
pub fn analytic_table(cfg: &SimConfig) -> Result<Table> {
    let p = &cfg.system;
    let budget = LinkBudget::compute(p)?;
    let ps = psi(p, p.window_radius)?;
    let mut t = Table { header: cfg.header("analytic"), rows: Vec::new() };
    t.push("E1(th1)", exp_integral_e1(p.th1)?, "series/cf", "relative 1e-10");
    t.push("rho", budget.rho, "closed form", "");
    t.push("psi", budget.psi, "quadrature", format!("x_max {} m, tail bound {:.3e}", ps.x_max, ps.tail_bound));
    t.push("psi_interference", ps.interference, "quadrature", "");
    t.push("psi_over_rho", budget.psi / budget.rho, "derived", "");
    t.push("beta", budget.beta, "closed form", "");
    let ex = active_expectations(p.m, p.c, p.th1)?;
    let names = ["E_inv_own", "E_inv_own_sq", "E_inv_all", "E_inv_all_sq", "E_square_share"];
    for (n, v) in names.iter().zip(ex.as_array()) {
        t.push(*n, v, "exact sum", "conditioned on non-empty clusters");
    }
    let eb = error_bounds(p, &budget, cfg.theta_caps)?;
    let caps = format!("per entry, caps {}/{}", cfg.theta_caps.intra, cfg.theta_caps.inter);
    t.push("err_intra_up", eb.intra_up, "closed form", caps.clone());
    t.push("err_intra_down", eb.intra_down, "closed form", caps.clone());
    t.push("err_inter_up", eb.inter_up, "closed form", caps.clone());
    t.push("err_inter_down", eb.inter_down, "closed form", caps);
    Ok(t)
}

/// Bound inputs for a quadratic task: constants from the data, σ² bounded over
/// a ball of radius twice ‖w0 − w*‖ around w*. Orthogonal mode has no wireless
/// error and every device participates.
pub fn quadratic_bound_inputs(cfg: &SimConfig, task: &Task, caps: crate::analytics::ThetaCaps) -> Result<(BoundInputs, QuadraticConstants)> {
    let dim = task.train.dim();
    let w0 = cfg.learn.init.clone().unwrap_or_else(|| vec![0.0; dim]);
    let b = match cfg.learn.batch {
        Batch::Mini(b) => b,
        Batch::Full => task.shards.iter().map(Vec::len).min().unwrap_or(1),
    };
    let probe = quadratic_constants(&task.train, &task.shards, b, 0.0)?;
    let dist = w0.iter().zip(&probe.w_star).map(|(a, s)| (a - s).powi(2)).sum::<f64>().sqrt();
    let qc = quadratic_constants(&task.train, &task.shards, b, 2.0 * dist)?;
    let p = &cfg.system;
    let (expectations, err_bounds) = match cfg.learn.transmission {
        Transmission::Ota => {
            let budget = LinkBudget::compute(p)?;
            (active_expectations(p.m, p.c, p.th1)?, error_bounds(p, &budget, caps)?.for_dimension(dim))
        }
        Transmission::Orthogonal => (active_expectations(p.m, p.c, 0.0)?, ErrorBounds::ZERO),
    };
    let inputs = BoundInputs {
        l: qc.l,
        delta: qc.delta,
        sigma2: qc.sigma2,
        b,
        mu: cfg.learn.mu,
        tau: cfg.learn.tau,
        gamma: cfg.learn.gamma,
        t: cfg.learn.rounds,
        expectations,
        err_bounds,
        f0_gap: global_loss(task, &w0) - qc.f_star,
    };
    Ok((inputs, qc))
}

/// The optimality-gap bound for the configured quadratic task, term by term.
pub fn bound_table(cfg: &SimConfig) -> Result<Table> {
    if cfg.dataset.kind != super::config::DatasetKind::Regression {
        return Err(invalid("dataset", "the bound needs a quadratic task: set dataset = regression"));
    }
    let task = build_task(cfg)?;
    let (inputs, qc) = quadratic_bound_inputs(cfg, &task, cfg.theta_caps)?;
    let report = gap_bound(&inputs)?;
    let mut t = Table { header: cfg.header("bound"), rows: Vec::new() };
    t.push("L", qc.l, "eigen", "max device Hessian eigenvalue");
    t.push("delta", qc.delta, "eigen", "min global Hessian eigenvalue");
    t.push("sigma2", qc.sigma2, "ball bound", format!("radius {:.4}", qc.radius));
    t.push("F_star", qc.f_star, "normal eqs", "");
    t.push("F0_gap", inputs.f0_gap, "direct", "");
    let names = ["lr_rate", "lr_intra", "lr_local"];
    for (n, ok) in names.iter().zip(report.lr_conditions_ok) {
        t.push(*n, f64::from(u8::from(ok)), "check", if ok { "holds" } else { "violated" });
    }
    t.push("contraction", report.contraction, "closed form", "");
    let terms = report.terms;
    for (n, v) in [
        ("term_grad_intra", terms.grad_intra),
        ("term_grad_share", terms.grad_share),
        ("term_grad_local", terms.grad_local),
        ("term_grad_global", terms.grad_global),
        ("term_intra_up", terms.intra_up),
        ("term_intra_down", terms.intra_down),
        ("term_inter_up", terms.inter_up),
        ("term_inter_down", terms.inter_down),
    ] {
        t.push(n, v, "closed form", "");
    }
    t.push("bracket", report.bracket, "closed form", "");
    t.push("gap_bound", report.gap, "closed form", format!("T = {}", inputs.t));
    if cfg.system.c == 1 {
        t.push("gap_single_cluster", optimality_gap(&inputs, BoundForm::SingleCluster)?.gap, "closed form", "");
    }
    t.push("gap_many_clusters", optimality_gap(&inputs, BoundForm::ManyClusters)?.gap, "closed form", "C → ∞ limit");
    Ok(t)
}

pub fn latency_table(cfg: &SimConfig) -> Table {
    let inp = cfg.latency.inputs();
    let l = &cfg.learn;
    let mut t = Table { header: cfg.header("latency"), rows: Vec::new() };
    t.push("t_CM", inp.t_cm, "c·N_b/f", "s");
    t.push("t_BC", inp.t_bc, "d/W", "s");
    t.push("t_BH", inp.t_bh, "factor·t_BC", "s");
    t.push("latency", latency(&inp, l.rounds, l.tau, l.gamma), "closed form", format!("s, T={} τ={} γ={}", l.rounds, l.tau, l.gamma));
    t
}
