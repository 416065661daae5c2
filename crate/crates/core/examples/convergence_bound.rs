//! Optimality-gap bound for a quadratic task, and how it moves with C and M.

use multiairfed::analytics::{active_expectations, error_bounds, gap_bound, BoundInputs, LinkBudget, ThetaCaps};
use multiairfed::harness::{bound_table, SimConfig};
use multiairfed::spatial::SystemParams;

fn inputs(p: &SystemParams) -> multiairfed::Result<BoundInputs> {
    let budget = LinkBudget::compute(p)?;
    Ok(BoundInputs {
        l: 1.0,
        delta: 0.5,
        sigma2: 1.0,
        b: 1,
        mu: 0.01,
        tau: 6,
        gamma: 2,
        t: 40,
        expectations: active_expectations(p.m, p.c, p.th1)?,
        err_bounds: error_bounds(p, &budget, ThetaCaps::uniform(1.0))?.for_dimension(10),
        f0_gap: 1.0,
    })
}

fn main() -> multiairfed::Result<()> {
    let cfg = SimConfig::parse("sigma_n2 = 1e-7\ndataset = regression\npartition = iid\nfeatures = 4\nT = 20\n")?;
    print!("{}", bound_table(&cfg)?.to_text());
    let base = SystemParams::reference(1e-7);
    for c in [1, 2, 3, 5, 10] {
        println!("C = {c:>2}: bound {:.4}", gap_bound(&inputs(&SystemParams { c, ..base.clone() })?)?.gap);
    }
    for m in [2, 5, 15, 30] {
        println!("M = {m:>2}: bound {:.4}", gap_bound(&inputs(&SystemParams { m, ..base.clone() })?)?.gap);
    }
    Ok(())
}
