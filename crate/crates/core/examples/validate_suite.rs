//! Run the self-check suite on a quick configuration and print each check.

use multiairfed::harness::{validate, SimConfig};

fn main() -> multiairfed::Result<()> {
    let cfg = SimConfig::parse(
        "sigma_n2 = 1e-7\nvalidate_draws = 100000\nvalidate_topologies = 5000\nvalidate_trials = 5000\n",
    )?;
    let report = validate(&cfg)?;
    for c in &report.checks {
        println!(
            "{} {:<28} measured {:.4e} expected {:.4e} tol {}",
            if c.pass { "ok  " } else { "FAIL" },
            c.name,
            c.measured,
            c.expected,
            c.tolerance
        );
    }
    println!("config {} seed {}", report.config_hash, report.seed);
    Ok(())
}
