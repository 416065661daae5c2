//! Closed-form inter-cluster interference power against Monte Carlo over topologies.

use multiairfed::analytics::LinkBudget;
use multiairfed::harness::checks::measure_interference;
use multiairfed::spatial::SystemParams;

fn main() -> multiairfed::Result<()> {
    let topologies = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let params = SystemParams::reference(1e-7);
    let b = LinkBudget::compute(&params)?;
    println!("psi = {:.4e}, beta = {:.4e}, psi/rho = {:.2}", b.psi, b.beta, b.psi / b.rho);
    for hardcore in [true, false] {
        let p = SystemParams { hardcore, ..params.clone() };
        let m = measure_interference(&p, topologies, 11)?;
        println!(
            "hardcore={hardcore}: measured {:.4e} ± {:.1e}, analytic {:.4e}",
            m.measured.mean, m.measured.stderr, m.analytic
        );
    }
    Ok(())
}
