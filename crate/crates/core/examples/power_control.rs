//! Truncated channel inversion: the scaling factor ρ and the average transmit power it yields.

use multiairfed::channel::{compute_rho, tx_amplitude, PowerPolicy};
use multiairfed::harness::checks::measure_tx_power;
use multiairfed::spatial::SystemParams;
use num_complex::Complex64;

fn main() -> multiairfed::Result<()> {
    let params = SystemParams::reference(1e-7);
    let policy = PowerPolicy::new(&params)?;
    println!("rho = {:.4e}", compute_rho(&params)?);
    for gain in [0.2, 0.5, 1.0, 3.0] {
        let amp = tx_amplitude(Complex64::new(f64::sqrt(gain), 0.0), 15.0, &policy, false);
        println!("device at 15 m with |f|² = {gain}: |p|² = {:.4}", amp.norm_sqr());
    }
    for scale in [1.0, 2.0] {
        let m = measure_tx_power(&params, scale, 200_000, 3)?;
        println!("rho x{scale}: E|p|² = {:.4} ± {:.4} (cap {})", m.mean, m.stderr, params.p_u);
    }
    Ok(())
}
