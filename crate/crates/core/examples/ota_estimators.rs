//! Bias, MSE and the receive-scaling scan of both over-the-air estimators.

use multiairfed::harness::checks::{exact_recovery_error, measure_estimator, EstimatorKind};
use multiairfed::ota::ForeignDownlink;
use multiairfed::spatial::SystemParams;

fn main() -> multiairfed::Result<()> {
    let params = SystemParams::reference(1e-7);
    for kind in [EstimatorKind::Intra, EstimatorKind::Inter] {
        let s = measure_estimator(&params, kind, ForeignDownlink::Rebroadcast, 20_000, 8, 5)?;
        let worst = s.bias.iter().map(|b| b.mean.abs() / b.stderr).fold(0.0, f64::max);
        println!(
            "{kind:?}: MSE {:.3e} ± {:.1e}, worst |bias|/SE {worst:.2}, MSE-optimal θ/θ* {:.3}",
            s.mse.mean, s.mse.stderr, s.kappa_opt
        );
        let spacing = if kind == EstimatorKind::Inter { 1e8 } else { 0.0 };
        println!("  noiseless isolated recovery error {:.1e}", exact_recovery_error(&params, kind, 16, spacing, 1)?);
    }
    let s = measure_estimator(&params, EstimatorKind::Intra, ForeignDownlink::Independent, 20_000, 8, 5)?;
    println!("intra with independent foreign broadcasts:");
    for (k, m) in s.kappas.iter().zip(&s.mse_grid).step_by(4) {
        println!("  θ = {k:.1}·θ*: MSE {m:.4e}");
    }
    Ok(())
}
