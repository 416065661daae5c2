//! Paired MultiAirFed vs HierFed runs on the same topologies and seeds.

use multiairfed::harness::{run_experiment, SimConfig};
use multiairfed::learn::Algorithm;

fn main() -> multiairfed::Result<()> {
    let trials = std::env::args().nth(1).unwrap_or_else(|| "3".into());
    let cfg = SimConfig::parse(&format!("sigma_n2 = 1e-7\npaired = true\nmu = 0.3\nseed = 1\ntrials = {trials}\n"))?;
    let out = run_experiment(&cfg)?;
    let acc = |a: Algorithm| -> Vec<f64> {
        out.traces.iter().find(|r| r.0 == a).map(|r| r.1.iter().map(|t| t.final_round().accuracy).collect()).unwrap()
    };
    let (ours, base) = (acc(Algorithm::MultiAirFed), acc(Algorithm::HierFed));
    for (k, (a, b)) in ours.iter().zip(&base).enumerate() {
        println!("trial {k}: MultiAirFed {a:.3}  HierFed {b:.3}");
    }
    println!("wins: {}/{}", ours.iter().zip(&base).filter(|(a, b)| a > b).count(), ours.len());
    Ok(())
}
