//! Train a softmax classifier with MultiAirFed over a sampled network.
//!
//! `cargo run --release --example multiairfed_training -- [config]`

use multiairfed::harness::{build_task, run_trials, SimConfig};
use multiairfed::learn::Algorithm;

const DEFAULT: &str = "sigma_n2 = 1e-7\nT = 20\nmu = 0.3\ntrials = 1\n";

fn main() -> multiairfed::Result<()> {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path)?,
        None => DEFAULT.to_string(),
    };
    let cfg = SimConfig::parse(&text)?;
    let task = build_task(&cfg)?;
    let trace = run_trials(&cfg, &task, Algorithm::MultiAirFed)?.remove(0);
    println!("round  loss     accuracy");
    for (t, r) in trace.rounds.iter().enumerate() {
        println!("{t:>5}  {:.4}   {:.3}", r.loss_mean, r.accuracy);
    }
    Ok(())
}
