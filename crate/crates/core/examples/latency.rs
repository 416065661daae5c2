//! Wall-clock latency of a training run under the analog link.

use multiairfed::analytics::{latency, LatencyInputs};

fn main() {
    let link = LatencyInputs::from_link(20.0, 2.5e6, 1e9, 1e6, 1e6, 10.0);
    println!("T=40 τ=6 γ=2: {:.0} s", latency(&link, 40, 6, 2));
    for tau in [1, 3, 6, 12] {
        println!("τ = {tau:>2}: {:.0} s", latency(&link, 40, tau, 2));
    }
}
