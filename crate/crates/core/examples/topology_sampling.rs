//! Sample a clustered network and summarize it.
//!
//! `cargo run --example topology_sampling -- [seed]`

use multiairfed::spatial::{sample_topology, SystemParams};

fn main() -> multiairfed::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let params = SystemParams::reference(1e-7);
    let topo = sample_topology(&params, seed)?;
    topo.check(&params)?;
    let area = std::f64::consts::PI * params.window_radius.powi(2);
    println!("servers in window: {} (unthinned Poisson mean {:.1})", topo.n_clusters(), params.lambda_p * area + 1.0);
    println!("devices per cluster: {}", topo.devices_per_cluster());
    println!("collaborating clusters: {:?}", topo.collaborators);
    for &c in &topo.collaborators {
        let radii: Vec<f64> = topo.offsets[c].iter().map(|o| o.norm()).collect();
        let (lo, hi) = radii.iter().fold((f64::MAX, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
        println!("  cluster {c} at ({:.1}, {:.1}), device radii {lo:.2}..{hi:.2} m", topo.parents[c].x, topo.parents[c].y);
    }
    let nearest = topo.parents[1..].iter().map(|p| p.norm()).fold(f64::MAX, f64::min);
    println!("nearest foreign server to the origin: {nearest:.1} m");
    Ok(())
}
