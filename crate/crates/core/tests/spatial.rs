//! Topology sampling: examples, hard-core and annulus invariants, intensity.

use multiairfed::spatial::{sample_topology, Point, SystemParams, Topology};
use multiairfed::Error;
use proptest::prelude::*;

fn assert_invariants(t: &Topology, p: &SystemParams) {
    assert_eq!(t.parents[0], Point::ORIGIN);
    assert_eq!(t.collaborators.len(), p.c);
    assert!(t.collaborators.contains(&0));
    for i in 0..t.parents.len() {
        for j in i + 1..t.parents.len() {
            let d = t.parents[i].dist(t.parents[j]);
            if p.hardcore {
                assert!(d >= 2.0 * p.r0, "parents {i},{j} only {d} m apart");
            } else if i == 0 {
                assert!(d >= 2.0 * p.r0);
            }
        }
    }
    assert_eq!(t.offsets.len(), t.parents.len());
    for offs in &t.offsets {
        assert_eq!(offs.len(), p.m);
        for o in offs {
            let r = o.norm();
            assert!(r >= p.r0 - 1e-9 && r <= p.r_outer + 1e-9, "offset radius {r}");
        }
    }
    // Collaborators are the C parents nearest the origin.
    let mut by_dist: Vec<usize> = (0..t.parents.len()).collect();
    by_dist.sort_by(|&a, &b| t.parents[a].norm().total_cmp(&t.parents[b].norm()));
    let mut collab = t.collaborators.clone();
    collab.sort_unstable();
    let mut nearest = by_dist[..p.c].to_vec();
    nearest.sort_unstable();
    assert_eq!(collab, nearest);
}

#[test]
fn empty_process_keeps_only_the_reference() {
    let p = SystemParams { lambda_p: 0.0, c: 1, ..SystemParams::reference(0.0) };
    let t = sample_topology(&p, 9).unwrap();
    assert_eq!(t.parents, vec![Point::ORIGIN]);
    assert_eq!(t.collaborators, vec![0]);
    let needs_three = SystemParams { c: 3, ..p };
    assert!(matches!(sample_topology(&needs_three, 9), Err(Error::TooFewParents { found: 1, needed: 3 })));
}

#[test]
fn retained_intensity_matches_matern_ii() {
    let p = SystemParams::reference(0.0);
    let h = 2.0 * p.r0;
    let area_h = std::f64::consts::PI * h * h;
    let retained = (1.0 - (-p.lambda_p * area_h).exp()) / area_h;
    let (lo, hi) = (100.0, 500.0);
    let expected = retained * std::f64::consts::PI * (hi * hi - lo * lo);
    let n = 40_000;
    let counts: Vec<f64> = (0..n as u64)
        .map(|s| {
            let t = sample_topology(&p, s).unwrap();
            if s % 2000 == 0 {
                assert_invariants(&t, &p);
            }
            t.parents.iter().filter(|q| (lo..hi).contains(&q.norm())).count() as f64
        })
        .collect();
    let mean = counts.iter().sum::<f64>() / n as f64;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    // Two-sided 0.1% level.
    assert!((mean - expected).abs() <= 3.29 * se, "mean {mean} expected {expected} se {se}");
}

#[test]
fn offset_radius_cdf_kolmogorov_smirnov() {
    let p = SystemParams::reference(0.0);
    let mut radii = Vec::new();
    let mut seed = 0;
    while radii.len() < 100_000 {
        let t = sample_topology(&p, 1_000 + seed).unwrap();
        radii.extend(t.offsets.iter().flatten().map(|o| o.norm()));
        seed += 1;
    }
    radii.truncate(100_000);
    radii.sort_by(f64::total_cmp);
    let n = radii.len() as f64;
    let cdf = |y: f64| (y * y - p.r0 * p.r0) / (p.r_outer * p.r_outer - p.r0 * p.r0);
    let d = radii
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let f = cdf(y);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    // 1% critical value of the one-sample KS statistic.
    assert!(d < 1.63 / n.sqrt(), "KS statistic {d}");
}

#[test]
fn seed_determines_topology() {
    let p = SystemParams::reference(0.0);
    assert_eq!(sample_topology(&p, 42).unwrap(), sample_topology(&p, 42).unwrap());
    assert_ne!(sample_topology(&p, 42).unwrap(), sample_topology(&p, 43).unwrap());
}

#[test]
fn without_hard_core_parents_can_cluster() {
    let p = SystemParams { lambda_p: 2e-3, window_radius: 300.0, hardcore: false, ..SystemParams::reference(0.0) };
    let close = (0..20).any(|s| {
        let t = sample_topology(&p, s).unwrap();
        assert_invariants(&t, &p);
        (1..t.parents.len()).any(|i| (i + 1..t.parents.len()).any(|j| t.parents[i].dist(t.parents[j]) < 2.0 * p.r0))
    });
    assert!(close);
}

#[test]
fn text_format_round_trips() {
    let t = sample_topology(&SystemParams::reference(0.0), 3).unwrap();
    assert_eq!(Topology::from_text(&t.to_text()).unwrap(), t);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sampled_topologies_satisfy_invariants(
        lambda in 0.0f64..2e-3,
        r0 in 1.0f64..6.0,
        extra in 5.0f64..40.0,
        m in 1usize..8,
        hardcore: bool,
        seed: u64,
    ) {
        let r = r0 + extra;
        let p = SystemParams {
            lambda_p: lambda,
            r0,
            r_outer: r,
            m,
            c: 1,
            window_radius: 10.0 * r,
            hardcore,
            ..SystemParams::reference(0.0)
        };
        let t = sample_topology(&p, seed).unwrap();
        assert_invariants(&t, &p);
        prop_assert_eq!(&t, &sample_topology(&p, seed).unwrap());
        t.check(&p).unwrap();
    }
}

