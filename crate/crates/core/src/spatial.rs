//! Clustered topologies: hard-core Poisson parents, M devices per parent in an
//! annulus [r0, R], reference cluster at the origin.

use std::fmt::Write as _;
use std::ops::{Add, Sub};

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{invalid, Error, Result};
use crate::rng::{from_seed, SimRng};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn polar(r: f64, angle: f64) -> Self {
        Self { x: r * angle.cos(), y: r * angle.sin() }
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

/// Network and radio parameters. Lengths in metres, density in m⁻².
#[derive(Clone, Debug, PartialEq)]
pub struct SystemParams {
    pub lambda_p: f64,
    pub r0: f64,
    pub r_outer: f64,
    pub m: usize,
    pub c: usize,
    pub alpha: f64,
    pub sigma_d2: f64,
    pub sigma_n2: f64,
    pub p_u: f64,
    pub p_d: f64,
    pub th0: f64,
    pub th1: f64,
    pub window_radius: f64,
    /// Matérn type-II thinning of the parents. When off, parents form a plain
    /// PPP outside the 2·r0 disc around the reference server.
    pub hardcore: bool,
}

impl SystemParams {
    /// The reference deployment: 20 servers per km², r0 = 4 m, R = 30 m,
    /// M = 15, C = 3, α = 4, σ_d² = 10, P_u = P_d = 1, th0 = 0.01, th1 = 0.5,
    /// 1 km window. Noise power has no reference value and must be supplied.
    pub fn reference(sigma_n2: f64) -> Self {
        Self {
            lambda_p: 20e-6,
            r0: 4.0,
            r_outer: 30.0,
            m: 15,
            c: 3,
            alpha: 4.0,
            sigma_d2: 10.0,
            sigma_n2,
            p_u: 1.0,
            p_d: 1.0,
            th0: 0.01,
            th1: 0.5,
            window_radius: 1000.0,
            hardcore: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(name, format!("must be positive and finite, got {v}")))
            }
        };
        let nonneg = |name: &'static str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(name, format!("must be non-negative and finite, got {v}")))
            }
        };
        nonneg("lambda_p", self.lambda_p)?;
        pos("r0", self.r0)?;
        pos("R", self.r_outer)?;
        if self.r0 >= self.r_outer {
            return Err(invalid("R", format!("outer radius {} must exceed r0 = {}", self.r_outer, self.r0)));
        }
        if self.m == 0 {
            return Err(invalid("M", "need at least one device per cluster"));
        }
        if self.c == 0 {
            return Err(invalid("C", "need at least one collaborating cluster"));
        }
        if !(self.alpha > 2.0) || !self.alpha.is_finite() {
            return Err(invalid("alpha", format!("path-loss exponent must exceed 2, got {}", self.alpha)));
        }
        pos("sigma_d2", self.sigma_d2)?;
        nonneg("sigma_n2", self.sigma_n2)?;
        pos("P_u", self.p_u)?;
        pos("P_d", self.p_d)?;
        nonneg("th0", self.th0)?;
        nonneg("th1", self.th1)?;
        if !(self.window_radius >= 10.0 * self.r_outer) || !self.window_radius.is_finite() {
            return Err(invalid(
                "window_radius",
                format!("must be finite and at least 10·R = {}, got {}", 10.0 * self.r_outer, self.window_radius),
            ));
        }
        Ok(())
    }
}

/// E{‖y‖^k} for an offset with density 2y/(R² − r0²) on [r0, R].
pub fn mean_offset_radius_power(params: &SystemParams, k: f64) -> f64 {
    let (a, b) = (params.r0, params.r_outer);
    let span = b * b - a * a;
    if (k + 2.0).abs() < 1e-12 {
        return 2.0 * (b / a).ln() / span;
    }
    2.0 * (b.powf(k + 2.0) - a.powf(k + 2.0)) / ((k + 2.0) * span)
}

/// One realization of the clustered network.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    /// Server positions; index 0 is the reference server at the origin and the
    /// rest are sorted by distance from it.
    pub parents: Vec<Point>,
    /// Device offsets from their parent, `offsets[cluster][device]`.
    pub offsets: Vec<Vec<Point>>,
    /// The clusters sharing the reference task: the C parents nearest the origin.
    pub collaborators: Vec<usize>,
}

impl Topology {
    pub fn n_clusters(&self) -> usize {
        self.parents.len()
    }

    pub fn devices_per_cluster(&self) -> usize {
        self.offsets.first().map_or(0, Vec::len)
    }

    pub fn device_position(&self, cluster: usize, device: usize) -> Point {
        self.parents[cluster] + self.offsets[cluster][device]
    }

    pub fn is_collaborator(&self, cluster: usize) -> bool {
        self.collaborators.contains(&cluster)
    }

    /// Checks the structural invariants against `params`.
    pub fn check(&self, params: &SystemParams) -> Result<()> {
        let bad = |reason: String| Err(invalid("topology", reason));
        if self.parents.first() != Some(&Point::ORIGIN) {
            return bad("parent 0 must be the origin".into());
        }
        if self.offsets.len() != self.parents.len() {
            return bad("one offset list per parent is required".into());
        }
        let tol = 1e-9;
        for (c, offs) in self.offsets.iter().enumerate() {
            if offs.len() != params.m {
                return bad(format!("cluster {c} has {} devices, expected {}", offs.len(), params.m));
            }
            for o in offs {
                let r = o.norm();
                if r < params.r0 - tol || r > params.r_outer + tol {
                    return bad(format!("offset norm {r} outside [{}, {}] in cluster {c}", params.r0, params.r_outer));
                }
            }
        }
        if params.hardcore {
            for i in 0..self.parents.len() {
                for j in i + 1..self.parents.len() {
                    if self.parents[i].dist(self.parents[j]) < 2.0 * params.r0 - tol {
                        return bad(format!("parents {i} and {j} closer than 2·r0"));
                    }
                }
            }
        }
        if self.collaborators.len() != params.c || !self.collaborators.contains(&0) {
            return bad(format!("need {} collaborators including cluster 0", params.c));
        }
        Ok(())
    }

    /// Line-oriented text form: a `parent x y` line opens each block, followed
    /// by one `x,y` offset per line; a final `collaborators` line lists indices.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# mcp-h topology\n");
        for (p, offs) in self.parents.iter().zip(&self.offsets) {
            let _ = writeln!(s, "parent {:?} {:?}", p.x, p.y);
            for o in offs {
                let _ = writeln!(s, "{:?},{:?}", o.x, o.y);
            }
        }
        let idx: Vec<String> = self.collaborators.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(s, "collaborators {}", idx.join(" "));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut parents = Vec::new();
        let mut offsets: Vec<Vec<Point>> = Vec::new();
        let mut collaborators = None;
        let num = |tok: &str, line: usize| {
            tok.trim().parse::<f64>().map_err(|e| Error::Parse { line, reason: format!("bad number `{tok}`: {e}") })
        };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            if let Some(rest) = l.strip_prefix("parent") {
                let toks: Vec<&str> = rest.split_whitespace().collect();
                if toks.len() != 2 {
                    return Err(Error::Parse { line, reason: "expected `parent x y`".into() });
                }
                parents.push(Point::new(num(toks[0], line)?, num(toks[1], line)?));
                offsets.push(Vec::new());
            } else if let Some(rest) = l.strip_prefix("collaborators") {
                let idx = rest
                    .split_whitespace()
                    .map(|t| t.parse::<usize>().map_err(|e| Error::Parse { line, reason: format!("bad index `{t}`: {e}") }))
                    .collect::<Result<Vec<_>>>()?;
                collaborators = Some(idx);
            } else if let Some((a, b)) = l.split_once(',') {
                let block = offsets
                    .last_mut()
                    .ok_or_else(|| Error::Parse { line, reason: "offset before any parent".into() })?;
                block.push(Point::new(num(a, line)?, num(b, line)?));
            } else {
                return Err(Error::Parse { line, reason: format!("unrecognized line `{l}`") });
            }
        }
        let collaborators =
            collaborators.ok_or_else(|| Error::Parse { line: text.lines().count(), reason: "missing collaborators line".into() })?;
        if let Some(&bad) = collaborators.iter().find(|&&c| c >= parents.len()) {
            return Err(Error::Parse { line: text.lines().count(), reason: format!("collaborator {bad} has no parent block") });
        }
        Ok(Self { parents, offsets, collaborators })
    }
}

const PLACEMENT_ATTEMPTS: usize = 10_000;

/// Samples a topology from `seed`.
pub fn sample_topology(params: &SystemParams, seed: u64) -> Result<Topology> {
    sample_topology_with(params, &mut from_seed(seed))
}

/// Samples a topology from an explicit generator.
///
/// Parents: Poisson count in the window, uniform positions, then Matérn type-II
/// thinning at distance 2·r0 with the origin holding the lowest mark, so it is
/// always retained and clears a 2·r0 disc around itself. Devices: M offsets per
/// parent with radius density 2y/(R² − r0²) and uniform angle; an offset that
/// lands within r0 of another server is redrawn (protective zone).
pub fn sample_topology_with(params: &SystemParams, rng: &mut SimRng) -> Result<Topology> {
    params.validate()?;
    let w = params.window_radius;
    let hard = 2.0 * params.r0;
    let mean = params.lambda_p * std::f64::consts::PI * w * w;
    let n = if mean > 0.0 {
        Poisson::new(mean).map_err(|e| invalid("lambda_p", e.to_string()))?.sample(rng) as usize
    } else {
        0
    };
    let mut cands: Vec<(Point, f64)> = (0..n)
        .map(|_| {
            let r = w * rng.gen::<f64>().sqrt();
            let a = std::f64::consts::TAU * rng.gen::<f64>();
            let mark: f64 = rng.gen();
            (Point::polar(r, a), mark)
        })
        .collect();
    cands.retain(|(p, _)| p.norm() >= hard);

    let mut kept: Vec<Point> = if params.hardcore {
        // A candidate dies if another original point within 2·r0 has a lower mark.
        let mut order: Vec<usize> = (0..cands.len()).collect();
        order.sort_by(|&i, &j| cands[i].0.x.total_cmp(&cands[j].0.x));
        let mut alive = vec![true; cands.len()];
        for (pos, &i) in order.iter().enumerate() {
            for &j in order[pos + 1..].iter() {
                if cands[j].0.x - cands[i].0.x >= hard {
                    break;
                }
                if cands[i].0.dist(cands[j].0) < hard {
                    if cands[i].1 < cands[j].1 {
                        alive[j] = false;
                    } else {
                        alive[i] = false;
                    }
                }
            }
        }
        cands.iter().zip(&alive).filter(|(_, &a)| a).map(|(c, _)| c.0).collect()
    } else {
        cands.iter().map(|c| c.0).collect()
    };
    kept.sort_by(|a, b| a.norm_sq().total_cmp(&b.norm_sq()));
    let mut parents = Vec::with_capacity(kept.len() + 1);
    parents.push(Point::ORIGIN);
    parents.extend(kept);
    if parents.len() < params.c {
        return Err(Error::TooFewParents { found: parents.len(), needed: params.c });
    }

    // Servers whose protective zone can intersect a cluster's annulus.
    let reach = params.r_outer + params.r0;
    let neighbours: Vec<Vec<usize>> = (0..parents.len())
        .map(|i| (0..parents.len()).filter(|&j| j != i && parents[i].dist(parents[j]) < reach).collect())
        .collect();
    let span = params.r_outer * params.r_outer - params.r0 * params.r0;
    let mut offsets = Vec::with_capacity(parents.len());
    for (c, &p) in parents.iter().enumerate() {
        let mut devs = Vec::with_capacity(params.m);
        for _ in 0..params.m {
            let mut placed = None;
            for _ in 0..PLACEMENT_ATTEMPTS {
                let r = (params.r0 * params.r0 + rng.gen::<f64>() * span).sqrt();
                let o = Point::polar(r, std::f64::consts::TAU * rng.gen::<f64>());
                let pos = p + o;
                if neighbours[c].iter().all(|&j| pos.dist(parents[j]) >= params.r0) {
                    placed = Some(o);
                    break;
                }
            }
            devs.push(placed.ok_or(Error::Placement { cluster: c, attempts: PLACEMENT_ATTEMPTS })?);
        }
        offsets.push(devs);
    }
    Ok(Topology { parents, offsets, collaborators: (0..params.c).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_ppp_single_cluster() {
        let mut p = SystemParams::reference(0.0);
        p.lambda_p = 0.0;
        p.c = 1;
        let t = sample_topology(&p, 3).unwrap();
        assert_eq!(t.parents, vec![Point::ORIGIN]);
        assert_eq!(t.collaborators, vec![0]);
        p.c = 2;
        assert!(matches!(sample_topology(&p, 3), Err(Error::TooFewParents { .. })));
    }

    #[test]
    fn text_round_trip() {
        let p = SystemParams { window_radius: 400.0, ..SystemParams::reference(0.0) };
        let t = sample_topology(&p, 11).unwrap();
        let back = Topology::from_text(&t.to_text()).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn radius_moments() {
        let p = SystemParams::reference(0.0);
        assert!((mean_offset_radius_power(&p, 0.0) - 1.0).abs() < 1e-15);
        let q = SystemParams { r0: 0.0, r_outer: 1.0, ..p };
        assert!((mean_offset_radius_power(&q, 2.0) - 0.5).abs() < 1e-15);
    }
}
