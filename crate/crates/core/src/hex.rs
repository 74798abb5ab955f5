//! Hexagonal-lattice construction for the sub-critical regime.
//!
//! Faces are pointy-top hexagons of edge `delta` in axial coordinates
//! `(q, r)`, with face `(0, 0)` centred on the window centre. Each face is
//! split into six equilateral triangles `F_delta` (centre, vertex k,
//! vertex k+1). Inside each sits the concentric, co-oriented inner triangle
//! `F_rho`. A triangle is closed when the ring `F_delta \ F_rho` holds no
//! node and `F_rho` holds at least two; a face is closed when all six are.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Window};

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HexConfig {
    pub delta: f64,
    pub rho: f64,
    pub eta: f64,
    pub threshold: f64,
    pub alpha: f64,
}

/// Outcome of the deterministic scalar conditions on a configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfigCheck {
    pub mu: f64,
    /// `rho <= eta T^(1/alpha)`.
    pub inner_condition: bool,
    /// `mu <= delta T^(1/alpha)`.
    pub spread_condition: bool,
    /// `T > 1` and `mu <= delta`, which makes the spread condition automatic.
    pub spread_automatic: bool,
}

impl ConfigCheck {
    pub fn valid(&self) -> bool {
        self.inner_condition && self.spread_condition
    }
}

impl HexConfig {
    fn check_geometry(&self) -> Result<()> {
        let ok = self.delta.is_finite() && self.delta > 0.0 && self.rho.is_finite() && self.rho > 0.0;
        if !ok {
            return Err(Error::config(format!(
                "hexagon edge and inner edge must be positive, got delta={} rho={}",
                self.delta, self.rho
            )));
        }
        if self.rho >= self.delta {
            return Err(Error::config(format!(
                "inner triangle edge {} must be smaller than the hexagon edge {}",
                self.rho, self.delta
            )));
        }
        Ok(())
    }

    fn check_scalars(&self) -> Result<()> {
        let ok = self.eta.is_finite()
            && self.eta > 0.0
            && self.threshold.is_finite()
            && self.threshold > 0.0
            && self.alpha.is_finite()
            && self.alpha > 0.0;
        if !ok {
            return Err(Error::config(format!(
                "eta, T and alpha must be finite and positive, got eta={} T={} alpha={}",
                self.eta, self.threshold, self.alpha
            )));
        }
        Ok(())
    }
}

/// Vertices of the outer triangle `k` of a face centred at the origin.
fn outer_triangle(delta: f64, k: usize) -> [Point2; 3] {
    let vertex = |m: usize| {
        let a = (30.0 + 60.0 * (m % 6) as f64).to_radians();
        Point2::new(delta * a.cos(), delta * a.sin())
    };
    [Point2::new(0.0, 0.0), vertex(k), vertex(k + 1)]
}

/// The inner triangle: the outer one scaled by `rho / delta` about its centroid.
fn inner_triangle(delta: f64, rho: f64, k: usize) -> [Point2; 3] {
    let t = outer_triangle(delta, k);
    let gx = (t[0].x + t[1].x + t[2].x) / 3.0;
    let gy = (t[0].y + t[1].y + t[2].y) / 3.0;
    let s = rho / delta;
    t.map(|v| Point2::new(gx + s * (v.x - gx), gy + s * (v.y - gy)))
}

/// Largest distance between a vertex of `F_delta` and a vertex of `F_rho`.
///
/// Both triangles are convex, so this is also the largest distance between
/// any point of `F_rho` and any point of `F_delta`. It never exceeds `delta`.
pub fn mu_of(config: &HexConfig) -> Result<f64> {
    config.check_geometry()?;
    let outer = outer_triangle(config.delta, 0);
    let inner = inner_triangle(config.delta, config.rho, 0);
    let mut best: f64 = 0.0;
    for a in &outer {
        for b in &inner {
            best = best.max((a.x - b.x).hypot(a.y - b.y));
        }
    }
    Ok(best)
}

pub fn validate_config(config: &HexConfig) -> Result<ConfigCheck> {
    config.check_scalars()?;
    let mu = mu_of(config)?;
    let root = config.threshold.powf(1.0 / config.alpha);
    Ok(ConfigCheck {
        mu,
        inner_condition: config.rho <= config.eta * root,
        spread_condition: mu <= config.delta * root,
        spread_automatic: config.threshold > 1.0 && mu <= config.delta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TriangleState {
    pub annulus_empty: bool,
    pub inner_count: u32,
}

impl TriangleState {
    pub fn closed(&self) -> bool {
        self.annulus_empty && self.inner_count >= 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FaceId {
    pub q: i32,
    pub r: i32,
}

impl FaceId {
    pub const fn new(q: i32, r: i32) -> Self {
        Self { q, r }
    }

    /// The six edge-sharing neighbours.
    pub fn neighbors(self) -> [FaceId; 6] {
        const DIRS: [(i32, i32); 6] = [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)];
        DIRS.map(|(dq, dr)| FaceId::new(self.q + dq, self.r + dr))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceReport {
    pub face: FaceId,
    pub closed: bool,
    pub triangles: [TriangleState; 6],
}

/// Geometry of the lattice anchored on a window.
#[derive(Debug, Clone, Copy)]
pub struct HexLattice {
    pub delta: f64,
    pub origin: Point2,
}

impl HexLattice {
    pub fn for_window(delta: f64, window: &Window) -> Self {
        Self {
            delta,
            origin: window.center(),
        }
    }

    pub fn center(&self, f: FaceId) -> Point2 {
        Point2::new(
            self.origin.x + SQRT3 * self.delta * (f.q as f64 + 0.5 * f.r as f64),
            self.origin.y + 1.5 * self.delta * f.r as f64,
        )
    }

    /// Face containing `p`, by cube rounding of fractional axial coordinates.
    pub fn locate(&self, p: Point2) -> FaceId {
        let x = (p.x - self.origin.x) / self.delta;
        let y = (p.y - self.origin.y) / self.delta;
        let fq = SQRT3 / 3.0 * x - y / 3.0;
        let fr = 2.0 / 3.0 * y;
        let fs = -fq - fr;
        let (mut q, mut r, s) = (fq.round(), fr.round(), fs.round());
        let (dq, dr, ds) = ((q - fq).abs(), (r - fr).abs(), (s - fs).abs());
        if dq > dr && dq > ds {
            q = -r - s;
        } else if dr > ds {
            r = -q - s;
        }
        FaceId::new(q as i32, r as i32)
    }

    /// Whether face `f` lies entirely inside the window.
    pub fn fits(&self, f: FaceId, window: &Window) -> bool {
        let c = self.center(f);
        let hw = 0.5 * SQRT3 * self.delta;
        c.x - hw >= 0.0 && c.x + hw <= window.width && c.y - self.delta >= 0.0 && c.y + self.delta <= window.height
    }

    /// Every face fully inside the window, ordered by `(r, q)`.
    pub fn faces_in(&self, window: &Window) -> Vec<FaceId> {
        let d = self.delta;
        let r_lo = ((d - self.origin.y) / (1.5 * d)).floor() as i64 - 1;
        let r_hi = ((window.height - d - self.origin.y) / (1.5 * d)).ceil() as i64 + 1;
        let mut out = Vec::new();
        for r in r_lo..=r_hi {
            let shift = self.origin.x / (SQRT3 * d) + 0.5 * r as f64;
            let q_lo = (0.5 - shift).floor() as i64 - 1;
            let q_hi = ((window.width / (SQRT3 * d)) - 0.5 - shift).ceil() as i64 + 1;
            for q in q_lo..=q_hi {
                let f = FaceId::new(q as i32, r as i32);
                if self.fits(f, window) {
                    out.push(f);
                }
            }
        }
        out
    }
}

/// Window holding at least `cols x rows` whole faces of edge `delta` when
/// both counts are odd (the lattice is centred on the window).
pub fn window_for_faces(cols: usize, rows: usize, delta: f64) -> Result<Window> {
    let pad = 1.0 + 1e-9;
    Window::new(
        (cols as f64 + 1.0) * SQRT3 * delta * pad,
        (1.5 * rows as f64 + 0.5) * delta * pad,
        crate::geometry::Boundary::Plain,
    )
}

fn sign(p: Point2, a: Point2, b: Point2) -> f64 {
    (p.x - b.x) * (a.y - b.y) - (a.x - b.x) * (p.y - b.y)
}

fn in_triangle(p: Point2, t: &[Point2; 3]) -> bool {
    let d1 = sign(p, t[0], t[1]);
    let d2 = sign(p, t[1], t[2]);
    let d3 = sign(p, t[2], t[0]);
    let neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
    let pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
    !(neg && pos)
}

/// Triangle index (0..6) of a displacement from the face centre.
fn sector(dx: f64, dy: f64) -> usize {
    let a = dy.atan2(dx).to_degrees() - 30.0;
    (a.rem_euclid(360.0) / 60.0).floor() as usize % 6
}

/// Per-face reports for every face fully inside the window.
pub fn classify_faces(points: &[Point2], config: &HexConfig, window: &Window) -> Result<Vec<FaceReport>> {
    let check = validate_config(config)?;
    if !check.valid() {
        return Err(Error::config(format!(
            "configuration fails the deterministic conditions (rho <= eta T^(1/a): {}, mu <= delta T^(1/a): {})",
            check.inner_condition, check.spread_condition
        )));
    }
    let lattice = HexLattice::for_window(config.delta, window);
    let faces = lattice.faces_in(window);
    if faces.is_empty() {
        return Err(Error::usage("window is smaller than one hexagonal face"));
    }
    let index = FaceIndex::new(&faces);
    let inner: [[Point2; 3]; 6] = std::array::from_fn(|k| inner_triangle(config.delta, config.rho, k));
    let mut reports: Vec<FaceReport> = faces
        .iter()
        .map(|&face| FaceReport {
            face,
            closed: false,
            triangles: [TriangleState {
                annulus_empty: true,
                inner_count: 0,
            }; 6],
        })
        .collect();
    for p in points {
        let f = lattice.locate(*p);
        let Some(idx) = index.get(f) else { continue };
        let c = lattice.center(f);
        let local = Point2::new(p.x - c.x, p.y - c.y);
        let k = sector(local.x, local.y);
        let tri = &mut reports[idx].triangles[k];
        if in_triangle(local, &inner[k]) {
            tri.inner_count += 1;
        } else {
            tri.annulus_empty = false;
        }
    }
    for rep in &mut reports {
        rep.closed = rep.triangles.iter().all(TriangleState::closed);
    }
    Ok(reports)
}

/// Dense lookup from face id to report index.
#[derive(Debug, Clone)]
pub struct FaceIndex {
    q0: i32,
    r0: i32,
    nq: usize,
    nr: usize,
    slots: Vec<u32>,
}

impl FaceIndex {
    const NONE: u32 = u32::MAX;

    pub fn new(faces: &[FaceId]) -> Self {
        if faces.is_empty() {
            return Self {
                q0: 0,
                r0: 0,
                nq: 0,
                nr: 0,
                slots: Vec::new(),
            };
        }
        let q0 = faces.iter().map(|f| f.q).min().unwrap();
        let q1 = faces.iter().map(|f| f.q).max().unwrap();
        let r0 = faces.iter().map(|f| f.r).min().unwrap();
        let r1 = faces.iter().map(|f| f.r).max().unwrap();
        let nq = (q1 - q0 + 1) as usize;
        let nr = (r1 - r0 + 1) as usize;
        let mut slots = vec![Self::NONE; nq * nr];
        for (i, f) in faces.iter().enumerate() {
            slots[(f.r - r0) as usize * nq + (f.q - q0) as usize] = i as u32;
        }
        Self { q0, r0, nq, nr, slots }
    }

    pub fn get(&self, f: FaceId) -> Option<usize> {
        let dq = f.q - self.q0;
        let dr = f.r - self.r0;
        if dq < 0 || dr < 0 || dq as usize >= self.nq || dr as usize >= self.nr {
            return None;
        }
        let v = self.slots[dr as usize * self.nq + dq as usize];
        (v != Self::NONE).then_some(v as usize)
    }
}

/// `P(closed F_delta)` and `P(closed face)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedProbability {
    pub triangle: f64,
    pub face: f64,
    /// False when the deterministic conditions fail; both values are then 0.
    pub certified: bool,
}

/// `P(N >= 2)` for `N ~ Poisson(x)`, accurate for small `x`.
fn at_least_two(x: f64) -> f64 {
    if x < 0.1 {
        let mut term = x * x / 2.0;
        let mut sum = 0.0;
        let mut k = 2.0;
        while term > sum * 1e-18 && term > 0.0 {
            sum += term;
            k += 1.0;
            term *= x / k;
        }
        (-x).exp() * sum
    } else {
        -(-x).exp_m1() - x * (-x).exp()
    }
}

fn triangle_probability(lambda: f64, delta: f64, rho: f64) -> f64 {
    let inner = SQRT3 / 4.0 * rho * rho;
    let ring = SQRT3 / 4.0 * (delta * delta - rho * rho);
    (-lambda * ring).exp() * at_least_two(lambda * inner)
}

pub fn closed_face_probability(lambda: f64, config: &HexConfig) -> Result<ClosedProbability> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::config(format!("intensity must be finite and non-negative, got {lambda}")));
    }
    let check = validate_config(config)?;
    if !check.valid() {
        return Ok(ClosedProbability {
            triangle: 0.0,
            face: 0.0,
            certified: false,
        });
    }
    let p = triangle_probability(lambda, config.delta, config.rho);
    Ok(ClosedProbability {
        triangle: p,
        face: p.powi(6),
        certified: true,
    })
}

/// `(1/2)^(1/6)`: a triangle probability above this makes faces closed with
/// probability above one half.
pub fn triangle_threshold() -> f64 {
    0.5f64.powf(1.0 / 6.0)
}

/// Intensity maximizing `P(closed F_delta)`, with the maximum.
///
/// The derivative is `e^(-l a) [l b^2 e^(-l b) - a P(N >= 2)]` with `a` the
/// ring area and `b` the inner area; the bracket is positive near 0 and
/// changes sign exactly once.
pub fn max_closed_probability(config: &HexConfig) -> Result<(f64, f64)> {
    config.check_geometry()?;
    let b = SQRT3 / 4.0 * config.rho * config.rho;
    let a = SQRT3 / 4.0 * (config.delta * config.delta - config.rho * config.rho);
    let slope = |l: f64| l * b * b * (-l * b).exp() - a * at_least_two(l * b);
    let mut hi = 1.0 / b;
    while slope(hi) > 0.0 {
        hi *= 2.0;
        assert!(hi.is_finite(), "no sign change in the slope");
    }
    let mut lo = hi / 2.0;
    while slope(lo) <= 0.0 {
        lo /= 2.0;
        assert!(lo > 0.0, "slope not positive near zero");
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let l = 0.5 * (lo + hi);
    Ok((l, triangle_probability(l, config.delta, config.rho)))
}

/// Intensities for which faces are closed with probability above one half.
///
/// Returns `None` when the maximum of `P(closed F_delta)` over intensities
/// does not exceed `(1/2)^(1/6)`, or when the configuration fails its
/// deterministic conditions.
pub fn lambda_interval_subcritical(config: &HexConfig) -> Result<Option<(f64, f64)>> {
    let check = validate_config(config)?;
    if !check.valid() {
        return Ok(None);
    }
    let thr = triangle_threshold();
    let (peak, pmax) = max_closed_probability(config)?;
    if pmax <= thr {
        return Ok(None);
    }
    let f = |l: f64| triangle_probability(l, config.delta, config.rho) - thr;
    let solve = |mut lo: f64, mut hi: f64, rising: bool| {
        assert!((f(lo) < 0.0) == rising && (f(hi) < 0.0) != rising, "bracket lost");
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) < 0.0) == rising {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    };
    let left = solve(0.0, peak, true);
    let mut far = 2.0 * peak;
    while f(far) >= 0.0 {
        far *= 2.0;
    }
    let right = solve(peak, far, false);
    Ok(Some((left, right)))
}

/// A ring of closed faces around the origin face.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub faces: Vec<FaceId>,
}

/// Looks for a closed circuit surrounding `origin`.
///
/// The origin is enclosed when the set of faces reachable from it through
/// open faces never touches the rim of the reported region. The witness is
/// the set of closed faces bordering that set from the outside, ordered by
/// angle around the origin.
pub fn find_closed_circuit(reports: &[FaceReport], origin: FaceId) -> Result<Option<Circuit>> {
    let faces: Vec<FaceId> = reports.iter().map(|r| r.face).collect();
    let index = FaceIndex::new(&faces);
    let Some(start) = index.get(origin) else {
        return Err(Error::usage(format!("origin face ({}, {}) is not in the report set", origin.q, origin.r)));
    };
    let n = reports.len();
    let on_rim: Vec<bool> = faces
        .iter()
        .map(|f| f.neighbors().iter().any(|g| index.get(*g).is_none()))
        .collect();

    let mut inside = vec![false; n];
    inside[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        if on_rim[v] {
            return Ok(None);
        }
        for g in faces[v].neighbors() {
            if let Some(w) = index.get(g) {
                if !inside[w] && !reports[w].closed {
                    inside[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }

    // Faces outside the enclosed set that connect to the rim.
    let mut outer = vec![false; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| on_rim[v] && !inside[v]).collect();
    for &v in &queue {
        outer[v] = true;
    }
    while let Some(v) = queue.pop_front() {
        for g in faces[v].neighbors() {
            if let Some(w) = index.get(g) {
                if !outer[w] && !inside[w] {
                    outer[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    let mut ring: Vec<FaceId> = (0..n)
        .filter(|&v| outer[v] && faces[v].neighbors().iter().any(|g| index.get(*g).is_some_and(|w| inside[w])))
        .map(|v| faces[v])
        .collect();
    let lattice = HexLattice {
        delta: 1.0,
        origin: Point2::new(0.0, 0.0),
    };
    let o = lattice.center(origin);
    ring.sort_by(|a, b| {
        let angle = |f: &FaceId| {
            let c = lattice.center(*f);
            (c.y - o.y).atan2(c.x - o.x)
        };
        angle(a).total_cmp(&angle(b)).then(a.cmp(b))
    });
    Ok(Some(Circuit { faces: ring }))
}

/// Face nearest the window centre, `(0, 0)` by construction.
pub fn origin_face() -> FaceId {
    FaceId::new(0, 0)
}

/// Per-face CSV: axial coordinates, closed flag and one closed flag per triangle.
pub fn write_faces_csv<W: Write>(reports: &[FaceReport], mut out: W) -> Result<()> {
    writeln!(out, "face_q,face_r,closed,tri0,tri1,tri2,tri3,tri4,tri5")?;
    for rep in reports {
        write!(out, "{},{},{}", rep.face.q, rep.face.r, u8::from(rep.closed))?;
        for t in &rep.triangles {
            write!(out, ",{}", u8::from(t.closed()))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rng_from_seed, Boundary};
    use rand::Rng;

    fn cfg(rho: f64) -> HexConfig {
        HexConfig {
            delta: 1.0,
            rho,
            eta: 1.0,
            threshold: 16.0,
            alpha: 4.0,
        }
    }

    #[test]
    fn condition_examples() {
        let c = HexConfig {
            delta: 1.0,
            rho: 0.15,
            eta: 0.1,
            threshold: 16.0,
            alpha: 4.0,
        };
        let v = validate_config(&c).unwrap();
        assert!(v.inner_condition && v.spread_condition && v.spread_automatic);
        let c1 = HexConfig {
            threshold: 1.0,
            eta: 1.0,
            rho: 0.97,
            ..c
        };
        assert!(validate_config(&c1).unwrap().inner_condition);
        let tight = HexConfig { eta: 0.05, ..c };
        assert!(!validate_config(&tight).unwrap().inner_condition);
    }

    #[test]
    fn mu_limits_and_scaling() {
        let small = mu_of(&HexConfig { rho: 1e-9, ..cfg(0.5) }).unwrap();
        assert!((small - 1.0 / SQRT3).abs() < 1e-8);
        let a = mu_of(&cfg(0.2)).unwrap();
        let b = mu_of(&HexConfig {
            delta: 2.0,
            rho: 0.4,
            ..cfg(0.2)
        })
        .unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12);
        for rho in [0.01, 0.3, 0.6, 0.99] {
            assert!(mu_of(&cfg(rho)).unwrap() <= 1.0);
        }
        assert!(mu_of(&cfg(1.0)).is_err());
    }

    #[test]
    fn mu_matches_dense_sampling() {
        // Sample the perimeters of both triangles and take the largest gap.
        let c = cfg(0.2);
        let outer = outer_triangle(1.0, 0);
        let inner = inner_triangle(1.0, 0.2, 0);
        let perimeter = |t: &[Point2; 3], m: usize| {
            let mut v = Vec::new();
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                for s in 0..m {
                    let u = s as f64 / m as f64;
                    v.push(Point2::new(a.x + u * (b.x - a.x), a.y + u * (b.y - a.y)));
                }
            }
            v
        };
        let po = perimeter(&outer, 1000);
        let pi = perimeter(&inner, 1000);
        let mut best: f64 = 0.0;
        for a in &po {
            for b in &pi {
                best = best.max((a.x - b.x).hypot(a.y - b.y));
            }
        }
        assert!((best - mu_of(&c).unwrap()).abs() < 1e-3);
    }

    #[test]
    fn locate_round_trips_centres_and_vertices() {
        let lat = HexLattice {
            delta: 0.7,
            origin: Point2::new(3.0, 2.0),
        };
        let mut rng = rng_from_seed(5);
        for _ in 0..2000 {
            let f = FaceId::new(rng.gen_range(-20..20), rng.gen_range(-20..20));
            let c = lat.center(f);
            assert_eq!(lat.locate(c), f);
            // Points well inside the inscribed circle stay in the face.
            let a: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
            let r = rng.gen::<f64>() * 0.86 * 0.7;
            assert_eq!(lat.locate(Point2::new(c.x + r * a.cos(), c.y + r * a.sin())), f);
        }
    }

    #[test]
    fn sectors_partition_the_hexagon() {
        for k in 0..6 {
            let t = outer_triangle(1.0, k);
            let gx = (t[0].x + t[1].x + t[2].x) / 3.0;
            let gy = (t[0].y + t[1].y + t[2].y) / 3.0;
            assert_eq!(sector(gx, gy), k);
            assert!(in_triangle(Point2::new(gx, gy), &inner_triangle(1.0, 0.5, k)));
        }
    }

    #[test]
    fn empty_points_leave_faces_open() {
        let w = window_for_faces(6, 6, 1.0).unwrap();
        let reps = classify_faces(&[], &cfg(0.9), &w).unwrap();
        assert!(!reps.is_empty());
        assert!(reps.iter().all(|r| !r.closed && r.triangles.iter().all(|t| t.inner_count == 0)));
    }

    #[test]
    fn constructed_closed_face() {
        let w = window_for_faces(5, 5, 1.0).unwrap();
        let lat = HexLattice::for_window(1.0, &w);
        let c = lat.center(origin_face());
        let mut pts = Vec::new();
        for k in 0..6 {
            let t = inner_triangle(1.0, 0.9, k);
            let gx = (t[0].x + t[1].x + t[2].x) / 3.0;
            let gy = (t[0].y + t[1].y + t[2].y) / 3.0;
            pts.push(Point2::new(c.x + gx, c.y + gy));
            pts.push(Point2::new(c.x + 0.9 * gx, c.y + 1.05 * gy));
        }
        let reps = classify_faces(&pts, &cfg(0.9), &w).unwrap();
        let origin = reps.iter().find(|r| r.face == origin_face()).unwrap();
        assert!(origin.closed);
        assert_eq!(reps.iter().filter(|r| r.closed).count(), 1);
    }

    #[test]
    fn faces_inside_window() {
        let w = window_for_faces(9, 9, 0.5).unwrap();
        let lat = HexLattice::for_window(0.5, &w);
        let faces = lat.faces_in(&w);
        assert!(faces.contains(&origin_face()));
        assert!(faces.len() >= 81, "{}", faces.len());
        assert!(faces.iter().all(|f| lat.fits(*f, &w)));
        let tiny = Window::new(0.5, 0.5, Boundary::Plain).unwrap();
        assert!(matches!(classify_faces(&[], &cfg(0.5), &tiny), Err(Error::Usage(_))));
    }

    #[test]
    fn probability_reference_value() {
        // Independent evaluation of the same expression at lambda = 50.
        let p = closed_face_probability(50.0, &cfg(0.95)).unwrap();
        let inner = 3f64.sqrt() / 4.0 * 0.95 * 0.95;
        let ring = 3f64.sqrt() / 4.0 * (1.0 - 0.95 * 0.95);
        let want = (-50.0 * ring).exp() * (1.0 - (-50.0 * inner).exp() * (1.0 + 50.0 * inner));
        assert!((p.triangle - want).abs() < 1e-15);
        assert!((p.triangle - 0.121_124_4).abs() < 1e-6);
        assert!((p.face - want.powi(6)).abs() < 1e-15);
        assert_eq!(closed_face_probability(0.0, &cfg(0.95)).unwrap().triangle, 0.0);
        assert!(closed_face_probability(1e5, &cfg(0.95)).unwrap().triangle < 1e-100);
    }

    #[test]
    fn uncertified_config_gives_zero() {
        let c = HexConfig { eta: 0.01, ..cfg(0.5) };
        let p = closed_face_probability(10.0, &c).unwrap();
        assert!(!p.certified && p.triangle == 0.0);
    }

    #[test]
    fn interval_endpoints_hit_threshold() {
        let c = cfg(0.995);
        let (l1, l2) = lambda_interval_subcritical(&c).unwrap().unwrap();
        let thr = triangle_threshold();
        for l in [l1, l2] {
            let p = closed_face_probability(l, &c).unwrap().triangle;
            assert!((p - thr).abs() < 1e-9, "{l}: {p}");
        }
        // Dense grid scan agrees on which intensities exceed the threshold.
        for k in 1..4000 {
            let l = k as f64 * 0.02;
            let above = closed_face_probability(l, &c).unwrap().triangle > thr;
            let inside = l > l1 && l < l2;
            if (l - l1).abs() > 1e-6 && (l - l2).abs() > 1e-6 {
                assert_eq!(above, inside, "lambda {l}");
            }
        }
    }

    #[test]
    fn interval_empty_below_threshold() {
        // The maximum for rho = 0.99 is about 0.8708, short of 0.8909.
        let (_, pmax) = max_closed_probability(&cfg(0.99)).unwrap();
        assert!(pmax < triangle_threshold());
        assert!(lambda_interval_subcritical(&cfg(0.99)).unwrap().is_none());
        assert!(lambda_interval_subcritical(&cfg(0.8)).unwrap().is_none());
    }

    fn synthetic(closed: impl Fn(FaceId) -> bool, cols: usize) -> Vec<FaceReport> {
        let w = window_for_faces(cols, cols, 1.0).unwrap();
        HexLattice::for_window(1.0, &w)
            .faces_in(&w)
            .into_iter()
            .map(|face| FaceReport {
                face,
                closed: closed(face),
                triangles: [TriangleState::default(); 6],
            })
            .collect()
    }

    #[test]
    fn minimal_ring() {
        let o = origin_face();
        let reps = synthetic(|f| f != o, 9);
        let c = find_closed_circuit(&reps, o).unwrap().unwrap();
        let mut got = c.faces.clone();
        got.sort();
        let mut want = o.neighbors().to_vec();
        want.sort();
        assert_eq!(got, want);
        assert!(find_closed_circuit(&synthetic(|_| false, 9), o).unwrap().is_none());
        assert!(find_closed_circuit(&reps, FaceId::new(500, 0)).is_err());
    }

    #[test]
    fn ring_at_distance_two() {
        let dist = |f: FaceId| (f.q.abs() + f.r.abs() + (f.q + f.r).abs()) / 2;
        let reps = synthetic(|f| dist(f) == 2, 11);
        let c = find_closed_circuit(&reps, origin_face()).unwrap().unwrap();
        assert_eq!(c.faces.len(), 12);
        // Consecutive witness faces share an edge.
        for k in 0..c.faces.len() {
            let (a, b) = (c.faces[k], c.faces[(k + 1) % c.faces.len()]);
            assert!(a.neighbors().contains(&b), "{a:?} {b:?}");
        }
    }

    #[test]
    fn csv_layout() {
        let reps = synthetic(|_| true, 3);
        let mut buf = Vec::new();
        write_faces_csv(&reps, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), reps.len() + 1);
        assert!(text.starts_with("face_q,face_r,closed,tri0"));
    }
}
