//! Square-lattice construction for the super-critical regime.
//!
//! The window is cut into square cells of side `s = g^-1(M T) / sqrt(5)`.
//! Lattice vertices sit on cell corners. An interior lattice edge is flanked
//! by two cells; it is open when both cells are occupied (`A`) and every
//! ordered pair of distinct nodes `i, j` in the two cells sees interference
//! `sum_{k != i, j} g(d_kj)` below `M` (`B`). Any two such nodes are within
//! `sqrt(5) s`, so an open edge certifies SIR links in both directions.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attenuation::AttenuationModel;
use crate::error::{Error, Result};
use crate::field::InterferenceField;
use crate::geometry::{rng_from_seed, sample_with, Boundary, Metric, Point2, PointProcess, Window};
use crate::sir_graph::{interference_sum, SirGraphConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquareConfig {
    /// Interference cap `M`.
    pub m_cap: f64,
    pub threshold: f64,
    pub model: AttenuationModel,
    #[serde(default = "default_true")]
    pub exclude_receiver: bool,
}

fn default_true() -> bool {
    true
}

impl SquareConfig {
    pub fn new(m_cap: f64, threshold: f64, model: AttenuationModel) -> Self {
        Self {
            m_cap,
            threshold,
            model,
            exclude_receiver: true,
        }
    }

    /// Cell side `g^-1(M T) / sqrt(5)`.
    pub fn side(&self) -> Result<f64> {
        self.model.validate()?;
        if !self.model.is_bounded() {
            return Err(Error::config("the square-lattice construction needs a bounded path-loss model"));
        }
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.m_cap) || !ok(self.threshold) {
            return Err(Error::config(format!(
                "M and T must be finite and positive, got M={} T={}",
                self.m_cap, self.threshold
            )));
        }
        let s = self.model.inverse(self.m_cap * self.threshold)? / 5f64.sqrt();
        if !(s > 0.0) {
            return Err(Error::domain(format!(
                "g^-1(M T) is zero at M T = {}, so the lattice degenerates",
                self.m_cap * self.threshold
            )));
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeReport {
    /// Lattice point at the lower/left end of the edge.
    pub a: u32,
    pub b: u32,
    pub orientation: Orientation,
    /// Both flanking cells occupied.
    pub occupied: bool,
    /// Interference below the cap for every ordered node pair in the cells.
    pub quiet: bool,
    pub open: bool,
}

/// Lattice of `nx x ny` cells with the state of every interior edge.
///
/// Horizontal edges `(a, b)-(a+1, b)` exist for `1 <= b < ny`, vertical
/// edges `(a, b)-(a, b+1)` for `1 <= a < nx`; edges on the window border
/// have only one flanking cell and are not part of the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField {
    pub nx: usize,
    pub ny: usize,
    pub side: f64,
    pub edges: Vec<EdgeReport>,
}

impl EdgeField {
    fn horizontal_count(nx: usize, ny: usize) -> usize {
        nx * ny.saturating_sub(1)
    }

    /// Every interior edge with its open state given by `open`.
    pub fn from_fn(nx: usize, ny: usize, side: f64, mut open: impl FnMut(usize, usize, Orientation) -> bool) -> Self {
        let mut edges = Vec::with_capacity(2 * nx * ny);
        for b in 1..ny {
            for a in 0..nx {
                let o = open(a, b, Orientation::Horizontal);
                edges.push(EdgeReport {
                    a: a as u32,
                    b: b as u32,
                    orientation: Orientation::Horizontal,
                    occupied: o,
                    quiet: o,
                    open: o,
                });
            }
        }
        for b in 0..ny {
            for a in 1..nx {
                let o = open(a, b, Orientation::Vertical);
                edges.push(EdgeReport {
                    a: a as u32,
                    b: b as u32,
                    orientation: Orientation::Vertical,
                    occupied: o,
                    quiet: o,
                    open: o,
                });
            }
        }
        Self { nx, ny, side, edges }
    }

    pub fn edge_index(&self, a: usize, b: usize, o: Orientation) -> Option<usize> {
        match o {
            Orientation::Horizontal if a < self.nx && b >= 1 && b < self.ny => Some((b - 1) * self.nx + a),
            Orientation::Vertical if a >= 1 && a < self.nx && b < self.ny => {
                Some(Self::horizontal_count(self.nx, self.ny) + b * (self.nx - 1) + (a - 1))
            }
            _ => None,
        }
    }

    /// Endpoints of edge `e` as lattice vertex ids `b * (nx + 1) + a`.
    pub fn endpoints(&self, e: usize) -> (usize, usize) {
        let r = &self.edges[e];
        let (a, b) = (r.a as usize, r.b as usize);
        let w = self.nx + 1;
        match r.orientation {
            Orientation::Horizontal => (b * w + a, b * w + a + 1),
            Orientation::Vertical => (b * w + a, (b + 1) * w + a),
        }
    }

    pub fn vertex_count(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        let (a, b) = (v % (self.nx + 1), v / (self.nx + 1));
        a == 0 || b == 0 || a == self.nx || b == self.ny
    }

    /// Lattice vertex nearest the window centre.
    pub fn origin(&self) -> usize {
        let a = self.nx.div_ceil(2);
        let b = self.ny.div_ceil(2);
        b * (self.nx + 1) + a.min(self.nx)
    }

    /// Interior edges incident to lattice vertex `v`.
    pub fn incident(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        let (a, b) = (v % (self.nx + 1), v / (self.nx + 1));
        let cand = [
            self.edge_index(a, b, Orientation::Horizontal),
            a.checked_sub(1).and_then(|l| self.edge_index(l, b, Orientation::Horizontal)),
            self.edge_index(a, b, Orientation::Vertical),
            b.checked_sub(1).and_then(|d| self.edge_index(a, d, Orientation::Vertical)),
        ];
        cand.into_iter().flatten()
    }

    /// Cells `(a, b)` flanking edge `e`.
    pub fn flanking_cells(&self, e: usize) -> [(usize, usize); 2] {
        let r = &self.edges[e];
        let (a, b) = (r.a as usize, r.b as usize);
        match r.orientation {
            Orientation::Horizontal => [(a, b - 1), (a, b)],
            Orientation::Vertical => [(a - 1, b), (a, b)],
        }
    }

    pub fn open_fraction(&self) -> f64 {
        if self.edges.is_empty() {
            return 0.0;
        }
        self.edges.iter().filter(|e| e.open).count() as f64 / self.edges.len() as f64
    }
}

/// Classifies every interior lattice edge of the window.
///
/// Interference sums run over all points, including any in the strip left
/// over when the window is not a whole number of cells.
pub fn classify_edges(points: &[Point2], config: &SquareConfig, window: &Window) -> Result<EdgeField> {
    if config.model.value_at_zero().is_infinite() {
        return Err(Error::config("edge classification needs g(0) finite"));
    }
    let s = config.side()?;
    let nx = (window.width / s).floor() as usize;
    let ny = (window.height / s).floor() as usize;
    if nx < 2 || ny < 2 {
        return Err(Error::usage(format!(
            "window {} x {} holds fewer than 2 x 2 cells of side {s}",
            window.width, window.height
        )));
    }
    let (rx, ry) = (window.width - nx as f64 * s, window.height - ny as f64 * s);
    if rx > 1e-9 * s || ry > 1e-9 * s {
        log::warn!("window {} x {} is not a whole number of cells of side {s}; using {nx} x {ny}", window.width, window.height);
    }

    let mut cell_members: Vec<Vec<usize>> = vec![Vec::new(); nx * ny];
    for (k, p) in points.iter().enumerate() {
        let (ca, cb) = ((p.x / s).floor(), (p.y / s).floor());
        if ca >= 0.0 && cb >= 0.0 && (ca as usize) < nx && (cb as usize) < ny {
            cell_members[cb as usize * nx + ca as usize].push(k);
        }
    }

    let mut field = EdgeField::from_fn(nx, ny, s, |_, _, _| false);
    let oracle = PowerOracle::new(points, config, window.metric());
    let states: Vec<(bool, bool)> = (0..field.edges.len())
        .into_par_iter()
        .map(|e| {
            let [c1, c2] = field.flanking_cells(e);
            let m1 = &cell_members[c1.1 * nx + c1.0];
            let m2 = &cell_members[c2.1 * nx + c2.0];
            let occupied = !m1.is_empty() && !m2.is_empty();
            let union: Vec<usize> = m1.iter().chain(m2).copied().collect();
            (occupied, oracle.quiet(&union))
        })
        .collect();
    for (rep, (occupied, quiet)) in field.edges.iter_mut().zip(states) {
        rep.occupied = occupied;
        rep.quiet = quiet;
        rep.open = occupied && quiet;
    }
    Ok(field)
}

/// Decides `sum_{k != i, j} g(d_kj) < M` exactly as the definitional sum
/// would, escalating from cheap certified bounds to the sum itself.
struct PowerOracle<'a> {
    points: &'a [Point2],
    config: &'a SquareConfig,
    sir_config: SirGraphConfig,
    metric: Metric,
    /// Coarse interval per node: exact totals for small inputs, far-field bounds otherwise.
    coarse: Vec<(f64, f64)>,
    exact_coarse: bool,
    field: Option<InterferenceField>,
    /// Finer intervals per node, computed on first use: one slot per
    /// far-field angle, then the exact total.
    refined: Vec<[OnceLock<(f64, f64)>; FINE_THETAS.len() + 1]>,
}

const EXACT_LIMIT: usize = 3000;
/// Opening angles of the far-field bounds: a cheap pass settles nodes far
/// from the cap, finer ones most of the rest. Beyond that the exact O(n)
/// total is cheaper than tighter far-field bounds.
const COARSE_THETA: f64 = 1.0;
const FINE_THETAS: [f64; 2] = [0.35, 0.15];

impl<'a> PowerOracle<'a> {
    fn new(points: &'a [Point2], config: &'a SquareConfig, metric: Metric) -> Self {
        let n = points.len();
        let model = config.model;
        let (coarse, field, exact_coarse) = if n <= EXACT_LIMIT {
            let totals: Vec<(f64, f64)> = (0..n)
                .into_par_iter()
                .map(|j| {
                    let s = exact_total(points, &model, metric, j);
                    (s, s)
                })
                .collect();
            (totals, None, true)
        } else {
            let f = InterferenceField::new(points, model, metric);
            let b: Vec<(f64, f64)> = (0..n).into_par_iter().map(|j| f.bounds(j, COARSE_THETA)).collect();
            (b, Some(f), false)
        };
        Self {
            points,
            config,
            sir_config: SirGraphConfig::new(config.threshold)
                .with_exclude_receiver(config.exclude_receiver)
                .with_metric(metric),
            metric,
            coarse,
            exact_coarse,
            field,
            refined: (0..n).map(|_| Default::default()).collect(),
        }
    }

    fn gain(&self, i: usize, j: usize) -> f64 {
        self.config.model.gain(self.metric.distance(self.points[i], self.points[j]))
    }

    /// Verdict on `S - g + self_term < M` for an interval `[lo, hi]` on `S`.
    fn verdict(&self, lo: f64, hi: f64, g: f64, exact: bool) -> Option<bool> {
        let n = self.points.len() as f64;
        let self_term = if self.config.exclude_receiver { 0.0 } else { self.config.model.value_at_zero() };
        // Rounding of both this estimate and the definitional sum.
        let rounding = if exact { 4.0 * (n + 4.0) * f64::EPSILON } else { 1e-9 } * (hi + self_term);
        let m = self.config.m_cap;
        if hi - g + self_term + rounding < m {
            Some(true)
        } else if lo - g + self_term - rounding >= m {
            Some(false)
        } else {
            None
        }
    }

    fn quiet(&self, union: &[usize]) -> bool {
        if union.len() < 2 {
            return true;
        }
        for &j in union {
            // The farthest partner gives the largest interference.
            let weakest = union
                .iter()
                .filter(|&&i| i != j)
                .map(|&i| self.gain(i, j))
                .fold(f64::INFINITY, f64::min);
            let (lo, hi) = self.coarse[j];
            let mut v = self.verdict(lo, hi, weakest, self.exact_coarse);
            if let Some(f) = &self.field {
                let slots = &self.refined[j];
                for (slot, theta) in slots.iter().zip(FINE_THETAS) {
                    if v.is_some() {
                        break;
                    }
                    let (lo, hi) = *slot.get_or_init(|| f.bounds(j, theta));
                    v = self.verdict(lo, hi, weakest, false);
                }
                if v.is_none() {
                    let (s, _) = *slots[FINE_THETAS.len()]
                        .get_or_init(|| (exact_total(self.points, &self.config.model, self.metric, j), 0.0));
                    v = self.verdict(s, s, weakest, true);
                }
            }
            match v {
                Some(true) => continue,
                Some(false) => return false,
                None => {
                    for &i in union.iter().filter(|&&i| i != j) {
                        let (sum, _) = interference_sum(self.points, &self.config.model, &self.sir_config, None, i, j);
                        if !(sum < self.config.m_cap) {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }
}

fn exact_total(points: &[Point2], model: &AttenuationModel, metric: Metric, j: usize) -> f64 {
    let pj = points[j];
    let mut s = 0.0;
    for (k, pk) in points.iter().enumerate() {
        if k != j {
            s += model.gain(metric.distance(*pk, pj));
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpenComponent {
    /// Indices into [`EdgeField::edges`], ascending.
    pub edges: Vec<usize>,
    pub vertices: Vec<usize>,
    pub boundary_reached: bool,
}

/// Open cluster of lattice vertex `origin`.
pub fn open_component(field: &EdgeField, origin: usize) -> OpenComponent {
    let mut seen = vec![false; field.vertex_count()];
    let mut in_comp = vec![false; field.edges.len()];
    seen[origin] = true;
    let mut queue = VecDeque::from([origin]);
    let mut vertices = vec![origin];
    while let Some(v) = queue.pop_front() {
        for e in field.incident(v) {
            if !field.edges[e].open {
                continue;
            }
            in_comp[e] = true;
            let (x, y) = field.endpoints(e);
            let w = if x == v { y } else { x };
            if !seen[w] {
                seen[w] = true;
                vertices.push(w);
                queue.push_back(w);
            }
        }
    }
    let edges: Vec<usize> = (0..field.edges.len()).filter(|&e| in_comp[e]).collect();
    vertices.sort_unstable();
    let boundary_reached = !edges.is_empty() && vertices.iter().any(|&v| field.is_boundary_vertex(v));
    OpenComponent {
        edges,
        vertices,
        boundary_reached,
    }
}

/// Union-find with path halving and union by size.
#[derive(Debug, Clone)]
pub struct DisjointSets {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSets {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> usize {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return ra;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        ra
    }
}

/// Number of open edges in the largest open cluster.
pub fn largest_open_component(field: &EdgeField) -> usize {
    let mut sets = DisjointSets::new(field.vertex_count());
    for e in 0..field.edges.len() {
        if field.edges[e].open {
            let (x, y) = field.endpoints(e);
            sets.union(x, y);
        }
    }
    let mut count = vec![0usize; field.vertex_count()];
    for e in 0..field.edges.len() {
        if field.edges[e].open {
            let (x, _) = field.endpoints(e);
            let r = sets.find(x);
            count[r] += 1;
        }
    }
    count.into_iter().max().unwrap_or(0)
}

/// Closed circuit of the dual lattice, as the cells it visits in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DualCircuit {
    pub cells: Vec<(usize, usize)>,
}

/// Closed dual circuit around lattice vertex `origin`, if one exists.
///
/// Dual vertices are cell centres. A dual edge joins the two cells flanking
/// a primal edge and is closed when that edge is closed. A ray from the
/// origin in the `+x` direction marks the dual edges crossing it; a closed
/// walk winds around the origin exactly when it crosses the ray an odd
/// number of times, which is detected on the graph doubled by crossing
/// parity.
pub fn dual_closed_circuit(field: &EdgeField, origin: usize) -> Option<DualCircuit> {
    let (nx, ny) = (field.nx, field.ny);
    let (oa, ob) = (origin % (nx + 1), origin / (nx + 1));
    let cells = nx * ny;
    let mut adj: Vec<Vec<(usize, bool)>> = vec![Vec::new(); cells];
    for e in 0..field.edges.len() {
        if field.edges[e].open {
            continue;
        }
        let r = &field.edges[e];
        let [c1, c2] = field.flanking_cells(e);
        let crosses = r.orientation == Orientation::Horizontal && r.b as usize == ob && r.a as usize >= oa;
        let (u, w) = (c1.1 * nx + c1.0, c2.1 * nx + c2.0);
        adj[u].push((w, crosses));
        adj[w].push((u, crosses));
    }
    let mut lifted = DisjointSets::new(2 * cells);
    for u in 0..cells {
        for &(w, crosses) in &adj[u] {
            let flip = usize::from(crosses);
            lifted.union(2 * u, 2 * w + flip);
            lifted.union(2 * u + 1, 2 * w + (1 - flip));
        }
    }
    let centre = |c: usize| {
        let (a, b) = ((c % nx) as f64 + 0.5, (c / nx) as f64 + 0.5);
        (a - oa as f64).powi(2) + (b - ob as f64).powi(2)
    };
    let start = (0..cells)
        .filter(|&c| lifted.find(2 * c) == lifted.find(2 * c + 1))
        .min_by(|&x, &y| centre(x).total_cmp(&centre(y)).then(x.cmp(&y)))?;

    // Shortest path from (start, 0) to (start, 1) in the lifted graph.
    let mut prev = vec![usize::MAX; 2 * cells];
    let src = 2 * start;
    let dst = 2 * start + 1;
    prev[src] = src;
    let mut queue = VecDeque::from([src]);
    while let Some(x) = queue.pop_front() {
        if x == dst {
            break;
        }
        let (u, p) = (x / 2, x % 2);
        for &(w, crosses) in &adj[u] {
            let y = 2 * w + (p ^ usize::from(crosses));
            if prev[y] == usize::MAX {
                prev[y] = x;
                queue.push_back(y);
            }
        }
    }
    let mut walk = vec![dst];
    let mut x = dst;
    while x != src {
        x = prev[x];
        walk.push(x);
    }
    walk.reverse();
    // Steps as (cell, parity of the step into the next cell).
    let mut steps: Vec<(usize, bool)> = walk
        .windows(2)
        .map(|w| (w[0] / 2, (w[0] % 2) != (w[1] % 2)))
        .collect();
    simplify_odd_cycle(&mut steps);
    Some(DualCircuit {
        cells: steps.iter().map(|&(c, _)| (c % nx, c / nx)).collect(),
    })
}

/// Reduces a closed walk with an odd number of ray crossings to a simple
/// cycle that still has an odd number.
fn simplify_odd_cycle(steps: &mut Vec<(usize, bool)>) {
    loop {
        let mut first = std::collections::HashMap::new();
        let mut repeat = None;
        for (idx, &(c, _)) in steps.iter().enumerate() {
            if let Some(&i) = first.get(&c) {
                repeat = Some((i, idx));
                break;
            }
            first.insert(c, idx);
        }
        let Some((i, j)) = repeat else { return };
        let inner_odd = steps[i..j].iter().filter(|s| s.1).count() % 2 == 1;
        if inner_odd {
            steps.truncate(j);
            steps.drain(..i);
        } else {
            steps.drain(i..j);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub lambda: f64,
    pub s: f64,
    pub m_cap: f64,
    pub threshold: f64,
    pub nodes: usize,
    pub open_fraction: f64,
    pub largest_component: usize,
    pub boundary_reached: bool,
}

/// Window of exactly `nx x ny` cells for this configuration.
pub fn lattice_window(config: &SquareConfig, nx: usize, ny: usize, boundary: Boundary) -> Result<Window> {
    let s = config.side()?;
    Window::new(nx as f64 * s, ny as f64 * s, boundary)
}

/// Samples a Poisson realization and reports whether the open cluster of
/// the central lattice vertex reaches the window boundary.
pub fn percolation_trial(lambda: f64, config: &SquareConfig, window: &Window, seed: u64) -> Result<TrialRecord> {
    let s = config.side()?;
    // Align the window to whole cells before sampling.
    let nx = (window.width / s).floor();
    let ny = (window.height / s).floor();
    let aligned = Window::new((nx * s).max(s), (ny * s).max(s), window.boundary)?;
    let mut rng = rng_from_seed(seed);
    let points = sample_with(&PointProcess::Poisson { intensity: lambda }, &aligned, &mut rng)?;
    let field = classify_edges(&points, config, &aligned)?;
    let comp = open_component(&field, field.origin());
    Ok(TrialRecord {
        seed,
        lambda,
        s,
        m_cap: config.m_cap,
        threshold: config.threshold,
        nodes: points.len(),
        open_fraction: field.open_fraction(),
        largest_component: largest_open_component(&field),
        boundary_reached: comp.boundary_reached,
    })
}

/// Per-edge CSV: lattice-point coordinates, orientation and the three flags.
pub fn write_edges_csv<W: Write>(field: &EdgeField, mut out: W) -> Result<()> {
    writeln!(out, "x,y,orientation,A,B,open")?;
    for e in &field.edges {
        let o = match e.orientation {
            Orientation::Horizontal => "h",
            Orientation::Vertical => "v",
        };
        writeln!(
            out,
            "{},{},{o},{},{},{}",
            e.a as f64 * field.side,
            e.b as f64 * field.side,
            u8::from(e.occupied),
            u8::from(e.quiet),
            u8::from(e.open)
        )?;
    }
    Ok(())
}

pub fn write_trials_csv<W: Write>(records: &[TrialRecord], mut out: W) -> Result<()> {
    writeln!(out, "seed,lambda,s,M,T,open_fraction,largest_component,boundary_reached")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.seed,
            r.lambda,
            r.s,
            r.m_cap,
            r.threshold,
            r.open_fraction,
            r.largest_component,
            u8::from(r.boundary_reached)
        )?;
    }
    Ok(())
}
