//! Colour assignment and connectivity of coloured SIR graphs in the unit square.
//!
//! The square is tiled with cells. Cells use four disjoint colour sets in a
//! 2 x 2 repeating pattern, so same-coloured nodes in different cells are at
//! least one cell apart. Within a cell, nodes take colours of the cell's set
//! round-robin in index order.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::attenuation::AttenuationModel;
use crate::error::{Error, Result};
use crate::geometry::{rng_from_seed, sample_with, Point2, PointProcess, Window};
use crate::sir_graph::{self, SirGraph, SirGraphConfig};

/// Slowly growing `f(n)` setting the colour count in the lower-bound regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthFn {
    SqrtLog,
    LogLog,
    Constant,
}

impl GrowthFn {
    pub fn eval(&self, n: f64) -> f64 {
        match self {
            GrowthFn::SqrtLog => n.ln().sqrt(),
            GrowthFn::LogLog => n.ln().ln(),
            GrowthFn::Constant => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColoringMode {
    /// Cells of side `sqrt(c ln n / n)`, four sets of `ceil((1 + delta) c ln n)` colours.
    UpperBound,
    /// Cells of side `sqrt(ln n / n)`, one set of `ceil(T f(n) / omega)` colours.
    LowerBound { f: GrowthFn, omega: f64, threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColoringConfig {
    pub n: usize,
    pub c: f64,
    pub delta_slack: f64,
    /// Neighbourhood squares have side `sqrt(m ln n / n)`; used for diagnostics.
    #[serde(default = "default_m")]
    pub m: f64,
    pub mode: ColoringMode,
}

fn default_m() -> f64 {
    1.0
}

impl ColoringConfig {
    pub fn upper(n: usize, c: f64, delta_slack: f64, m: f64) -> Self {
        Self {
            n,
            c,
            delta_slack,
            m,
            mode: ColoringMode::UpperBound,
        }
    }

    pub fn lower(n: usize, f: GrowthFn, omega: f64, threshold: f64) -> Self {
        Self {
            n,
            c: 1.0,
            delta_slack: 0.0,
            m: 1.0,
            mode: ColoringMode::LowerBound { f, omega, threshold },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::config(format!("need at least 2 nodes, got {}", self.n)));
        }
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.c) || !pos(self.m) || !(self.delta_slack.is_finite() && self.delta_slack >= 0.0) {
            return Err(Error::config(format!(
                "c and m must be positive and delta non-negative, got c={} m={} delta={}",
                self.c, self.m, self.delta_slack
            )));
        }
        if let ColoringMode::LowerBound { omega, threshold, .. } = self.mode {
            if !pos(omega) || !(threshold.is_finite() && threshold >= 0.0) {
                return Err(Error::config(format!("omega must be positive and T non-negative, got {omega}, {threshold}")));
            }
        }
        if self.cell_side() > 1.0 {
            return Err(Error::config(format!(
                "cell side {} exceeds the unit square",
                self.cell_side()
            )));
        }
        Ok(())
    }

    fn ln_n(&self) -> f64 {
        (self.n as f64).ln()
    }

    pub fn cell_side(&self) -> f64 {
        match self.mode {
            ColoringMode::UpperBound => (self.c * self.ln_n() / self.n as f64).sqrt(),
            ColoringMode::LowerBound { .. } => (self.ln_n() / self.n as f64).sqrt(),
        }
    }

    /// Colours per set.
    pub fn set_size(&self) -> usize {
        match self.mode {
            ColoringMode::UpperBound => ((1.0 + self.delta_slack) * self.c * self.ln_n()).ceil().max(1.0) as usize,
            ColoringMode::LowerBound { f, omega, threshold } => {
                (threshold * f.eval(self.n as f64) / omega).ceil().max(1.0) as usize
            }
        }
    }

    pub fn set_count(&self) -> usize {
        match self.mode {
            ColoringMode::UpperBound => 4,
            ColoringMode::LowerBound { .. } => 1,
        }
    }

    /// Total colour count `C(n)`.
    pub fn color_count(&self) -> usize {
        self.set_count() * self.set_size()
    }

    pub fn neighborhood_side(&self) -> f64 {
        (self.m * self.ln_n() / self.n as f64).sqrt()
    }

    pub fn mode_name(&self) -> &'static str {
        match self.mode {
            ColoringMode::UpperBound => "upper_bound",
            ColoringMode::LowerBound { .. } => "lower_bound",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColoringAssignment {
    pub cells_per_axis: usize,
    pub set_size: usize,
    pub set_count: usize,
    /// `(i, j)` = (column, row) of each node's cell.
    pub cell_of: Vec<(u32, u32)>,
    pub color_of: Vec<u32>,
}

impl ColoringAssignment {
    /// Colour set of cell `(i, j)`, in `1..=4` (always 1 with a single set).
    pub fn set_of_cell(&self, i: usize, j: usize) -> u32 {
        if self.set_count == 1 {
            1
        } else {
            1 + 2 * (i % 2) as u32 + (j % 2) as u32
        }
    }

    /// Whether some cell holds more nodes than its set has colours.
    pub fn has_repeat(&self) -> bool {
        let k = self.cells_per_axis;
        let mut counts = vec![0usize; k * k];
        for &(i, j) in &self.cell_of {
            counts[j as usize * k + i as usize] += 1;
        }
        counts.iter().any(|&c| c > self.set_size)
    }
}

fn cell_index(x: f64, side: f64, k: usize) -> usize {
    ((x / side).floor().max(0.0) as usize).min(k - 1)
}

pub fn assign_colors(points: &[Point2], config: &ColoringConfig) -> Result<ColoringAssignment> {
    config.validate()?;
    if let Some(p) = points.iter().find(|p| !(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0)) {
        return Err(Error::config(format!("point ({}, {}) is outside the unit square", p.x, p.y)));
    }
    let side = config.cell_side();
    let k = (1.0 / side).ceil() as usize;
    let set_size = config.set_size();
    let mut assignment = ColoringAssignment {
        cells_per_axis: k,
        set_size,
        set_count: config.set_count(),
        cell_of: Vec::with_capacity(points.len()),
        color_of: Vec::with_capacity(points.len()),
    };
    let mut rank = vec![0usize; k * k];
    for p in points {
        let (i, j) = (cell_index(p.x, side, k), cell_index(p.y, side, k));
        let r = &mut rank[j * k + i];
        let set = assignment.set_of_cell(i, j) as usize;
        assignment.cell_of.push((i as u32, j as u32));
        assignment.color_of.push(((set - 1) * set_size + *r % set_size) as u32);
        *r += 1;
    }
    Ok(assignment)
}

pub fn build_colored_sir_graph(
    points: &[Point2],
    assignment: &ColoringAssignment,
    model: &AttenuationModel,
    config: &SirGraphConfig,
) -> Result<SirGraph> {
    sir_graph::build_colored(points, &assignment.color_of, model, config)
}

/// Node counts of the cells lying wholly inside the unit square.
pub fn full_cell_occupancies(points: &[Point2], side: f64) -> Vec<usize> {
    let full = (1.0 / side).floor() as usize;
    let mut counts = vec![0usize; full * full];
    for p in points {
        let (i, j) = ((p.x / side).floor(), (p.y / side).floor());
        if i >= 0.0 && j >= 0.0 && (i as usize) < full && (j as usize) < full {
            counts[j as usize * full + i as usize] += 1;
        }
    }
    counts
}

/// Node counts of the axis-aligned squares of side `side` centred at each
/// node, for the squares lying wholly inside the unit square. Each count
/// includes the centre node.
pub fn neighborhood_occupancies(points: &[Point2], side: f64) -> Vec<usize> {
    let h = 0.5 * side;
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].x.total_cmp(&points[b].x));
    let xs: Vec<f64> = order.iter().map(|&k| points[k].x).collect();
    let mut out = Vec::new();
    for p in points {
        if p.x - h < 0.0 || p.x + h > 1.0 || p.y - h < 0.0 || p.y + h > 1.0 {
            continue;
        }
        let lo = xs.partition_point(|&x| x < p.x - h);
        let hi = xs.partition_point(|&x| x <= p.x + h);
        let count = order[lo..hi].iter().filter(|&&k| (points[k].y - p.y).abs() <= h).count();
        out.push(count);
    }
    out
}

/// Largest same-colour interference `sum_{v != t, c(v) = c(t)} g(d_vu)` over
/// transmitters `t` and receivers `u != t` inside the square of side `side`
/// centred at `t`.
pub fn max_same_color_interference(
    points: &[Point2],
    colors: &[u32],
    model: &AttenuationModel,
    config: &SirGraphConfig,
    side: f64,
) -> f64 {
    let ncolors = colors.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); ncolors];
    for (k, &c) in colors.iter().enumerate() {
        members[c as usize].push(k);
    }
    let h = 0.5 * side;
    let mut worst: f64 = 0.0;
    for (t, pt) in points.iter().enumerate() {
        for (u, pu) in points.iter().enumerate() {
            if u == t || (pu.x - pt.x).abs() > h || (pu.y - pt.y).abs() > h {
                continue;
            }
            let sum: f64 = members[colors[t] as usize]
                .iter()
                .filter(|&&v| v != t && !(v == u && config.exclude_receiver))
                .map(|&v| model.gain(config.metric.distance(points[v], *pu)))
                .sum();
            worst = worst.max(sum);
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityRecord {
    pub seed: u64,
    pub n: usize,
    pub mode: ColoringMode,
    pub color_count: usize,
    pub c: f64,
    pub m: f64,
    pub delta: f64,
    pub threshold: f64,
    pub connected: bool,
    /// Nodes with no outgoing or no incoming edge.
    pub isolated_nodes: usize,
    pub max_cell_occupancy: usize,
    /// Smallest count over neighbourhood squares inside the unit square.
    pub min_neighborhood_occupancy: Option<usize>,
    /// Some cell holds more nodes than its colour set.
    pub color_repeat: bool,
}

/// Samples `n` uniform nodes in the unit square, colours them and tests
/// strong connectivity of the coloured SIR graph at threshold `threshold`.
pub fn connectivity_trial(
    config: &ColoringConfig,
    model: &AttenuationModel,
    threshold: f64,
    seed: u64,
) -> Result<ConnectivityRecord> {
    let (record, _, _) = connectivity_trial_detailed(config, model, threshold, seed)?;
    Ok(record)
}

/// As [`connectivity_trial`], also returning the points and the colouring.
pub fn connectivity_trial_detailed(
    config: &ColoringConfig,
    model: &AttenuationModel,
    threshold: f64,
    seed: u64,
) -> Result<(ConnectivityRecord, Vec<Point2>, ColoringAssignment)> {
    config.validate()?;
    let mut rng = rng_from_seed(seed);
    let points = sample_with(&PointProcess::UniformN { n: config.n }, &Window::unit_square(), &mut rng)?;
    let assignment = assign_colors(&points, config)?;
    let sir_config = SirGraphConfig::new(threshold);
    let graph = build_colored_sir_graph(&points, &assignment, model, &sir_config)?;
    let connected = sir_graph::is_strongly_connected(&graph)?;
    let mut has_in = vec![false; points.len()];
    for adj in &graph.out_adjacency {
        for &j in adj {
            has_in[j] = true;
        }
    }
    let isolated_nodes = (0..points.len())
        .filter(|&i| graph.out_adjacency[i].is_empty() || !has_in[i])
        .count();
    let k = assignment.cells_per_axis;
    let mut counts = vec![0usize; k * k];
    for &(i, j) in &assignment.cell_of {
        counts[j as usize * k + i as usize] += 1;
    }
    let record = ConnectivityRecord {
        seed,
        n: config.n,
        mode: config.mode,
        color_count: config.color_count(),
        c: config.c,
        m: config.m,
        delta: config.delta_slack,
        threshold,
        connected,
        isolated_nodes,
        max_cell_occupancy: counts.iter().copied().max().unwrap_or(0),
        min_neighborhood_occupancy: neighborhood_occupancies(&points, config.neighborhood_side()).into_iter().min(),
        color_repeat: assignment.has_repeat(),
    };
    Ok((record, points, assignment))
}

/// `zeta(s) = sum_{q >= 1} q^-s` for `s > 1`.
///
/// Direct summation of the first terms, then an Euler-Maclaurin tail.
pub fn zeta(s: f64) -> f64 {
    const N: usize = 64;
    let head: f64 = (1..N).map(|q| (q as f64).powf(-s)).sum();
    let n = N as f64;
    // Tail from N with Bernoulli corrections B2, B4, B6.
    let t = n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s) + s * n.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * n.powf(-s - 3.0) / 720.0
        + s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * n.powf(-s - 5.0) / 30240.0;
    head + t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingBound {
    /// `1 - sqrt(m / c)`.
    pub beta: f64,
    /// `zeta(alpha)`.
    pub c5: f64,
    /// Bound on same-colour interference, `8 c5 / ((2 beta)^alpha (c ln n / n)^(alpha/2))`.
    pub interference: f64,
    /// SIR lower bound obtained by dividing the smallest signal
    /// `(2 m ln n / n)^(-alpha/2)` by `interference`:
    /// `(2 c beta^2 / m)^(alpha/2) / (8 c5)`.
    pub sir_lower_bound: f64,
    /// The form `c^(alpha/2) (m / (2 beta))^(-alpha/2) / (8 c5)`, which
    /// carries one fewer power of `beta` than the quotient above.
    pub sir_lower_bound_stated: f64,
}

pub fn interference_ring_bound(c: f64, m: f64, alpha: f64, n: f64) -> Result<RingBound> {
    if !(m > 0.0 && c > 0.0 && m < c) {
        return Err(Error::config(format!("need 0 < m < c, got m={m} c={c}")));
    }
    if !(alpha > 1.0 && alpha.is_finite()) {
        return Err(Error::config(format!("the ring sum converges only for alpha > 1, got {alpha}")));
    }
    if !(n > 1.0) {
        return Err(Error::config(format!("need n > 1, got {n}")));
    }
    let beta = 1.0 - (m / c).sqrt();
    let c5 = zeta(alpha);
    let area = c * n.ln() / n;
    let interference = 8.0 * c5 / ((2.0 * beta).powf(alpha) * area.powf(alpha / 2.0));
    Ok(RingBound {
        beta,
        c5,
        interference,
        sir_lower_bound: (2.0 * c * beta * beta / m).powf(alpha / 2.0) / (8.0 * c5),
        sir_lower_bound_stated: c.powf(alpha / 2.0) * (m / (2.0 * beta)).powf(-alpha / 2.0) / (8.0 * c5),
    })
}

pub fn write_trials_csv<W: Write>(records: &[ConnectivityRecord], mut out: W) -> Result<()> {
    writeln!(out, "seed,n,mode,C_n,c,m,delta,T,connected,isolated_nodes,max_cell_occupancy")?;
    for r in records {
        let mode = match r.mode {
            ColoringMode::UpperBound => "upper_bound",
            ColoringMode::LowerBound { .. } => "lower_bound",
        };
        writeln!(
            out,
            "{},{},{mode},{},{},{},{},{},{},{},{}",
            r.seed,
            r.n,
            r.color_count,
            r.c,
            r.m,
            r.delta,
            r.threshold,
            u8::from(r.connected),
            r.isolated_nodes,
            r.max_cell_occupancy
        )?;
    }
    Ok(())
}

pub fn write_assignment_csv<W: Write>(points: &[Point2], assignment: &ColoringAssignment, mut out: W) -> Result<()> {
    writeln!(out, "node_index,x,y,cell_i,cell_j,color")?;
    for (k, p) in points.iter().enumerate() {
        let (i, j) = assignment.cell_of[k];
        writeln!(out, "{k},{},{},{i},{j},{}", p.x, p.y, assignment.color_of[k])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample, PointProcessConfig};
    use proptest::prelude::*;

    #[test]
    fn color_counts() {
        let c = ColoringConfig::upper(10_000, 4.0, 0.5, 1.0);
        let size = (1.5 * 4.0 * 10_000f64.ln()).ceil() as usize;
        assert_eq!(c.set_size(), size);
        assert_eq!(c.color_count(), 4 * size);
        assert!((c.cell_side() - (4.0 * 10_000f64.ln() / 10_000.0).sqrt()).abs() < 1e-15);
        let l = ColoringConfig::lower(10_000, GrowthFn::Constant, 0.3, 1.0);
        assert_eq!(l.color_count(), 4);
        assert!((l.cell_side() - (10_000f64.ln() / 10_000.0).sqrt()).abs() < 1e-15);
        let l = ColoringConfig::lower(10_000, GrowthFn::SqrtLog, 1.0, 2.0);
        assert_eq!(l.color_count(), (2.0 * 10_000f64.ln().sqrt()).ceil() as usize);
    }

    #[test]
    fn oversized_cells_rejected() {
        let c = ColoringConfig::upper(4, 4.0, 0.5, 1.0);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        assert!(ColoringConfig::upper(1, 1.0, 0.5, 0.5).validate().is_err());
    }

    #[test]
    fn one_cell_round_robin() {
        let c = ColoringConfig::upper(2000, 4.0, 0.5, 1.0);
        let pts: Vec<Point2> = (0..100).map(|k| Point2::new(0.001 + 1e-5 * k as f64, 0.002)).collect();
        let a = assign_colors(&pts, &c).unwrap();
        let s = c.set_size();
        for (k, &col) in a.color_of.iter().enumerate() {
            assert_eq!(col as usize, k % s);
        }
        assert!(a.has_repeat());
    }

    #[test]
    fn adjacent_cells_use_distinct_sets() {
        let c = ColoringConfig::upper(2000, 4.0, 0.5, 1.0);
        let a = assign_colors(&[], &c).unwrap();
        for i in 0..a.cells_per_axis - 1 {
            for j in 0..a.cells_per_axis - 1 {
                let mut sets = [a.set_of_cell(i, j), a.set_of_cell(i + 1, j), a.set_of_cell(i, j + 1), a.set_of_cell(i + 1, j + 1)];
                sets.sort();
                assert_eq!(sets, [1, 2, 3, 4]);
            }
        }
    }

    #[test]
    fn colors_come_from_cell_set() {
        let c = ColoringConfig::upper(2000, 4.0, 0.5, 1.0);
        let pts = sample(&PointProcessConfig::uniform(2000, 5), &Window::unit_square()).unwrap();
        let a = assign_colors(&pts, &c).unwrap();
        let s = a.set_size as u32;
        for (k, &(i, j)) in a.cell_of.iter().enumerate() {
            let set = a.set_of_cell(i as usize, j as usize);
            assert_eq!(a.color_of[k] / s + 1, set);
        }
        if !a.has_repeat() {
            // Without overflow, nodes sharing a cell never share a colour.
            let mut seen = std::collections::HashSet::new();
            for k in 0..pts.len() {
                assert!(seen.insert((a.cell_of[k], a.color_of[k])));
            }
        }
    }

    #[test]
    fn single_color_matches_plain_graph() {
        let model = AttenuationModel::power_law(4.0).unwrap();
        let pts = sample(&PointProcessConfig::uniform(300, 9), &Window::unit_square()).unwrap();
        let cfg = SirGraphConfig::new(0.2);
        let plain = sir_graph::build(&pts, &model, &cfg).unwrap();
        let colored = sir_graph::build_colored(&pts, &vec![0; pts.len()], &model, &cfg).unwrap();
        assert_eq!(plain.out_adjacency, colored.out_adjacency);
    }

    #[test]
    fn two_nodes_connected() {
        let model = AttenuationModel::power_law(4.0).unwrap();
        for cfg in [
            ColoringConfig::upper(2, 0.1, 0.5, 0.05),
            ColoringConfig::lower(2, GrowthFn::Constant, 1.0, 1.0),
        ] {
            let r = connectivity_trial(&cfg, &model, 5.0, 3).unwrap();
            assert!(r.connected, "{cfg:?}");
            assert_eq!(r.isolated_nodes, 0);
        }
    }

    #[test]
    fn zeta_values() {
        let pi = std::f64::consts::PI;
        assert!((zeta(2.0) - pi * pi / 6.0).abs() < 1e-14);
        assert!((zeta(4.0) - pi.powi(4) / 90.0).abs() < 1e-14);
        assert!((zeta(1.5) - 2.612_375_348_685_488).abs() < 1e-12);
    }

    #[test]
    fn ring_bound_values() {
        let r = interference_ring_bound(4.0, 1.0, 2.0, 2000.0).unwrap();
        assert!((r.c5 - 1.644_934_066_848_226_4).abs() < 1e-14);
        assert_eq!(r.beta, 0.5);
        let area = 4.0 * 2000f64.ln() / 2000.0;
        assert!((r.interference - 8.0 * r.c5 / (1.0 * area)).abs() < 1e-9 * r.interference);
        // Smallest signal over the interference bound.
        let signal = (2.0 * 2000f64.ln() / 2000.0).powf(-1.0);
        assert!((r.sir_lower_bound - signal / r.interference).abs() < 1e-12 * r.sir_lower_bound);
        assert!(matches!(interference_ring_bound(1.0, 1.0, 2.0, 10.0), Err(Error::Config(_))));
    }

    #[test]
    fn occupancy_helpers() {
        let pts = vec![Point2::new(0.1, 0.1), Point2::new(0.15, 0.12), Point2::new(0.9, 0.9), Point2::new(0.99, 0.5)];
        assert_eq!(full_cell_occupancies(&pts, 0.3), vec![2, 0, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(neighborhood_occupancies(&pts, 0.2), vec![2, 2, 1]);
    }

    #[test]
    fn interference_measure_matches_definition() {
        let model = AttenuationModel::power_law(4.0).unwrap();
        let c = ColoringConfig::upper(400, 2.0, 0.5, 1.0);
        let pts = sample(&PointProcessConfig::uniform(400, 2), &Window::unit_square()).unwrap();
        let a = assign_colors(&pts, &c).unwrap();
        let cfg = SirGraphConfig::new(1.0);
        let side = c.neighborhood_side();
        let got = max_same_color_interference(&pts, &a.color_of, &model, &cfg, side);
        let mut want: f64 = 0.0;
        for t in 0..pts.len() {
            for u in 0..pts.len() {
                if u != t && (pts[u].x - pts[t].x).abs() <= side / 2.0 && (pts[u].y - pts[t].y).abs() <= side / 2.0 {
                    want = want.max(sir_graph::interference_sum(&pts, &model, &cfg, Some(&a.color_of), t, u).0);
                }
            }
        }
        assert_eq!(got, want);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn ring_sir_increasing_in_c(c in 1.5f64..20.0, dc in 0.1f64..5.0, alpha in 2.0f64..6.0) {
            let a = interference_ring_bound(c, 1.0, alpha, 1000.0).unwrap();
            let b = interference_ring_bound(c + dc, 1.0, alpha, 1000.0).unwrap();
            prop_assert!(b.sir_lower_bound > a.sir_lower_bound);
            prop_assert!(b.sir_lower_bound_stated > a.sir_lower_bound_stated);
        }

        #[test]
        fn splitting_a_color_keeps_edges(seed in 0u64..1000, split in 0u32..4) {
            let model = AttenuationModel::power_law(3.0).unwrap();
            let pts = sample(&PointProcessConfig::uniform(80, seed), &Window::unit_square()).unwrap();
            let coarse: Vec<u32> = (0..pts.len() as u32).map(|k| k % 4).collect();
            let fine: Vec<u32> = coarse.iter().enumerate()
                .map(|(k, &c)| if c == split && k % 3 == 0 { 4 } else { c })
                .collect();
            let cfg = SirGraphConfig::new(0.5);
            let g1 = sir_graph::build_colored(&pts, &coarse, &model, &cfg).unwrap();
            let g2 = sir_graph::build_colored(&pts, &fine, &model, &cfg).unwrap();
            for (i, j) in g1.edges() {
                prop_assert!(g2.has_edge(i, j), "{} -> {} lost", i, j);
            }
        }
    }
}
