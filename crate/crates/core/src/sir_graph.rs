//! Directed SIR graphs: construction, reachability and strong connectivity.
//!
//! Transmitter `i` reaches receiver `j` when
//! `g(d_ij) / sum_{k != i} g(d_kj) >= T`. Whether the receiver's own term
//! `k = j` belongs to the sum is a configuration flag; with it included the
//! singular power law gives every link an SIR of exactly zero.
//!
//! [`build`] never changes an edge decision relative to the definitional
//! sum in [`interference_sum`]. Per-receiver totals give a fast estimate with
//! a rigorous rounding margin, and any pair that falls inside the margin is
//! recomputed from the definition.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attenuation::AttenuationModel;
use crate::error::{Error, Result};
use crate::geometry::{Metric, Point2};
use crate::grid::{all_nearest_neighbors, mean_spacing, SpatialGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirGraphConfig {
    pub threshold: f64,
    #[serde(default = "default_true")]
    pub exclude_receiver: bool,
    /// Distance used for every pair; not part of the serialized config.
    #[serde(skip)]
    pub metric: Metric,
}

fn default_true() -> bool {
    true
}

impl SirGraphConfig {
    pub fn new(threshold: f64) -> Self {
        Self {
            threshold,
            exclude_receiver: true,
            metric: Metric::Euclidean,
        }
    }

    pub fn with_exclude_receiver(mut self, exclude: bool) -> Self {
        self.exclude_receiver = exclude;
        self
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold.is_finite() && self.threshold >= 0.0) {
            return Err(Error::config(format!(
                "SIR threshold must be finite and non-negative, got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SirGraph {
    pub points: Vec<Point2>,
    /// `out_adjacency[i]` lists receivers of `i` in ascending order.
    pub out_adjacency: Vec<Vec<usize>>,
    /// SIR of each edge, parallel to `out_adjacency`.
    pub out_sir: Vec<Vec<f64>>,
    /// `sum_{k != j} g(d_kj)` over all transmitters, summed in index order.
    pub total_power_at: Vec<f64>,
    pub config: SirGraphConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ComponentReport {
    pub root: usize,
    pub out_component: Vec<usize>,
    pub in_component: Vec<usize>,
    pub bidirectional_component: Vec<usize>,
    pub either_component: Vec<usize>,
}

/// Definitional interference at `j` for transmitter `i`: the sum over
/// `k != i` (and `k != j` when excluding the receiver) in ascending `k`,
/// restricted to transmitters sharing `i`'s color when `colors` is given.
///
/// Returns the sum and the number of terms in it.
pub fn interference_sum(
    points: &[Point2],
    model: &AttenuationModel,
    config: &SirGraphConfig,
    colors: Option<&[u32]>,
    i: usize,
    j: usize,
) -> (f64, usize) {
    let mut sum = 0.0;
    let mut count = 0;
    let pj = points[j];
    for (k, pk) in points.iter().enumerate() {
        if k == i || (k == j && config.exclude_receiver) {
            continue;
        }
        if let Some(c) = colors {
            if c[k] != c[i] {
                continue;
            }
        }
        sum += model.gain(config.metric.distance(*pk, pj));
        count += 1;
    }
    (sum, count)
}

/// SIR of the link `i -> j` evaluated straight from the definition.
pub fn sir(points: &[Point2], model: &AttenuationModel, i: usize, j: usize, config: &SirGraphConfig) -> Result<f64> {
    check_pair(points, i, j)?;
    let d = config.metric.distance(points[i], points[j]);
    if d == 0.0 && !model.is_bounded() {
        return Err(Error::domain(format!("nodes {i} and {j} coincide under a singular path-loss model")));
    }
    Ok(sir_definitional(points, model, config, None, i, j))
}

/// Colored variant of [`sir`]: only transmitters of `i`'s color interfere.
pub fn sir_colored(
    points: &[Point2],
    colors: &[u32],
    model: &AttenuationModel,
    i: usize,
    j: usize,
    config: &SirGraphConfig,
) -> Result<f64> {
    check_pair(points, i, j)?;
    if colors.len() != points.len() {
        return Err(Error::usage("one color per node is required"));
    }
    let d = config.metric.distance(points[i], points[j]);
    if d == 0.0 && !model.is_bounded() {
        return Err(Error::domain(format!("nodes {i} and {j} coincide under a singular path-loss model")));
    }
    Ok(sir_definitional(points, model, config, Some(colors), i, j))
}

fn check_pair(points: &[Point2], i: usize, j: usize) -> Result<()> {
    if i == j {
        return Err(Error::usage("SIR needs two distinct nodes"));
    }
    if i >= points.len() || j >= points.len() {
        return Err(Error::usage(format!("node index out of range for {} points", points.len())));
    }
    Ok(())
}

pub(crate) fn sir_definitional(
    points: &[Point2],
    model: &AttenuationModel,
    config: &SirGraphConfig,
    colors: Option<&[u32]>,
    i: usize,
    j: usize,
) -> f64 {
    let d = config.metric.distance(points[i], points[j]);
    let signal = model.gain(d);
    let (sum, count) = interference_sum(points, model, config, colors, i, j);
    if count == 0 || sum == 0.0 {
        return f64::INFINITY;
    }
    let self_singular = !config.exclude_receiver
        && model.value_at_zero().is_infinite()
        && colors.is_none_or(|c| c[j] == c[i]);
    if self_singular {
        return if signal.is_finite() { 0.0 } else { f64::NAN };
    }
    if signal.is_finite() && sum.is_finite() && sum < 1e300 && signal < 1e300 {
        return signal / sum;
    }
    // Magnitudes near overflow: compare in the log domain.
    let log_signal = model.log_gain(d);
    let log_sum = log_interference(points, model, config, colors, i, j);
    (log_signal - log_sum).exp()
}

fn log_interference(
    points: &[Point2],
    model: &AttenuationModel,
    config: &SirGraphConfig,
    colors: Option<&[u32]>,
    i: usize,
    j: usize,
) -> f64 {
    let terms: Vec<f64> = points
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != i && !(k == j && config.exclude_receiver))
        .filter(|&(k, _)| colors.is_none_or(|c| c[k] == c[i]))
        .map(|(_, pk)| model.log_gain(config.metric.distance(*pk, points[j])))
        .collect();
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Builds `SG(T)`.
pub fn build(points: &[Point2], model: &AttenuationModel, config: &SirGraphConfig) -> Result<SirGraph> {
    build_generic(points, model, config, None)
}

/// Builds the colored graph in which only same-colored transmitters interfere.
///
/// With a single color this is exactly [`build`].
pub fn build_colored(
    points: &[Point2],
    colors: &[u32],
    model: &AttenuationModel,
    config: &SirGraphConfig,
) -> Result<SirGraph> {
    if colors.len() != points.len() {
        return Err(Error::usage(format!(
            "{} colors given for {} points",
            colors.len(),
            points.len()
        )));
    }
    build_generic(points, model, config, Some(colors))
}

fn check_inputs(points: &[Point2], model: &AttenuationModel, config: &SirGraphConfig) -> Result<()> {
    config.validate()?;
    model.validate()?;
    if let Some(k) = points.iter().position(|p| !p.is_finite()) {
        return Err(Error::config(format!("point {k} has a non-finite coordinate")));
    }
    if !model.is_bounded() && points.len() > 1 {
        let grid = SpatialGrid::new(points, config.metric, mean_spacing(points, config.metric));
        for (i, p) in points.iter().enumerate() {
            let mut clash = None;
            grid.for_each_candidate(*p, 0.0, |k| {
                if k != i && config.metric.distance(*p, points[k]) == 0.0 {
                    clash = Some(k);
                }
            });
            if let Some(k) = clash {
                return Err(Error::domain(format!(
                    "nodes {i} and {k} coincide under a singular path-loss model"
                )));
            }
        }
    }
    Ok(())
}

/// Largest distance at which `g` still reaches `y`; infinite for `y <= 0`
/// and negative when even `g(0)` falls short.
fn reach_of_gain(model: &AttenuationModel, y: f64) -> f64 {
    if !(y > 0.0) {
        return f64::INFINITY;
    }
    if y > model.value_at_zero() {
        return -1.0;
    }
    model.inverse(y).unwrap_or(f64::INFINITY)
}

fn build_generic(
    points: &[Point2],
    model: &AttenuationModel,
    config: &SirGraphConfig,
    colors: Option<&[u32]>,
) -> Result<SirGraph> {
    check_inputs(points, model, config)?;
    let n = points.len();
    let metric = config.metric;

    let classes: Vec<Vec<usize>> = match colors {
        None => vec![(0..n).collect()],
        Some(c) => {
            let mut by_color: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
            for (k, &col) in c.iter().enumerate() {
                by_color.entry(col).or_default().push(k);
            }
            by_color.into_values().collect()
        }
    };
    let mut class_of = vec![0usize; n];
    for (ci, members) in classes.iter().enumerate() {
        for &k in members {
            class_of[k] = ci;
        }
    }

    // One pass per receiver yields the total and every per-class sum, each
    // accumulated in ascending transmitter order.
    let per_receiver: Vec<(f64, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let pj = points[j];
            let mut total = 0.0;
            let mut by_class = vec![0.0; if classes.len() > 1 { classes.len() } else { 0 }];
            for (k, pk) in points.iter().enumerate() {
                if k != j {
                    let g = model.gain(metric.distance(*pk, pj));
                    total += g;
                    if let Some(slot) = by_class.get_mut(class_of[k]) {
                        *slot += g;
                    }
                }
            }
            (total, by_class)
        })
        .collect();
    let totals: Vec<f64> = per_receiver.iter().map(|r| r.0).collect();

    let g0 = model.value_at_zero();
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (ci, members) in classes.iter().enumerate() {
        let class_sums: Vec<f64> = if classes.len() == 1 {
            totals.clone()
        } else {
            per_receiver.iter().map(|r| r.1[ci]).collect()
        };
        let class_points: Vec<Point2> = members.iter().map(|&k| points[k]).collect();
        let grid = SpatialGrid::new(&class_points, metric, mean_spacing(&class_points, metric));
        let ctx = DecisionContext {
            points,
            model,
            config,
            colors,
            members,
            g0,
        };
        let found: Vec<Vec<(usize, f64)>> = (0..n)
            .into_par_iter()
            .map(|j| ctx.incoming_edges(j, class_sums[j], &grid))
            .collect();
        for (j, mut edges) in found.into_iter().enumerate() {
            incoming[j].append(&mut edges);
        }
    }

    let mut out_adjacency = vec![Vec::new(); n];
    let mut out_sir = vec![Vec::new(); n];
    for (j, edges) in incoming.iter().enumerate() {
        for &(i, s) in edges {
            out_adjacency[i].push(j);
            out_sir[i].push(s);
        }
    }
    Ok(SirGraph {
        points: points.to_vec(),
        out_adjacency,
        out_sir,
        total_power_at: totals,
        config: *config,
    })
}

struct DecisionContext<'a> {
    points: &'a [Point2],
    model: &'a AttenuationModel,
    config: &'a SirGraphConfig,
    colors: Option<&'a [u32]>,
    members: &'a [usize],
    g0: f64,
}

impl DecisionContext<'_> {
    /// In-edges of `j` from transmitters in this color class.
    fn incoming_edges(&self, j: usize, class_sum: f64, grid: &SpatialGrid) -> Vec<(usize, f64)> {
        let t = self.config.threshold;
        let pj = self.points[j];
        let in_class = self.members.binary_search(&j).is_ok();
        let others = self.members.len() - usize::from(in_class);
        // Any edge needs g_ij >= T * (S - g_ij), so g_ij >= T S / (1 + T).
        let need = t * class_sum / (1.0 + t) * (1.0 - 1e-7);
        let radius = if class_sum.is_finite() {
            reach_of_gain(self.model, need)
        } else {
            f64::INFINITY
        };
        let mut edges = Vec::new();
        if radius < 0.0 {
            return edges;
        }
        let radius = radius * (1.0 + 1e-9) + 1e-300;
        let self_term = if self.config.exclude_receiver || !in_class { 0.0 } else { self.g0 };
        grid.for_each_candidate(pj, radius, |idx| {
            let i = self.members[idx];
            if i == j {
                return;
            }
            if let Some(s) = self.decide(i, j, class_sum, self_term, others) {
                edges.push((i, s));
            }
        });
        edges.sort_by_key(|e| e.0);
        edges
    }

    /// SIR of `i -> j` when it is an edge, decided identically to the definition.
    fn decide(&self, i: usize, j: usize, class_sum: f64, self_term: f64, others: usize) -> Option<f64> {
        let t = self.config.threshold;
        let signal = self.model.gain(self.config.metric.distance(self.points[i], self.points[j]));
        let interferers = others - 1 + usize::from(self_term > 0.0);
        if interferers == 0 {
            return Some(f64::INFINITY);
        }
        if self_term.is_infinite() {
            // The receiver's own singular term swamps every link.
            return (t == 0.0 && signal.is_finite()).then_some(0.0);
        }
        let fast = (class_sum - signal) + self_term;
        let scale = class_sum + self_term;
        if signal.is_finite() && scale.is_finite() && scale < 1e300 && signal < 1e300 {
            let eps = f64::EPSILON;
            let margin = 4.0 * (self.members.len() as f64 + 4.0) * eps * scale;
            let upper = fast + margin;
            let lower = fast - margin;
            if upper > 0.0 && signal / upper * (1.0 - 4.0 * eps) >= t {
                let s = if fast > 0.0 { signal / fast } else { signal / upper };
                return Some(s);
            }
            if lower > 0.0 && signal / lower * (1.0 + 4.0 * eps) < t {
                return None;
            }
        }
        let s = sir_definitional(self.points, self.model, self.config, self.colors, i, j);
        (s >= t).then_some(s)
    }
}

impl SirGraph {
    pub fn node_count(&self) -> usize {
        self.points.len()
    }

    pub fn edge_count(&self) -> usize {
        self.out_adjacency.iter().map(Vec::len).sum()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.out_adjacency
            .get(i)
            .is_some_and(|adj| adj.binary_search(&j).is_ok())
    }

    /// All edges `(i, j)` in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out_adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, adj)| adj.iter().map(move |&j| (i, j)))
    }

    pub fn in_adjacency(&self) -> Vec<Vec<usize>> {
        let mut rev = vec![Vec::new(); self.node_count()];
        for (i, j) in self.edges() {
            rev[j].push(i);
        }
        rev
    }

    /// Nodes with no outgoing or no incoming edge.
    pub fn isolated_count(&self) -> usize {
        let mut indeg = vec![0usize; self.node_count()];
        for (_, j) in self.edges() {
            indeg[j] += 1;
        }
        (0..self.node_count())
            .filter(|&v| self.out_adjacency[v].is_empty() || indeg[v] == 0)
            .count()
    }

    /// Edge list, one `i j sir` line per edge with 17 significant digits.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, (adj, sirs)) in self.out_adjacency.iter().zip(&self.out_sir).enumerate() {
            for (&j, &s) in adj.iter().zip(sirs) {
                writeln!(out, "{i} {j} {s:.16e}")?;
            }
        }
        Ok(())
    }
}

fn reachable(adj: &[Vec<usize>], root: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen
}

/// Out-, in-, bidirectional and either-directional components of `root`.
///
/// The root itself is not listed in any set.
pub fn components(graph: &SirGraph, root: usize) -> Result<ComponentReport> {
    let n = graph.node_count();
    if root >= n {
        return Err(Error::usage(format!("root {root} out of range for {n} nodes")));
    }
    let fwd = reachable(&graph.out_adjacency, root);
    let back = reachable(&graph.in_adjacency(), root);
    let pick = |f: &dyn Fn(usize) -> bool| (0..n).filter(|&v| v != root && f(v)).collect::<Vec<_>>();
    Ok(ComponentReport {
        root,
        out_component: pick(&|v| fwd[v]),
        in_component: pick(&|v| back[v]),
        bidirectional_component: pick(&|v| fwd[v] && back[v]),
        either_component: pick(&|v| fwd[v] || back[v]),
    })
}

/// Strongly connected components (iterative Tarjan), as a component id per node.
pub fn strongly_connected_components(adj: &[Vec<usize>]) -> (usize, Vec<usize>) {
    let n = adj.len();
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![UNSEEN; n];
    let mut stack = Vec::new();
    let mut call: Vec<(usize, usize)> = Vec::new();
    let mut next = 0;
    let mut ncomp = 0;
    for start in 0..n {
        if index[start] != UNSEEN {
            continue;
        }
        call.push((start, 0));
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos == 0 {
                index[v] = next;
                low[v] = next;
                next += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if let Some(&w) = adj[v].get(*pos) {
                *pos += 1;
                if index[w] == UNSEEN {
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w] = false;
                    comp[w] = ncomp;
                    if w == v {
                        break;
                    }
                }
                ncomp += 1;
            }
        }
    }
    (ncomp, comp)
}

pub fn is_strongly_connected(graph: &SirGraph) -> Result<bool> {
    if graph.node_count() == 0 {
        return Err(Error::usage("strong connectivity of an empty graph is undefined"));
    }
    Ok(strongly_connected_components(&graph.out_adjacency).0 == 1)
}

/// Nodes reachable from `root` without materializing the graph, for `T > 1`.
///
/// Above unit threshold a receiver can only decode its strictly nearest
/// neighbour, so each node has at most one candidate transmitter and only
/// visited links need an exact interference sum. Returns the reached nodes
/// (root excluded) in ascending order.
pub fn out_reach(
    points: &[Point2],
    model: &AttenuationModel,
    config: &SirGraphConfig,
    root: usize,
) -> Result<Vec<usize>> {
    config.validate()?;
    if config.threshold <= 1.0 {
        return Err(Error::usage("nearest-neighbour reachability needs a threshold above 1"));
    }
    if root >= points.len() {
        return Err(Error::usage(format!("root {root} out of range for {} points", points.len())));
    }
    let nn = all_nearest_neighbors(points, config.metric);
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); points.len()];
    for (j, best) in nn.iter().enumerate() {
        if let Some((i, d)) = *best {
            if d == 0.0 && !model.is_bounded() {
                return Err(Error::domain(format!(
                    "nodes {i} and {j} coincide under a singular path-loss model"
                )));
            }
            children[i].push(j);
        }
    }
    let mut seen = vec![false; points.len()];
    seen[root] = true;
    let mut queue = VecDeque::from([root]);
    while let Some(i) = queue.pop_front() {
        for &j in &children[i] {
            if !seen[j] && sir_definitional(points, model, config, None, i, j) >= config.threshold {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    Ok((0..points.len()).filter(|&v| v != root && seen[v]).collect())
}
