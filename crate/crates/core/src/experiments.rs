//! Seeded Monte Carlo sweeps over parameter grids.
//!
//! A sweep names an experiment, a grid of numeric axes and fixed parameters.
//! Every (grid point, trial) pair gets its own seed, so results do not depend
//! on the number of workers or on scheduling.
//!
//! Config files are TOML:
//!
//! ```toml
//! experiment = "square"
//! trials = 100
//! seed = 7
//! workers = "auto"
//!
//! [grid]
//! lambda = { min = 20.0, max = 200.0, steps = 10 }
//! threshold = [0.001, 0.01]
//!
//! [params]
//! m_cap = 1000.0
//! model.alpha = 4.0
//! model.r0 = 0.5
//! ```

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attenuation::AttenuationModel;
use crate::bounds::{self, AreaConvention, BoundsConfig};
use crate::coloring::{self, ColoringConfig, GrowthFn};
use crate::error::{Error, Result};
use crate::geometry::{derive_trial_seed, rng_from_seed, sample_with, Boundary, Point2, PointProcess, Window};
use crate::hex::{self, HexConfig};
use crate::sir_graph::{self, SirGraphConfig};
use crate::square::{self, SquareConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    SirGraph,
    Hex,
    Square,
    Bounds,
    Color,
}

impl Experiment {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "sir_graph" => Experiment::SirGraph,
            "hex" => Experiment::Hex,
            "square" => Experiment::Square,
            "bounds" => Experiment::Bounds,
            "color" => Experiment::Color,
            other => {
                return Err(Error::config(format!(
                    "experiment: unknown value {other:?} (expected sir_graph, hex, square, bounds or color)"
                )))
            }
        })
    }

    /// Parameter names accepted in `[params]` and `[grid]`.
    fn known_params(&self) -> &'static [&'static str] {
        const MODEL: [&str; 3] = ["model.kind", "model.alpha", "model.r0"];
        const WINDOW: [&str; 3] = ["window.width", "window.height", "window.boundary"];
        match self {
            Experiment::SirGraph => &[
                "lambda",
                "threshold",
                "exclude_receiver",
                "boundary_margin",
                MODEL[0],
                MODEL[1],
                MODEL[2],
                WINDOW[0],
                WINDOW[1],
                WINDOW[2],
            ],
            Experiment::Hex => &["lambda", "delta", "rho", "eta", "threshold", "model.alpha", "cols", "rows"],
            Experiment::Square => &[
                "lambda",
                "m_cap",
                "threshold",
                "exclude_receiver",
                "cells_x",
                "cells_y",
                MODEL[0],
                MODEL[1],
                MODEL[2],
            ],
            Experiment::Bounds => &[
                "lambda",
                "m_cap",
                "threshold",
                "k",
                "area_convention",
                "q",
                MODEL[0],
                MODEL[1],
                MODEL[2],
            ],
            Experiment::Color => &[
                "n",
                "c",
                "delta_slack",
                "m",
                "mode",
                "f",
                "omega",
                "threshold",
                MODEL[0],
                MODEL[1],
                MODEL[2],
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    Range { min: f64, max: f64, steps: usize },
    List(Vec<f64>),
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Axis::List(v) => {
                let mut v = v.clone();
                v.sort_by(f64::total_cmp);
                v.dedup();
                v
            }
            Axis::Range { min, max, steps } => match *steps {
                0 => Vec::new(),
                1 => vec![*min],
                s => (0..s).map(|i| min + (max - min) * i as f64 / (s - 1) as f64).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Num(f64),
    Str(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Workers {
    Auto,
    #[serde(untagged)]
    Count(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub experiment: Experiment,
    /// Axes in canonical (name) order.
    pub grid: BTreeMap<String, Axis>,
    #[serde(default)]
    pub params: BTreeMap<String, ParamValue>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: Workers,
}

fn default_workers() -> Workers {
    Workers::Auto
}

impl SweepSpec {
    /// Parses a TOML config, applying `overrides` (`dotted.key=value`) on top.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::config(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table)
    }

    fn from_table(mut table: toml::Table) -> Result<Self> {
        let experiment = match table.remove("experiment") {
            Some(toml::Value::String(s)) => Experiment::parse(&s)?,
            Some(v) => return Err(Error::config(format!("experiment: expected a string, got {v}"))),
            None => return Err(Error::config("experiment: missing")),
        };
        let trials = match table.remove("trials") {
            Some(toml::Value::Integer(t)) if t >= 1 => t as usize,
            Some(v) => return Err(Error::config(format!("trials: expected an integer >= 1, got {v}"))),
            None => 1,
        };
        let seed = match table.remove("seed") {
            Some(toml::Value::Integer(s)) if s >= 0 => s as u64,
            Some(v) => return Err(Error::config(format!("seed: expected a non-negative integer, got {v}"))),
            None => 0,
        };
        let workers = match table.remove("workers") {
            None => Workers::Auto,
            Some(toml::Value::String(s)) if s == "auto" => Workers::Auto,
            Some(toml::Value::Integer(n)) if n >= 1 => Workers::Count(n as usize),
            Some(v) => return Err(Error::config(format!("workers: expected \"auto\" or an integer >= 1, got {v}"))),
        };
        let known = experiment.known_params();
        let mut grid = BTreeMap::new();
        if let Some(g) = table.remove("grid") {
            let toml::Value::Table(g) = g else {
                return Err(Error::config("grid: expected a table"));
            };
            for (key, v) in flatten(&g, "")? {
                if !known.contains(&key.as_str()) {
                    return Err(Error::config(format!("grid.{key}: unknown parameter for {experiment:?}")));
                }
                grid.insert(key.clone(), parse_axis(&key, v)?);
            }
        }
        let mut params = BTreeMap::new();
        if let Some(p) = table.remove("params") {
            let toml::Value::Table(p) = p else {
                return Err(Error::config("params: expected a table"));
            };
            for (key, v) in flatten(&p, "")? {
                if !known.contains(&key.as_str()) {
                    return Err(Error::config(format!("params.{key}: unknown parameter for {experiment:?}")));
                }
                let value = match v {
                    toml::Value::Boolean(b) => ParamValue::Bool(b),
                    toml::Value::Integer(i) => ParamValue::Num(i as f64),
                    toml::Value::Float(f) => ParamValue::Num(f),
                    toml::Value::String(s) => ParamValue::Str(s),
                    other => return Err(Error::config(format!("params.{key}: unsupported value {other}"))),
                };
                params.insert(key, value);
            }
        }
        if let Some(key) = table.keys().next() {
            return Err(Error::config(format!("{key}: unknown key")));
        }
        let spec = SweepSpec {
            experiment,
            grid,
            params,
            trials,
            seed,
            workers,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials: must be at least 1"));
        }
        if self.grid.is_empty() {
            return Err(Error::config("grid: at least one axis is required"));
        }
        for (k, axis) in &self.grid {
            let v = axis.values();
            if v.is_empty() {
                return Err(Error::config(format!("grid.{k}: axis is empty")));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::config(format!("grid.{k}: values must be finite")));
            }
        }
        if let Workers::Count(0) = self.workers {
            return Err(Error::config("workers: must be at least 1"));
        }
        Ok(())
    }

    /// Grid points in canonical order: lexicographic over axes sorted by name.
    pub fn grid_points(&self) -> Vec<Vec<f64>> {
        let mut points = vec![Vec::new()];
        for axis in self.grid.values() {
            let vals = axis.values();
            points = points
                .into_iter()
                .flat_map(|p| {
                    vals.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        points
    }
}

fn flatten(table: &toml::Table, prefix: &str) -> Result<Vec<(String, toml::Value)>> {
    let mut out = Vec::new();
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            // Inline tables with min/max/steps are axes, not nesting.
            toml::Value::Table(t) if !t.contains_key("steps") => out.extend(flatten(t, &key)?),
            _ => out.push((key, v.clone())),
        }
    }
    Ok(out)
}

fn parse_axis(key: &str, v: toml::Value) -> Result<Axis> {
    let num = |x: &toml::Value| match x {
        toml::Value::Integer(i) => Some(*i as f64),
        toml::Value::Float(f) => Some(*f),
        _ => None,
    };
    match &v {
        toml::Value::Array(a) => a
            .iter()
            .map(|x| num(x).ok_or_else(|| Error::config(format!("grid.{key}: values must be numbers"))))
            .collect::<Result<Vec<_>>>()
            .map(Axis::List),
        toml::Value::Table(t) => {
            let get = |name: &str| {
                t.get(name)
                    .and_then(num)
                    .ok_or_else(|| Error::config(format!("grid.{key}.{name}: missing or not a number")))
            };
            let steps = match t.get("steps") {
                Some(toml::Value::Integer(s)) if *s >= 0 => *s as usize,
                _ => return Err(Error::config(format!("grid.{key}.steps: expected a non-negative integer"))),
            };
            if let Some(extra) = t.keys().find(|k| !["min", "max", "steps"].contains(&k.as_str())) {
                return Err(Error::config(format!("grid.{key}.{extra}: unknown key")));
            }
            Ok(Axis::Range {
                min: get("min")?,
                max: get("max")?,
                steps,
            })
        }
        _ => num(&v)
            .map(|x| Axis::List(vec![x]))
            .ok_or_else(|| Error::config(format!("grid.{key}: expected a list, a number or {{min, max, steps}}"))),
    }
}

/// Sets `dotted.key=value` in `table`. Values are parsed as TOML, falling
/// back to a plain string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override {assignment:?}: expected key=value")))?;
    let (key, raw) = (key.trim(), raw.trim());
    if key.is_empty() {
        return Err(Error::config(format!("override {assignment:?}: empty key")));
    }
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or(toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(Error::config(format!("override {key}: {part} is not a table"))),
        };
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Parameter lookup at one grid point: grid values, then fixed params, then defaults.
struct Params<'a> {
    grid: BTreeMap<&'a str, f64>,
    fixed: &'a BTreeMap<String, ParamValue>,
}

impl Params<'_> {
    fn num(&self, key: &str, default: f64) -> Result<f64> {
        if let Some(v) = self.grid.get(key) {
            return Ok(*v);
        }
        match self.fixed.get(key) {
            None => Ok(default),
            Some(ParamValue::Num(x)) => Ok(*x),
            Some(v) => Err(Error::config(format!("params.{key}: expected a number, got {v:?}"))),
        }
    }

    fn opt_num(&self, key: &str) -> Result<Option<f64>> {
        if self.grid.contains_key(key) || self.fixed.contains_key(key) {
            self.num(key, 0.0).map(Some)
        } else {
            Ok(None)
        }
    }

    fn count(&self, key: &str, default: usize) -> Result<usize> {
        let x = self.num(key, default as f64)?;
        if x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64 {
            Ok(x as usize)
        } else {
            Err(Error::config(format!("{key}: expected a non-negative integer, got {x}")))
        }
    }

    fn text(&self, key: &str, default: &str) -> Result<String> {
        match self.fixed.get(key) {
            None => Ok(default.to_string()),
            Some(ParamValue::Str(s)) => Ok(s.clone()),
            Some(v) => Err(Error::config(format!("params.{key}: expected a string, got {v:?}"))),
        }
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.fixed.get(key) {
            None => Ok(default),
            Some(ParamValue::Bool(b)) => Ok(*b),
            Some(v) => Err(Error::config(format!("params.{key}: expected a boolean, got {v:?}"))),
        }
    }

    fn model(&self, default_bounded: bool) -> Result<AttenuationModel> {
        let alpha = self.num("model.alpha", 4.0)?;
        let r0 = self.opt_num("model.r0")?;
        let default_kind = if r0.is_some() || default_bounded { "bounded_power_law" } else { "power_law" };
        match self.text("model.kind", default_kind)?.as_str() {
            "power_law" => AttenuationModel::power_law(alpha),
            "bounded_power_law" => AttenuationModel::bounded(alpha, r0.unwrap_or(0.5)),
            other => Err(Error::config(format!("model.kind: unknown value {other:?}"))),
        }
    }

    fn window(&self) -> Result<Window> {
        let boundary = match self.text("window.boundary", "plain")?.as_str() {
            "plain" => Boundary::Plain,
            "torus" => Boundary::Torus,
            other => return Err(Error::config(format!("window.boundary: unknown value {other:?}"))),
        };
        Window::new(self.num("window.width", 1.0)?, self.num("window.height", 1.0)?, boundary)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StatKind {
    Bernoulli,
    Mean,
}

/// A fully validated trial recipe for one grid point.
#[derive(Debug, Clone)]
enum Plan {
    SirGraph {
        lambda: f64,
        window: Window,
        model: AttenuationModel,
        config: SirGraphConfig,
        margin: f64,
    },
    Hex {
        lambda: f64,
        config: HexConfig,
        window: Window,
    },
    Square {
        lambda: f64,
        config: SquareConfig,
        window: Window,
    },
    Bounds(BoundsConfig),
    Series(f64),
    Color {
        config: ColoringConfig,
        model: AttenuationModel,
        threshold: f64,
    },
}

impl Plan {
    fn new(experiment: Experiment, p: &Params) -> Result<Self> {
        let lambda = p.num("lambda", 100.0)?;
        Ok(match experiment {
            Experiment::SirGraph => {
                let window = p.window()?;
                let config = SirGraphConfig::new(p.num("threshold", 1.0)?)
                    .with_exclude_receiver(p.flag("exclude_receiver", true)?)
                    .with_metric(window.metric());
                config.validate()?;
                let model = p.model(false)?;
                Plan::SirGraph {
                    lambda,
                    window,
                    model,
                    config,
                    margin: p.num("boundary_margin", 0.05)?,
                }
            }
            Experiment::Hex => {
                let config = HexConfig {
                    delta: p.num("delta", 1.0)?,
                    rho: p.num("rho", 0.95)?,
                    eta: p.num("eta", 1.0)?,
                    threshold: p.num("threshold", 16.0)?,
                    alpha: p.num("model.alpha", 4.0)?,
                };
                let check = hex::validate_config(&config)?;
                if !check.valid() {
                    return Err(Error::config("hex configuration fails the deterministic conditions"));
                }
                let window = hex::window_for_faces(p.count("cols", 20)?, p.count("rows", 20)?, config.delta)?;
                Plan::Hex { lambda, config, window }
            }
            Experiment::Square => {
                let mut config = SquareConfig::new(p.num("m_cap", 1000.0)?, p.num("threshold", 1e-3)?, p.model(true)?);
                config.exclude_receiver = p.flag("exclude_receiver", true)?;
                let window = square::lattice_window(&config, p.count("cells_x", 32)?, p.count("cells_y", 32)?, Boundary::Plain)?;
                Plan::Square { lambda, config, window }
            }
            Experiment::Bounds => {
                if let Some(q) = p.opt_num("q")? {
                    Plan::Series(q)
                } else {
                    let area_convention = match p.text("area_convention", "area")?.as_str() {
                        "area" => AreaConvention::Area,
                        "side" => AreaConvention::Side,
                        other => return Err(Error::config(format!("area_convention: unknown value {other:?}"))),
                    };
                    let config = BoundsConfig {
                        lambda,
                        m_cap: p.num("m_cap", 1000.0)?,
                        threshold: p.num("threshold", 1e-3)?,
                        k: p.num("k", 1.0)?,
                        model: p.model(true)?,
                        area_convention,
                    };
                    bounds::evaluate(&config)?;
                    Plan::Bounds(config)
                }
            }
            Experiment::Color => {
                let n = p.count("n", 2000)?;
                let threshold = p.num("threshold", 1.0)?;
                let config = match p.text("mode", "upper_bound")?.as_str() {
                    "upper_bound" => ColoringConfig::upper(n, p.num("c", 4.0)?, p.num("delta_slack", 1.0)?, p.num("m", 1.0)?),
                    "lower_bound" => {
                        let f = match p.text("f", "constant")?.as_str() {
                            "sqrt_log" => GrowthFn::SqrtLog,
                            "log_log" => GrowthFn::LogLog,
                            "constant" => GrowthFn::Constant,
                            other => return Err(Error::config(format!("f: unknown value {other:?}"))),
                        };
                        ColoringConfig::lower(n, f, p.num("omega", 1.0)?, threshold)
                    }
                    other => return Err(Error::config(format!("mode: unknown value {other:?}"))),
                };
                config.validate()?;
                Plan::Color {
                    config,
                    model: p.model(false)?,
                    threshold,
                }
            }
        })
    }

    fn stats(&self) -> &'static [(&'static str, StatKind)] {
        use StatKind::*;
        match self {
            Plan::SirGraph { .. } => &[("boundary_reached", Bernoulli), ("mean_out_degree", Mean), ("isolated_fraction", Mean)],
            Plan::Hex { .. } => &[("origin_enclosed", Bernoulli), ("closed_face_rate", Mean)],
            Plan::Square { .. } => &[("boundary_reached", Bernoulli), ("open_fraction", Mean), ("largest_component", Mean)],
            Plan::Bounds(_) => &[
                ("p_a", Mean),
                ("p1", Mean),
                ("p2", Mean),
                ("q", Mean),
                ("series_value", Mean),
                ("subcritical_series", Bernoulli),
            ],
            Plan::Series(_) => &[("series_value", Mean), ("subcritical_series", Bernoulli)],
            Plan::Color { .. } => &[("connected", Bernoulli), ("isolated_nodes", Mean), ("max_cell_occupancy", Mean)],
        }
    }

    fn run(&self, seed: u64) -> Result<Vec<f64>> {
        let b = |x: bool| if x { 1.0 } else { 0.0 };
        match self {
            Plan::SirGraph {
                lambda,
                window,
                model,
                config,
                margin,
            } => {
                let mut rng = rng_from_seed(seed);
                let points = sample_with(&PointProcess::Poisson { intensity: *lambda }, window, &mut rng)?;
                if points.is_empty() {
                    return Ok(vec![0.0, 0.0, 0.0]);
                }
                let graph = sir_graph::build(&points, model, config)?;
                let root = nearest_to(&points, window.center());
                let reach = sir_graph::components(&graph, root)?.out_component;
                let near_edge = |q: &Point2| {
                    window.boundary == Boundary::Plain
                        && (q.x < *margin || q.y < *margin || q.x > window.width - margin || q.y > window.height - margin)
                };
                let n = points.len() as f64;
                Ok(vec![
                    b(reach.iter().any(|&v| near_edge(&points[v]))),
                    graph.edge_count() as f64 / n,
                    graph.isolated_count() as f64 / n,
                ])
            }
            Plan::Hex { lambda, config, window } => {
                let mut rng = rng_from_seed(seed);
                let points = sample_with(&PointProcess::Poisson { intensity: *lambda }, window, &mut rng)?;
                let reports = hex::classify_faces(&points, config, window)?;
                let closed = reports.iter().filter(|r| r.closed).count() as f64 / reports.len() as f64;
                let enclosed = hex::find_closed_circuit(&reports, hex::origin_face())?.is_some();
                Ok(vec![b(enclosed), closed])
            }
            Plan::Square { lambda, config, window } => {
                let r = square::percolation_trial(*lambda, config, window, seed)?;
                Ok(vec![b(r.boundary_reached), r.open_fraction, r.largest_component as f64])
            }
            Plan::Bounds(config) => {
                let r = bounds::evaluate(config)?;
                Ok(vec![r.p_a, r.p1, r.p2, r.q, r.series_value, b(r.subcritical_series)])
            }
            Plan::Series(q) => {
                let s = bounds::series_value(*q);
                Ok(vec![s, b(s < 1.0)])
            }
            Plan::Color { config, model, threshold } => {
                let r = coloring::connectivity_trial(config, model, *threshold, seed)?;
                Ok(vec![b(r.connected), r.isolated_nodes as f64, r.max_cell_occupancy as f64])
            }
        }
    }
}

fn nearest_to(points: &[Point2], c: Point2) -> usize {
    let d = |p: &Point2| (p.x - c.x).powi(2) + (p.y - c.y).powi(2);
    (0..points.len())
        .min_by(|&a, &b| d(&points[a]).total_cmp(&d(&points[b])).then(a.cmp(&b)))
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatSummary {
    pub name: String,
    pub estimate: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point_index: usize,
    /// Values aligned with [`SweepResult::axes`].
    pub params: Vec<f64>,
    pub trials: usize,
    pub stats: Vec<StatSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub point_index: usize,
    pub params: Vec<f64>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub axes: Vec<String>,
    pub stat_names: Vec<String>,
    pub rows: Vec<SweepRow>,
    pub skipped: Vec<Skipped>,
}

fn summarize(kind: StatKind, values: &[f64]) -> (f64, f64) {
    let t = values.len() as f64;
    let mean = values.iter().sum::<f64>() / t;
    let se = match kind {
        StatKind::Bernoulli => (mean * (1.0 - mean) / t).max(0.0).sqrt(),
        StatKind::Mean if values.len() > 1 => {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0);
            (var / t).sqrt()
        }
        StatKind::Mean => 0.0,
    };
    (mean, se)
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let axes: Vec<String> = spec.grid.keys().cloned().collect();
    let points = spec.grid_points();
    let mut skipped = Vec::new();
    let mut plans: Vec<Option<Plan>> = Vec::with_capacity(points.len());
    for (idx, values) in points.iter().enumerate() {
        let params = Params {
            grid: axes.iter().map(String::as_str).zip(values.iter().copied()).collect(),
            fixed: &spec.params,
        };
        match Plan::new(spec.experiment, &params) {
            Ok(plan) => plans.push(Some(plan)),
            Err(e) => {
                log::warn!("skipping grid point {idx}: {e}");
                skipped.push(Skipped {
                    point_index: idx,
                    params: values.clone(),
                    reason: e.to_string(),
                });
                plans.push(None);
            }
        }
    }
    let stat_names: Vec<String> = plans
        .iter()
        .flatten()
        .next()
        .map(|p| p.stats().iter().map(|(n, _)| n.to_string()).collect())
        .unwrap_or_default();

    let trials = spec.trials;
    let tasks: Vec<(usize, usize)> = plans
        .iter()
        .enumerate()
        .filter(|(_, p)| p.is_some())
        .flat_map(|(i, _)| (0..trials).map(move |k| (i, k)))
        .collect();
    let run = || -> Vec<Result<Vec<f64>>> {
        tasks
            .par_iter()
            .map(|&(i, k)| {
                let seed = derive_trial_seed(spec.seed, (i * trials + k) as u64);
                plans[i].as_ref().expect("task for a planned point").run(seed)
            })
            .collect()
    };
    let outcomes = match spec.workers {
        Workers::Auto => run(),
        Workers::Count(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config(format!("workers: {e}")))?
            .install(run),
    };

    let mut rows = Vec::new();
    let mut cursor = 0;
    for (idx, plan) in plans.iter().enumerate() {
        let Some(plan) = plan else { continue };
        let chunk = &outcomes[cursor..cursor + trials];
        cursor += trials;
        if let Some(Err(e)) = chunk.iter().find(|r| r.is_err()) {
            log::warn!("skipping grid point {idx}: {e}");
            skipped.push(Skipped {
                point_index: idx,
                params: points[idx].clone(),
                reason: e.to_string(),
            });
            continue;
        }
        let values: Vec<&Vec<f64>> = chunk.iter().map(|r| r.as_ref().expect("checked above")).collect();
        let stats = plan
            .stats()
            .iter()
            .enumerate()
            .map(|(s, (name, kind))| {
                let column: Vec<f64> = values.iter().map(|v| v[s]).collect();
                let (estimate, standard_error) = summarize(*kind, &column);
                StatSummary {
                    name: name.to_string(),
                    estimate,
                    standard_error,
                }
            })
            .collect();
        log::debug!("grid point {idx} done");
        rows.push(SweepRow {
            point_index: idx,
            params: points[idx].clone(),
            trials,
            stats,
        });
    }
    skipped.sort_by_key(|s| s.point_index);
    Ok(SweepResult {
        spec: spec.clone(),
        axes,
        stat_names,
        rows,
        skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

/// Writes the result as CSV (header, rows, then `#` lines for skipped
/// points) or as one JSON object `{spec, rows, skipped}`.
pub fn emit<W: Write>(result: &SweepResult, format: Format, mut out: W) -> Result<()> {
    match format {
        Format::Csv => {
            let mut header: Vec<String> = result.axes.clone();
            header.push("trials".into());
            for s in &result.stat_names {
                header.push(s.clone());
                header.push(format!("{s}_se"));
            }
            writeln!(out, "{}", header.join(","))?;
            for row in &result.rows {
                let mut cells: Vec<String> = row.params.iter().map(|v| v.to_string()).collect();
                cells.push(row.trials.to_string());
                for s in &row.stats {
                    cells.push(s.estimate.to_string());
                    cells.push(s.standard_error.to_string());
                }
                writeln!(out, "{}", cells.join(","))?;
            }
            for s in &result.skipped {
                let params: Vec<String> = result
                    .axes
                    .iter()
                    .zip(&s.params)
                    .map(|(a, v)| format!("{a}={v}"))
                    .collect();
                writeln!(out, "# skipped {}: {}", params.join(" "), s.reason.replace('\n', " "))?;
            }
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                spec: &'a SweepSpec,
                rows: Vec<BTreeMap<String, serde_json::Value>>,
                skipped: &'a [Skipped],
            }
            let rows = result
                .rows
                .iter()
                .map(|r| {
                    let mut m = BTreeMap::new();
                    for (a, v) in result.axes.iter().zip(&r.params) {
                        m.insert(a.clone(), serde_json::json!(v));
                    }
                    m.insert("trials".into(), serde_json::json!(r.trials));
                    for s in &r.stats {
                        m.insert(s.name.clone(), serde_json::json!(s.estimate));
                        m.insert(format!("{}_se", s.name), serde_json::json!(s.standard_error));
                    }
                    m
                })
                .collect();
            let doc = Doc {
                spec: &result.spec,
                rows,
                skipped: &result.skipped,
            };
            serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| Error::Io(e.into()))?;
            writeln!(out)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BOUNDS_Q: &str = r#"
experiment = "bounds"
trials = 1
seed = 3

[grid]
q = [0.1, 0.17316461776530523, 0.25]
"#;

    fn csv_of(result: &SweepResult) -> String {
        let mut buf = Vec::new();
        emit(result, Format::Csv, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn series_sweep_values() {
        let spec = SweepSpec::from_toml(BOUNDS_Q, &[]).unwrap();
        let r = run_sweep(&spec).unwrap();
        let got: Vec<f64> = r.rows.iter().map(|row| row.stats[0].estimate).collect();
        assert!((got[0] - 0.4 / 1.47).abs() < 1e-12);
        assert!((got[1] - 1.0).abs() < 1e-9);
        assert!((got[2] - 1.0 / (3.0 * 0.0625)).abs() < 1e-12);
    }

    #[test]
    fn grid_order_and_ranges() {
        let spec = SweepSpec::from_toml(
            r#"
experiment = "bounds"
[grid]
threshold = [0.002, 0.001]
lambda = { min = 10, max = 30, steps = 3 }
"#,
            &[],
        )
        .unwrap();
        let pts = spec.grid_points();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0], vec![10.0, 0.001]);
        assert_eq!(pts[1], vec![10.0, 0.002]);
        assert_eq!(pts[5], vec![30.0, 0.002]);
    }

    #[test]
    fn config_errors() {
        let empty = "experiment = \"bounds\"\n[grid]\nq = []\n";
        assert!(matches!(SweepSpec::from_toml(empty, &[]), Err(Error::Config(_))));
        let none = "experiment = \"bounds\"\n";
        assert!(matches!(SweepSpec::from_toml(none, &[]), Err(Error::Config(_))));
        let unknown = "experiment = \"bounds\"\n[grid]\nq = [0.1]\n[params]\nbogus = 1\n";
        let e = SweepSpec::from_toml(unknown, &[]).unwrap_err().to_string();
        assert!(e.contains("params.bogus"), "{e}");
        let syntax = "experiment = \"bounds\"\n[grid\n";
        let e = SweepSpec::from_toml(syntax, &[]).unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
        let zero = "experiment = \"bounds\"\ntrials = 0\n[grid]\nq = [0.1]\n";
        assert!(SweepSpec::from_toml(zero, &[]).is_err());
    }

    #[test]
    fn overrides_take_precedence() {
        let spec = SweepSpec::from_toml(
            BOUNDS_Q,
            &["trials=4".into(), "grid.q=[0.2]".into(), "params.model.alpha=3".into(), "workers=2".into()],
        )
        .unwrap();
        assert_eq!(spec.trials, 4);
        assert_eq!(spec.grid["q"], Axis::List(vec![0.2]));
        assert_eq!(spec.params["model.alpha"], ParamValue::Num(3.0));
        assert_eq!(spec.workers, Workers::Count(2));
        let s = SweepSpec::from_toml(
            "experiment = \"sir_graph\"\n[grid]\nlambda=[5]\n",
            &["params.window.boundary=torus".into()],
        )
        .unwrap();
        assert_eq!(s.params["window.boundary"], ParamValue::Str("torus".into()));
    }

    #[test]
    fn invalid_points_are_skipped() {
        let spec = SweepSpec::from_toml(
            "experiment = \"bounds\"\n[grid]\nthreshold = [0.001, 1.0]\n",
            &[],
        )
        .unwrap();
        let r = run_sweep(&spec).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.skipped.len(), 1);
        let text = csv_of(&r);
        assert!(text.lines().last().unwrap().starts_with("# skipped threshold=1:"), "{text}");
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let text = r#"
experiment = "square"
trials = 6
seed = 11
[grid]
lambda = [40, 80]
[params]
cells_x = 10
cells_y = 10
model.r0 = 0.5
"#;
        let one = SweepSpec::from_toml(text, &["workers=1".into()]).unwrap();
        let four = SweepSpec::from_toml(text, &["workers=4".into()]).unwrap();
        let a = csv_of(&run_sweep(&one).unwrap());
        let b = csv_of(&run_sweep(&four).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn csv_round_trip_and_stability() {
        let spec = SweepSpec::from_toml(
            r#"
experiment = "color"
trials = 3
seed = 5
[grid]
n = [50, 80]
[params]
c = 1.0
delta_slack = 0.5
m = 0.5
"#,
            &[],
        )
        .unwrap();
        let r = run_sweep(&spec).unwrap();
        let first = csv_of(&r);
        assert_eq!(first, csv_of(&r));
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(first.as_bytes());
        let header = reader.headers().unwrap().clone();
        assert_eq!(header.len(), 2 + 2 * r.stat_names.len());
        for (rec, row) in reader.records().zip(&r.rows) {
            let rec = rec.unwrap();
            assert_eq!(rec[0].parse::<f64>().unwrap(), row.params[0]);
            assert_eq!(rec[1].parse::<usize>().unwrap(), row.trials);
            for (s, stat) in row.stats.iter().enumerate() {
                assert_eq!(rec[2 + 2 * s].parse::<f64>().unwrap(), stat.estimate);
                assert_eq!(rec[3 + 2 * s].parse::<f64>().unwrap(), stat.standard_error);
            }
        }
        let mut json = Vec::new();
        emit(&r, Format::Json, &mut json).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&json).unwrap();
        assert_eq!(v["rows"].as_array().unwrap().len(), 2);
        assert!(v["spec"]["grid"]["n"].is_array());
    }

    #[test]
    fn empty_result_is_header_only() {
        let r = SweepResult {
            spec: SweepSpec::from_toml(BOUNDS_Q, &[]).unwrap(),
            axes: vec!["q".into()],
            stat_names: vec!["series_value".into()],
            rows: vec![],
            skipped: vec![],
        };
        assert_eq!(csv_of(&r), "q,trials,series_value,series_value_se\n");
    }

    #[test]
    fn standard_errors() {
        assert_eq!(summarize(StatKind::Bernoulli, &[1.0, 0.0, 1.0, 0.0]), (0.5, 0.25));
        let (m, se) = summarize(StatKind::Mean, &[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-15);
    }

    #[test]
    fn each_experiment_runs() {
        for (exp, grid) in [
            ("sir_graph", "lambda = [30]"),
            ("hex", "lambda = [5]\ncols = [5]\nrows = [5]"),
            ("square", "lambda = [30]\ncells_x = [6]\ncells_y = [6]"),
            ("bounds", "lambda = [100, 300]"),
            ("color", "n = [60]\nc = [1.0]\nm = [0.5]"),
        ] {
            let text = format!("experiment = \"{exp}\"\ntrials = 2\n[grid]\n{grid}\n");
            let r = run_sweep(&SweepSpec::from_toml(&text, &[]).unwrap()).unwrap();
            assert!(r.skipped.is_empty(), "{exp}: {:?}", r.skipped);
            assert!(!r.rows.is_empty());
        }
    }
}
