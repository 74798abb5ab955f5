use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sirperc::bounds::{self, AreaConvention, BoundsConfig, MRule};
use sirperc::coloring::{self, ColoringConfig, GrowthFn};
use sirperc::experiments::{self, Format, SweepSpec};
use sirperc::geometry::{derive_trial_seed, rng_from_seed, sample_with};
use sirperc::hex::{self, HexConfig};
use sirperc::sir_graph::{self, SirGraphConfig};
use sirperc::square::{self, SquareConfig};
use sirperc::{AttenuationModel, Boundary, Error, Point2, PointProcess, Result, Window};

#[derive(Parser)]
#[command(name = "sirperc", version, about = "Percolation and connectivity experiments on SIR graphs")]
struct Cli {
    /// Sweep config file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Csv)]
    format: OutFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a point process and write `x,y` rows.
    Sample(SampleArgs),
    /// Build an SIR graph and write its edge list.
    BuildGraph(GraphArgs),
    /// Classify hexagonal faces, or report the analytic closed-face figures.
    Hex(HexArgs),
    /// Classify square-lattice edges.
    Square(SquareArgs),
    /// Evaluate the circuit-counting bounds.
    Bounds(BoundsArgs),
    /// Run coloured connectivity trials.
    Color(ColorArgs),
    /// Run a parameter sweep described by --config.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct WindowArgs {
    #[arg(long, default_value_t = 1.0)]
    width: f64,
    #[arg(long, default_value_t = 1.0)]
    height: f64,
    #[arg(long, value_enum, default_value_t = BoundaryArg::Plain)]
    boundary: BoundaryArg,
}

impl WindowArgs {
    fn window(&self) -> Result<Window> {
        Window::new(self.width, self.height, self.boundary.into())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BoundaryArg {
    Plain,
    Torus,
}

impl From<BoundaryArg> for Boundary {
    fn from(b: BoundaryArg) -> Self {
        match b {
            BoundaryArg::Plain => Boundary::Plain,
            BoundaryArg::Torus => Boundary::Torus,
        }
    }
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value_t = 4.0)]
    alpha: f64,
    /// Offset of the bounded model `(r0 + d)^-alpha`; pure power law when absent.
    #[arg(long)]
    r0: Option<f64>,
}

impl ModelArgs {
    fn model(&self) -> Result<AttenuationModel> {
        match self.r0 {
            Some(r0) => AttenuationModel::bounded(self.alpha, r0),
            None => AttenuationModel::power_law(self.alpha),
        }
    }
}

#[derive(Args)]
struct SampleArgs {
    /// Poisson intensity.
    #[arg(long, conflicts_with = "count")]
    intensity: Option<f64>,
    /// Fixed number of uniform points.
    #[arg(long)]
    count: Option<usize>,
    #[command(flatten)]
    window: WindowArgs,
}

#[derive(Args)]
struct GraphArgs {
    /// `x,y` CSV of points; sampled from --intensity when absent.
    #[arg(long)]
    points: Option<PathBuf>,
    #[arg(long, default_value_t = 100.0)]
    intensity: f64,
    #[arg(long)]
    threshold: f64,
    /// Count the receiver's own transmission as interference.
    #[arg(long)]
    include_receiver: bool,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    window: WindowArgs,
}

#[derive(Args)]
struct HexArgs {
    #[arg(long, default_value_t = 10.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long, default_value_t = 0.95)]
    rho: f64,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value_t = 16.0)]
    threshold: f64,
    #[arg(long, default_value_t = 4.0)]
    alpha: f64,
    #[arg(long, default_value_t = 20)]
    cols: usize,
    #[arg(long, default_value_t = 20)]
    rows: usize,
    /// Print closed-face probability, its maximiser and the sub-critical interval instead.
    #[arg(long)]
    analytic: bool,
}

#[derive(Args)]
struct SquareArgs {
    #[arg(long, default_value_t = 100.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1000.0)]
    m_cap: f64,
    #[arg(long, default_value_t = 1e-3)]
    threshold: f64,
    #[arg(long, default_value_t = 4.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    r0: f64,
    #[arg(long, default_value_t = 32)]
    cells_x: usize,
    #[arg(long, default_value_t = 32)]
    cells_y: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AreaArg {
    Area,
    Side,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long, default_value_t = 100.0)]
    lambda: f64,
    /// Interference cap; `1/T` when absent.
    #[arg(long)]
    m_cap: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    threshold: f64,
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    #[arg(long, default_value_t = 4.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    r0: f64,
    #[arg(long, value_enum, default_value_t = AreaArg::Area)]
    area_convention: AreaArg,
    /// Report the intensity interval where q is below the threshold instead.
    #[arg(long)]
    interval: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    UpperBound,
    LowerBound,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GrowthArg {
    SqrtLog,
    LogLog,
    Constant,
}

#[derive(Args)]
struct ColorArgs {
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 4.0)]
    c: f64,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    m: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::UpperBound)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = GrowthArg::Constant)]
    f: GrowthArg,
    #[arg(long, default_value_t = 1.0)]
    omega: f64,
    #[arg(long, default_value_t = 1.0)]
    threshold: f64,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Write the colour assignment of the first trial instead of trial records.
    #[arg(long)]
    assignment: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Override a config key, e.g. `--set params.model.alpha=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_points(path: &Path) -> Result<Vec<Point2>> {
    let text = std::fs::read_to_string(path)?;
    let mut points = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (line_no == 0 && line.starts_with('x')) {
            continue;
        }
        let mut parts = line.split(',').map(str::trim);
        let parse = |v: Option<&str>| v.and_then(|s| s.parse::<f64>().ok());
        match (parse(parts.next()), parse(parts.next())) {
            (Some(x), Some(y)) => points.push(Point2::new(x, y)),
            _ => {
                return Err(Error::Config(format!(
                    "{}: line {}: expected `x,y`",
                    path.display(),
                    line_no + 1
                )))
            }
        }
    }
    Ok(points)
}

fn write_points<W: Write>(points: &[Point2], mut out: W) -> Result<()> {
    writeln!(out, "x,y")?;
    for p in points {
        writeln!(out, "{},{}", p.x, p.y)?;
    }
    Ok(())
}

fn csv_only(cli: &Cli, what: &str) -> Result<()> {
    if cli.format == OutFormat::Json {
        return Err(Error::Config(format!("--format json is not available for {what}")));
    }
    Ok(())
}

fn write_json<W: Write, T: serde::Serialize>(value: &T, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::Io(e.into()))?;
    writeln!(out)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if cli.config.is_some() && !matches!(cli.command, Command::Sweep(_)) {
        return Err(Error::Config("--config applies to the sweep command only".into()));
    }
    let seed = cli.seed.unwrap_or(0);
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Sample(a) => {
            csv_only(cli, "sample")?;
            let window = a.window.window()?;
            let process = match (a.intensity, a.count) {
                (Some(intensity), None) => PointProcess::Poisson { intensity },
                (None, Some(n)) => PointProcess::UniformN { n },
                _ => return Err(Error::Config("give exactly one of --intensity and --count".into())),
            };
            let points = sample_with(&process, &window, &mut rng_from_seed(seed))?;
            write_points(&points, open_output(out)?)?;
        }
        Command::BuildGraph(a) => {
            csv_only(cli, "build-graph")?;
            let window = a.window.window()?;
            let points = match &a.points {
                Some(p) => read_points(p)?,
                None => sample_with(&PointProcess::Poisson { intensity: a.intensity }, &window, &mut rng_from_seed(seed))?,
            };
            let config = SirGraphConfig::new(a.threshold)
                .with_exclude_receiver(!a.include_receiver)
                .with_metric(window.metric());
            let graph = sir_graph::build(&points, &a.model.model()?, &config)?;
            log::info!("{} nodes, {} edges", graph.node_count(), graph.edge_count());
            graph.write_edge_list(open_output(out)?)?;
        }
        Command::Hex(a) => {
            let config = HexConfig {
                delta: a.delta,
                rho: a.rho,
                eta: a.eta,
                threshold: a.threshold,
                alpha: a.alpha,
            };
            if a.analytic {
                let p = hex::closed_face_probability(a.lambda, &config)?;
                let (lambda_star, p_max) = hex::max_closed_probability(&config)?;
                let interval = hex::lambda_interval_subcritical(&config)?;
                let (lo, hi) = interval.map_or((f64::NAN, f64::NAN), |(l, h)| (l, h));
                let mut w = open_output(out)?;
                if cli.format == OutFormat::Json {
                    let doc = serde_json::json!({
                        "lambda": a.lambda, "triangle": p.triangle, "face": p.face, "certified": p.certified,
                        "lambda_star": lambda_star, "face_max": p_max,
                        "interval": interval.map(|(l, h)| [l, h]),
                    });
                    write_json(&doc, w)?;
                } else {
                    writeln!(w, "lambda,triangle,face,certified,lambda_star,face_max,interval_lo,interval_hi")?;
                    writeln!(
                        w,
                        "{},{},{},{},{lambda_star},{p_max},{lo},{hi}",
                        a.lambda,
                        p.triangle,
                        p.face,
                        u8::from(p.certified)
                    )?;
                }
            } else {
                csv_only(cli, "hex face classification")?;
                let window = hex::window_for_faces(a.cols, a.rows, a.delta)?;
                let points = sample_with(&PointProcess::Poisson { intensity: a.lambda }, &window, &mut rng_from_seed(seed))?;
                let reports = hex::classify_faces(&points, &config, &window)?;
                let circuit = hex::find_closed_circuit(&reports, hex::origin_face())?;
                log::info!(
                    "{} faces, {} closed, origin enclosed: {}",
                    reports.len(),
                    reports.iter().filter(|r| r.closed).count(),
                    circuit.is_some()
                );
                hex::write_faces_csv(&reports, open_output(out)?)?;
            }
        }
        Command::Square(a) => {
            csv_only(cli, "square")?;
            let config = SquareConfig::new(a.m_cap, a.threshold, AttenuationModel::bounded(a.alpha, a.r0)?);
            let window = square::lattice_window(&config, a.cells_x, a.cells_y, Boundary::Plain)?;
            let points = sample_with(&PointProcess::Poisson { intensity: a.lambda }, &window, &mut rng_from_seed(seed))?;
            let field = square::classify_edges(&points, &config, &window)?;
            let comp = square::open_component(&field, field.origin());
            log::info!(
                "{} edges, open fraction {}, origin cluster reaches boundary: {}",
                field.edges.len(),
                field.open_fraction(),
                comp.boundary_reached
            );
            square::write_edges_csv(&field, open_output(out)?)?;
        }
        Command::Bounds(a) => {
            let model = AttenuationModel::bounded(a.alpha, a.r0)?;
            let convention = match a.area_convention {
                AreaArg::Area => AreaConvention::Area,
                AreaArg::Side => AreaConvention::Side,
            };
            let m_rule = a.m_cap.map_or(MRule::Reciprocal, MRule::Fixed);
            let mut w = open_output(out)?;
            if a.interval {
                let interval = bounds::find_supercritical_interval(a.threshold, a.k, &model, m_rule, convention)?;
                if cli.format == OutFormat::Json {
                    write_json(&serde_json::json!({ "interval": interval.map(|(l, h)| [l, h]) }), w)?;
                } else {
                    writeln!(w, "lambda_lo,lambda_hi")?;
                    if let Some((l, h)) = interval {
                        writeln!(w, "{l},{h}")?;
                    }
                }
            } else {
                let config = BoundsConfig {
                    lambda: a.lambda,
                    m_cap: m_rule.cap(a.threshold),
                    threshold: a.threshold,
                    k: a.k,
                    model,
                    area_convention: convention,
                };
                let report = bounds::evaluate(&config)?;
                if cli.format == OutFormat::Json {
                    write_json(&serde_json::json!({ "config": config, "report": report }), w)?;
                } else {
                    bounds::write_reports_csv(&[(config, report)], w)?;
                }
            }
        }
        Command::Color(a) => {
            let config = match a.mode {
                ModeArg::UpperBound => ColoringConfig::upper(a.n, a.c, a.delta, a.m),
                ModeArg::LowerBound => {
                    let f = match a.f {
                        GrowthArg::SqrtLog => GrowthFn::SqrtLog,
                        GrowthArg::LogLog => GrowthFn::LogLog,
                        GrowthArg::Constant => GrowthFn::Constant,
                    };
                    ColoringConfig::lower(a.n, f, a.omega, a.threshold)
                }
            };
            let model = a.model.model()?;
            if a.trials == 0 {
                return Err(Error::Config("--trials must be at least 1".into()));
            }
            let w = open_output(out)?;
            if a.assignment {
                csv_only(cli, "colour assignments")?;
                let (_, points, assignment) =
                    coloring::connectivity_trial_detailed(&config, &model, a.threshold, derive_trial_seed(seed, 0))?;
                coloring::write_assignment_csv(&points, &assignment, w)?;
            } else {
                let records = (0..a.trials)
                    .map(|k| coloring::connectivity_trial(&config, &model, a.threshold, derive_trial_seed(seed, k as u64)))
                    .collect::<Result<Vec<_>>>()?;
                if cli.format == OutFormat::Json {
                    write_json(&records, w)?;
                } else {
                    coloring::write_trials_csv(&records, w)?;
                }
            }
        }
        Command::Sweep(a) => {
            let path = cli
                .config
                .as_deref()
                .ok_or_else(|| Error::Config("sweep needs --config <file>".into()))?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let mut overrides = a.overrides.clone();
            if let Some(s) = cli.seed {
                overrides.push(format!("seed={s}"));
            }
            if let Some(n) = cli.workers {
                overrides.push(format!("workers={n}"));
            }
            let spec = SweepSpec::from_toml(&text, &overrides)
                .map_err(|e| Error::Config(format!("{}: {}", path.display(), e)))?;
            // Fail on an unwritable output before spending time on trials.
            let w = open_output(out)?;
            let result = experiments::run_sweep(&spec)?;
            let format = match cli.format {
                OutFormat::Csv => Format::Csv,
                OutFormat::Json => Format::Json,
            };
            experiments::emit(&result, format, w)?;
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Io(_) => 3,
        Error::Domain(_) | Error::Usage(_) => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
        // Non-sweep commands parallelize inside the core library.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
