use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tilesim::config::RunConfig;
use tilesim::dse::{self, Evaluator, TilingMode, COMPARED_MODELS};
use tilesim::error::{ConfigError, DseError, Error};
use tilesim::estimator::Model;
use tilesim::sim::{emit_trace, simulate, Report, SimOptions, TraceKind};
use tilesim::workload::TileConfig;

const DEFAULT_OUT_DIR: &str = "tilesim-out";

#[derive(Parser)]
#[command(name = "tilesim", version, about = "Simulate and estimate tiled CNN accelerator layers")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Built-in configuration: reference, extended or two-layer.
    #[arg(long, global = true, conflicts_with = "config")]
    preset: Option<String>,
    /// Output directory for reports and traces.
    #[arg(short, long, global = true, env = "TILESIM_OUT_DIR")]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct TileArg {
    /// Tile override as tb,tc,tm,te,tf[,um,uc].
    #[arg(long)]
    tile: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the cycle-level simulator on one design point.
    Simulate {
        #[command(flatten)]
        tile: TileArg,
        /// Traces to write: dram, bus, passes.
        #[arg(long = "trace", value_delimiter = ',', value_parser = parse_trace)]
        traces: Vec<TraceKind>,
    },
    /// Estimate one design point analytically.
    Estimate {
        #[command(flatten)]
        tile: TileArg,
        /// proposed, conventional, scaled or scaled_per_type.
        #[arg(long, default_value = "proposed")]
        model: String,
        /// Cycles per element for IFM, weights and OFM.
        #[arg(long)]
        scale: Option<String>,
        /// Include per-pass timelines in the report.
        #[arg(long)]
        timelines: bool,
    },
    /// Explore the design space.
    Dse {
        /// simulate, estimate, conventional, scaled or scaled_per_type.
        #[arg(long)]
        evaluator: Option<String>,
        /// Rank with the estimator and simulate only this fraction.
        #[arg(long)]
        top_fraction: Option<f64>,
        /// Optimize all configured layers with a shared unroll.
        #[arg(long)]
        multilayer: bool,
        /// Decouple channel tiles from the unroll factors.
        #[arg(long)]
        unconstrained: bool,
        /// SRAM budget in elements.
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Compare every estimator against the simulator over the space.
    Compare,
    /// Simulate and write only the requested traces.
    Trace {
        #[arg(value_parser = parse_trace, required = true)]
        kinds: Vec<TraceKind>,
        #[command(flatten)]
        tile: TileArg,
    },
    /// Print the effective configuration as TOML.
    Init,
}

fn parse_trace(s: &str) -> Result<TraceKind, String> {
    s.parse()
}

/// Failure with its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::Trace(_) | Error::Dse(DseError::BadFraction(_)) => 2,
            Error::Dse(_) => 3,
            Error::Io(_) | Error::Json(_) => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::config(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: 1, message: e.to_string() }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

struct Ctx {
    run: RunConfig,
    out_dir: PathBuf,
}

impl Ctx {
    fn new(cli: &Cli) -> CliResult<Self> {
        let run = match (&cli.config, &cli.preset) {
            (Some(path), _) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
                RunConfig::from_toml(&text)?
            }
            (None, Some(name)) => RunConfig::preset(name)?,
            (None, None) => RunConfig::reference(),
        };
        let out_dir =
            cli.out_dir.clone().or_else(|| run.output.dir.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
        Ok(Ctx { run, out_dir })
    }

    fn tile(&self, arg: &TileArg) -> CliResult<TileConfig> {
        match &arg.tile {
            Some(s) => parse_tile(s),
            None => Ok(self.run.require_tile()?),
        }
    }

    fn file(&self, name: &str) -> CliResult<BufWriter<File>> {
        fs::create_dir_all(&self.out_dir)?;
        Ok(BufWriter::new(File::create(self.out_dir.join(name))?))
    }

    fn write_json<T: serde::Serialize>(&self, name: &str, value: &T) -> CliResult {
        let mut w = self.file(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure { code: 1, message: e.to_string() })?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

fn parse_tile(s: &str) -> CliResult<TileConfig> {
    let v: Vec<u32> = s
        .split(',')
        .map(|x| x.trim().parse::<u32>())
        .collect::<Result<_, _>>()
        .map_err(|e| Failure::config(format!("bad --tile `{s}`: {e}")))?;
    match v[..] {
        [tb, tc, tm, te, tf] => Ok(TileConfig::constrained(tb, tc, tm, te, tf)),
        [tb, tc, tm, te, tf, um, uc] => Ok(TileConfig { tb, tc, tm, te, tf, um, uc }),
        _ => Err(Failure::config(format!("--tile needs 5 or 7 values, got {}", v.len()))),
    }
}

fn parse_scale(s: &str) -> CliResult<[f64; 3]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| Failure::config(format!("bad --scale `{s}`: {e}")))?;
    match v[..] {
        [a, b, c] if a > 0.0 && b > 0.0 && c > 0.0 => Ok([a, b, c]),
        _ => Err(Failure::config("--scale needs three positive numbers")),
    }
}

fn parse_model(name: &str, scale: Option<[f64; 3]>) -> CliResult<Model> {
    Ok(match (name, scale) {
        ("proposed", None) => Model::Proposed,
        ("proposed", Some(_)) => return Err(Failure::config("--scale does not apply to the proposed model")),
        ("conventional", None) => Model::Conventional,
        ("scaled", None) | ("scaled_uniform", None) => Model::ScaledUniform,
        ("scaled_per_type", None) => Model::ScaledPerType,
        ("conventional" | "scaled" | "scaled_uniform" | "scaled_per_type", Some(s)) => Model::Scaled(s),
        (other, _) => return Err(Failure::config(format!("unknown model `{other}`"))),
    })
}

fn summary(r: &Report) -> String {
    format!(
        "model={} total_cycles={} performance={:.3} passes={} limit={:?}",
        r.model, r.total_cycles, r.performance, r.pass_count, r.limit
    )
}

fn run_simulation(ctx: &Ctx, tile: TileConfig, traces: &[TraceKind], write_report: bool) -> CliResult {
    let layer = ctx.run.layer()?;
    let cfg = ctx.run.system_with_budget();
    let mut traces = traces.to_vec();
    for t in &ctx.run.output.traces {
        if !traces.contains(t) {
            traces.push(*t);
        }
    }
    let opts = SimOptions {
        timelines: true,
        dram_trace: traces.contains(&TraceKind::Dram),
        bus_trace: traces.contains(&TraceKind::Bus),
    };
    let out = simulate(&layer, &tile, &cfg, opts)?;
    if write_report {
        ctx.write_json("report.json", &out.report)?;
    }
    fs::create_dir_all(&ctx.out_dir)?;
    for kind in &traces {
        let path = ctx.out_dir.join(kind.file_name());
        emit_trace(&out, *kind, &path)?;
        println!("wrote {}", path.display());
    }
    println!("{}", summary(&out.report));
    Ok(())
}

fn cmd_estimate(ctx: &Ctx, tile: TileConfig, model: &str, scale: Option<&str>, timelines: bool) -> CliResult {
    let scale = scale.map(parse_scale).transpose()?;
    let model = parse_model(model, scale)?;
    let layer = ctx.run.layer()?;
    let cfg = ctx.run.system_with_budget();
    let report = match model {
        Model::Proposed => {
            let opts = tilesim::estimator::EstimateOptions { timelines, ..Default::default() };
            tilesim::estimator::estimate_with(&layer, &tile, &cfg, opts)?
        }
        m => m.evaluate(&layer, &tile, &cfg)?,
    };
    ctx.write_json("estimate.json", &report)?;
    println!("{}", summary(&report));
    Ok(())
}

fn cmd_dse(
    ctx: &Ctx,
    evaluator: Option<&str>,
    top: Option<f64>,
    multilayer: bool,
    unconstrained: bool,
    budget: Option<u64>,
) -> CliResult {
    let run = &ctx.run;
    let space = run.require_space()?;
    let cfg = run.system();
    let budget = budget.or(run.sram_budget);
    let eval_name = evaluator.unwrap_or(&run.dse.evaluator);
    let evaluator: Evaluator = eval_name.parse().map_err(Failure::config)?;
    let top = top.or(run.dse.top_fraction);

    if multilayer {
        let model = match evaluator {
            Evaluator::Estimate(m) => m,
            Evaluator::Simulate => return Err(Failure::config("multi-layer search is estimator-driven")),
        };
        let mode = if unconstrained { TilingMode::Unconstrained } else { run.dse.mode };
        let layers: Vec<_> = run.layer_shapes()?.into_iter().map(|l| (l, space.clone())).collect();
        let res = dse::optimize_multilayer(&layers, &run.dse.unrolls, budget, mode, model, &cfg)?;
        ctx.write_json("multilayer.json", &res)?;
        for (i, l) in res.layers.iter().enumerate() {
            let t = &l.tile;
            println!(
                "layer {i}: tile tb={} tc={} tm={} te={} tf={} cycles={} footprint={}",
                t.tb, t.tc, t.tm, t.te, t.tf, l.cycles, l.footprint
            );
        }
        println!(
            "mode={:?} unroll=({},{}) total_cycles={} aggregate_performance={:.3}",
            res.mode, res.unroll.0, res.unroll.1, res.total_cycles, res.aggregate_performance
        );
        return Ok(());
    }

    let layer = run.layer()?;
    if let Some(frac) = top {
        let model = match evaluator {
            Evaluator::Estimate(m) => m,
            Evaluator::Simulate => Model::Proposed,
        };
        let res = dse::hybrid_optimize(&layer, space, budget, frac, model, &cfg)?;
        ctx.write_json("hybrid.json", &res)?;
        let t = &res.best.tile;
        println!(
            "simulated {} of {} feasible; best tb={} tc={} tm={} te={} tf={} performance={:.3}",
            res.simulated,
            res.feasible,
            t.tb,
            t.tc,
            t.tm,
            t.te,
            t.tf,
            res.best.perf_simulated.unwrap_or(0.0)
        );
        return Ok(());
    }

    let mut res = dse::optimize(&layer, space, budget, evaluator, &cfg)?;
    if !run.dse.budgets.is_empty() {
        res.frontier = dse::frontier(&res.points, &run.dse.budgets, dse::DsePoint::best_known);
    }
    dse::write_points_csv(ctx.file("dse_points.csv")?, &res.points)?;
    dse::write_frontier_csv(ctx.file("dse_frontier.csv")?, &res.frontier)?;
    ctx.write_json("dse.json", &res)?;
    let b = &res.best;
    let t = &b.tile;
    println!(
        "evaluated {} points with {}; best tb={} tc={} tm={} te={} tf={} footprint={} performance={:.3}",
        res.points.len(),
        res.evaluator,
        t.tb,
        t.tc,
        t.tm,
        t.te,
        t.tf,
        b.footprint,
        b.best_known()
    );
    Ok(())
}

fn cmd_compare(ctx: &Ctx) -> CliResult {
    let layer = ctx.run.layer()?;
    let space = ctx.run.require_space()?;
    let tiles = dse::enumerate(space, &layer).map_err(Error::from)?;
    let cfg = ctx.run.system();
    let report = dse::compare_models(&layer, &tiles, &cfg, &COMPARED_MODELS)?;
    ctx.write_json("compare.json", &report)?;
    let mut w = ctx.file("compare.csv")?;
    write!(w, "tb,tc,tm,te,tf,simulated")?;
    for s in &report.stats {
        write!(w, ",{}", s.model)?;
    }
    writeln!(w)?;
    for p in &report.points {
        let t = &p.tile;
        write!(w, "{},{},{},{},{},{}", t.tb, t.tc, t.tm, t.te, t.tf, p.simulated_cycles)?;
        for e in &p.estimates {
            write!(w, ",{}", e.1)?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    println!("{} points", report.points.len());
    println!("{:<18} {:>8} {:>8} {:>8} {:>8}", "model", "mean", "p50", "p90", "max");
    for s in &report.stats {
        println!(
            "{:<18} {:>7.2}% {:>7.2}% {:>7.2}% {:>7.2}%",
            s.model,
            100.0 * s.mean,
            100.0 * s.p50,
            100.0 * s.p90,
            100.0 * s.max
        );
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    let ctx = Ctx::new(&cli)?;
    match &cli.cmd {
        Cmd::Simulate { tile, traces } => run_simulation(&ctx, ctx.tile(tile)?, traces, true),
        Cmd::Trace { kinds, tile } => run_simulation(&ctx, ctx.tile(tile)?, kinds, false),
        Cmd::Estimate { tile, model, scale, timelines } => {
            cmd_estimate(&ctx, ctx.tile(tile)?, model, scale.as_deref(), *timelines)
        }
        Cmd::Dse { evaluator, top_fraction, multilayer, unconstrained, budget } => {
            cmd_dse(&ctx, evaluator.as_deref(), *top_fraction, *multilayer, *unconstrained, *budget)
        }
        Cmd::Compare => cmd_compare(&ctx),
        Cmd::Init => {
            print!("{}", ctx.run.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
