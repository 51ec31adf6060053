use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use climmap_core::climate::{generate_dataset, parse_climate_file, ScenarioOffsets};
use climmap_core::maprender::GridSpec;
use climmap_core::pipeline::{
    halton_stations, lattice_stations, run_pipeline, summarize, PipelineConfig, Region, RunMode,
};
use climmap_core::Error;

/// Climate-driven performance maps for building systems.
#[derive(Debug, Parser)]
#[command(name = "climmap", version, about)]
struct Cli {
    /// Only print warnings and errors on stderr.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic three-period climate dataset.
    Gen(GenArgs),
    /// Simulate a system at every station of the three periods and draw the maps.
    Run(RunArgs),
    /// Map a statistic of one climate variable instead of simulating.
    ClimateStat(RunArgs),
    /// Print the header and per-column summary of a climate file.
    Inspect { file: PathBuf },
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Output directory; `past/`, `near/` and `far/` are created inside.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    stations: u32,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    years: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Air temperature offset of the near future, K.
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    dt_near: f64,
    /// Air temperature offset of the far future, K.
    #[arg(long, default_value_t = 4.0, allow_negative_numbers = true)]
    dt_far: f64,
    /// Place stations on a regular lattice instead of a Halton sequence.
    #[arg(long)]
    grid_europe: bool,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Stations processed concurrently (0 = one per core). Overrides the config.
    #[arg(long)]
    workers: Option<usize>,
    /// Drop failing stations from all periods instead of aborting.
    #[arg(long)]
    skip_bad_stations: bool,
}

struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_usage() { 2 } else { 1 };
        Failure { code, err: e.into() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: 1, err: e.into() }
    }
}

fn usage(e: Error) -> Failure {
    Failure { code: 2, err: e.into() }
}

fn cmd_gen(a: &GenArgs) -> Result<(), Failure> {
    if !a.dt_near.is_finite() || !a.dt_far.is_finite() {
        return Err(usage(Error::Argument("temperature offsets must be finite".into())));
    }
    let region = Region::from_grid(&GridSpec::default());
    let n = a.stations as usize;
    let stations = if a.grid_europe {
        lattice_stations(n, &region)
    } else {
        halton_stations(n, &region, a.seed)
    };
    let offsets = ScenarioOffsets {
        near: a.dt_near,
        far: a.dt_far,
    };
    let sets = generate_dataset(&stations, a.years as usize, offsets, a.seed, &a.out)?;
    log::info!(
        "wrote {} stations x {} years to {}",
        sets[0].stations.len(),
        a.years,
        a.out.display()
    );
    let mut out = std::io::stdout().lock();
    writeln!(out, "station,lon,lat")?;
    for (path, (lon, lat)) in sets[0].stations.iter().zip(&stations) {
        writeln!(out, "{},{lon},{lat}", climmap_core::climate::station_id(path))?;
    }
    Ok(())
}

fn load_config(path: &Path, a: &RunArgs) -> Result<PipelineConfig, Failure> {
    let mut cfg = PipelineConfig::load(path).map_err(usage)?;
    if let Some(w) = a.workers {
        cfg.workers = w;
    } else if cfg.workers == 0 {
        if let Ok(v) = std::env::var("CLIMMAP_WORKERS") {
            cfg.workers = v
                .trim()
                .parse()
                .map_err(|_| usage(Error::Argument(format!("CLIMMAP_WORKERS=`{v}` is not a worker count"))))?;
        }
    }
    cfg.skip_bad_stations |= a.skip_bad_stations;
    Ok(cfg)
}

fn cmd_run(a: &RunArgs, force: Option<RunMode>) -> Result<(), Failure> {
    let mut cfg = load_config(&a.config, a)?;
    if let Some(mode) = force {
        cfg.mode = mode;
    }
    let run = run_pipeline(&cfg)?;
    let m = &run.manifest;
    log::info!(
        "{} stations, {:.2} s total; manifest {}",
        m.station_count,
        m.total_seconds,
        run.manifest_path.display()
    );
    let mut out = std::io::stdout().lock();
    for p in &m.outputs {
        writeln!(out, "{}", p.display())?;
    }
    writeln!(out, "{}", run.manifest_path.display())?;
    Ok(())
}

fn cmd_inspect(file: &Path) -> Result<(), Failure> {
    let series = parse_climate_file(file)?;
    let h = series.header();
    let mut out = std::io::stdout().lock();
    writeln!(out, "file        {}", file.display())?;
    writeln!(out, "longitude   {}", h.longitude)?;
    writeln!(out, "latitude    {}", h.latitude)?;
    writeln!(out, "height      {}", h.height)?;
    writeln!(out, "time_zone   {}", h.time_zone)?;
    writeln!(out, "time_step   {}", h.time_step)?;
    writeln!(out, "n_hours     {}", series.n_hours())?;
    writeln!(out, "{:<6} {:>14} {:>14} {:>14}", "code", "min", "mean", "max")?;
    for s in summarize(&series) {
        writeln!(
            out,
            "{:<6} {:>14.6} {:>14.6} {:>14.6}",
            s.code.as_str(),
            s.min,
            s.mean,
            s.max
        )?;
    }
    let c = series.clamped();
    if c.total() > 0 {
        log::warn!(
            "clamped values: HREL {}, ISGH {}, ISD {}, WS {}",
            c.hrel,
            c.isgh,
            c.isd,
            c.ws
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .format_target(false)
        .init();

    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Run(a) => cmd_run(a, None),
        Command::ClimateStat(a) => cmd_run(a, Some(RunMode::ClimateStat)),
        Command::Inspect { file } => cmd_inspect(file),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.err);
            ExitCode::from(f.code)
        }
    }
}
