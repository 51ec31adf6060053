//! Three-period batch runs: load every station of every period, reduce each
//! to one value, join the periods, write the tables and the five maps, and
//! record a manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::climate::{
    check_matching, parse_climate_file, round_sig6, station_id, ClampCounts, ClimateSeries, PeriodDataset, PeriodKey,
    VarCode,
};
use crate::error::{Error, Result};
use crate::maprender::{render_five, GridSpec};
use crate::perf::{
    assemble_map_table, climate_stat, period_csv, write_map_table, MapTable, PreparedSystem, StationResult, Statistic,
};
use crate::statespace::dc_gain;
use crate::systems::{build_from_config, Binding, ModelConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    #[default]
    Simulate,
    ClimateStat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodConfig {
    pub key: PeriodKey,
    pub dir: PathBuf,
}

/// The JSON run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub name: String,
    #[serde(default)]
    pub mode: RunMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<ModelConfig>,
    /// Climate variable for `climate-stat` mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variable: Option<String>,
    /// Statistic for `climate-stat` mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statistic: Option<Statistic>,
    pub periods: Vec<PeriodConfig>,
    /// Overrides the indicator's leading-hour exclusion when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip_hours: Option<usize>,
    #[serde(default)]
    pub grid: GridSpec,
    pub out_dir: PathBuf,
    /// Stations processed concurrently; 0 picks the machine's core count.
    #[serde(default)]
    pub workers: usize,
    /// Drop failing stations from all periods instead of aborting.
    #[serde(default)]
    pub skip_bad_stations: bool,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::config(format!("line {} column {}", e.line(), e.column()), e.to_string()))
    }

    /// Loads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in &mut cfg.periods {
            if p.dir.is_relative() {
                p.dir = base.join(&p.dir);
            }
        }
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        Ok(cfg)
    }

    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        let hash = Sha256::digest(&canonical);
        hash.iter().fold(String::with_capacity(64), |mut s, b| {
            use std::fmt::Write as _;
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// Period directories in past, near, far order.
    pub fn period_dirs(&self) -> Result<[PathBuf; 3]> {
        if self.periods.len() != 3 {
            return Err(Error::config(
                "periods",
                format!("{} periods given, expected 3", self.periods.len()),
            ));
        }
        let find = |key: PeriodKey| {
            let hits: Vec<_> = self.periods.iter().filter(|p| p.key == key).collect();
            match hits.as_slice() {
                [one] => Ok(one.dir.clone()),
                [] => Err(Error::config("periods", format!("period `{key}` is missing"))),
                _ => Err(Error::config("periods", format!("period `{key}` is given twice"))),
            }
        };
        Ok([find(PeriodKey::Past)?, find(PeriodKey::Near)?, find(PeriodKey::Far)?])
    }
}

/// What each station is reduced with.
#[derive(Debug, Clone)]
pub enum Evaluator {
    Model(Box<PreparedSystem>),
    ClimateStat { variable: VarCode, statistic: Statistic },
}

impl Evaluator {
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self> {
        let prefix = |e: Error| match e {
            Error::Config { path, reason } => Error::config(format!("system.{path}"), reason),
            e => e,
        };
        match cfg.mode {
            RunMode::Simulate => {
                let sys = cfg
                    .system
                    .as_ref()
                    .ok_or_else(|| Error::config("system", "simulate mode needs a `system` section"))?;
                let mut spec = build_from_config(sys).map_err(prefix)?;
                if let Some(skip) = cfg.skip_hours {
                    spec.indicator.skip_hours = skip;
                }
                if sys.name.is_none() {
                    spec.name = cfg.name.clone();
                }
                Ok(Evaluator::Model(Box::new(PreparedSystem::new(spec).map_err(prefix)?)))
            }
            RunMode::ClimateStat => {
                let variable = cfg
                    .variable
                    .as_deref()
                    .ok_or_else(|| Error::config("variable", "climate-stat mode needs a `variable`"))?
                    .parse::<VarCode>()
                    .map_err(|e| Error::config("variable", e.to_string()))?;
                let statistic = cfg.statistic.unwrap_or_default();
                statistic.validate().map_err(|e| match e {
                    Error::Config { reason, .. } => Error::config("statistic", reason),
                    e => e,
                })?;
                Ok(Evaluator::ClimateStat { variable, statistic })
            }
        }
    }

    pub fn evaluate(&self, series: &ClimateSeries, id: &str) -> Result<StationResult> {
        match self {
            Evaluator::Model(sys) => sys.run(series, id),
            Evaluator::ClimateStat { variable, statistic } => {
                let v = climate_stat(series, *variable, *statistic).map_err(|e| Error::Station {
                    station: id.to_string(),
                    source: Box::new(e),
                })?;
                Ok(StationResult::new(id, series.header(), v))
            }
        }
    }

    /// Steady-state gain from each climate-bound input to the indicator
    /// scalar, `weights · dc_gain[:, j]`. Empty when `A` is singular.
    pub fn climate_gains(&self) -> Vec<(String, f64)> {
        let Evaluator::Model(sys) = self else {
            return Vec::new();
        };
        let Ok(g) = dc_gain(&sys.spec.model) else {
            return Vec::new();
        };
        let w = &sys.spec.indicator.weights;
        sys.spec
            .bindings
            .iter()
            .enumerate()
            .filter_map(|(j, b)| match b {
                Binding::Climate(code) => {
                    let gain = (0..g.rows()).map(|i| w[i] * g[(i, j)]).sum::<f64>();
                    let channel = sys
                        .spec
                        .model
                        .labels
                        .inputs
                        .get(j)
                        .cloned()
                        .unwrap_or_else(|| j.to_string());
                    Some((format!("{channel}<-{code}"), gain))
                }
                Binding::Constant(_) => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodTiming {
    pub period: PeriodKey,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapWarning {
    pub map: String,
    pub masked_fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Warnings {
    pub clamped: ClampCounts,
    pub masked: Vec<MapWarning>,
    pub skipped_stations: Vec<String>,
    pub messages: Vec<String>,
}

/// Summary of one run, written last as `<name>_manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub config_digest: String,
    pub mode: RunMode,
    pub station_count: usize,
    pub hours_per_station: usize,
    pub workers: usize,
    pub period_seconds: Vec<PeriodTiming>,
    pub render_seconds: f64,
    pub total_seconds: f64,
    pub indicator_dc_gain: Vec<(String, f64)>,
    pub warnings: Warnings,
    pub outputs: Vec<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub table: MapTable,
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
}

struct PeriodRun {
    results: Vec<StationResult>,
    failed: Vec<(String, Error)>,
    clamped: ClampCounts,
    hours: usize,
}

/// Result, clamp counts and hour count of one station.
type StationOutcome = (StationResult, ClampCounts, usize);

fn run_period(ds: &PeriodDataset, eval: &Evaluator, pool: &rayon::ThreadPool, keep_going: bool) -> Result<PeriodRun> {
    let total = ds.stations.len();
    let done = AtomicUsize::new(0);
    let one = |path: &PathBuf| -> Result<StationOutcome> {
        let id = station_id(path);
        let series = parse_climate_file(path).map_err(|e| Error::Station {
            station: id.clone(),
            source: Box::new(e),
        })?;
        let r = eval.evaluate(&series, &id)?;
        let n = done.fetch_add(1, Ordering::Relaxed) + 1;
        log::info!("[{}] {n}/{total} {id}", ds.key);
        Ok((r, *series.clamped(), series.n_hours()))
    };

    let outcomes: Vec<(String, Result<StationOutcome>)> = if keep_going {
        pool.install(|| ds.stations.par_iter().map(|p| (station_id(p), one(p))).collect())
    } else {
        let ok: Vec<_> = pool.install(|| ds.stations.par_iter().map(one).collect::<Result<Vec<_>>>())?;
        ok.into_iter().map(|r| (r.0.station_id.clone(), Ok(r))).collect()
    };

    let mut run = PeriodRun {
        results: Vec::with_capacity(total),
        failed: Vec::new(),
        clamped: ClampCounts::default(),
        hours: 0,
    };
    for (id, outcome) in outcomes {
        match outcome {
            Ok((r, c, hours)) => {
                run.clamped.add(&c);
                run.hours = run.hours.max(hours);
                run.results.push(r);
            }
            Err(e) => run.failed.push((id, e)),
        }
    }
    Ok(run)
}

/// Runs the whole three-period pipeline described by `cfg`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunOutput> {
    let t_start = Instant::now();
    let eval = Evaluator::from_config(cfg)?;
    cfg.grid.validate()?;
    let name_ok = !cfg.name.is_empty()
        && !cfg.name.starts_with('.')
        && cfg.name.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c));
    if !name_ok {
        return Err(Error::config(
            "name",
            format!("`{}` is not a file-name-safe identifier", cfg.name),
        ));
    }
    let dirs = cfg.period_dirs()?;
    let datasets = PeriodKey::ALL
        .iter()
        .zip(&dirs)
        .map(|(k, d)| PeriodDataset::scan(*k, d))
        .collect::<Result<Vec<_>>>()?;
    check_matching(&datasets)?;
    if datasets[0].stations.is_empty() {
        return Err(Error::Empty(format!("no .clim files in {}", datasets[0].dir.display())));
    }

    let gains = eval.climate_gains();
    for (channel, g) in &gains {
        log::info!("steady-state gain {channel} -> indicator: {g:.6e}");
    }

    let workers = if cfg.workers == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        cfg.workers
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Argument(format!("cannot start worker pool: {e}")))?;

    let mut warnings = Warnings::default();
    let mut timings = Vec::new();
    let mut runs = Vec::new();
    let mut hours = 0;
    for ds in &datasets {
        let t = Instant::now();
        let run = run_period(ds, &eval, &pool, cfg.skip_bad_stations)?;
        timings.push(PeriodTiming {
            period: ds.key,
            seconds: t.elapsed().as_secs_f64(),
        });
        warnings.clamped.add(&run.clamped);
        hours = hours.max(run.hours);
        for (id, e) in &run.failed {
            log::warn!("[{}] skipping station {id}: {e}", ds.key);
            warnings.messages.push(format!("{}: {id}: {e}", ds.key));
        }
        runs.push(run);
    }

    let mut bad: Vec<String> = runs.iter().flat_map(|r| r.failed.iter().map(|f| f.0.clone())).collect();
    bad.sort();
    bad.dedup();
    let keep = |rs: &[StationResult]| -> Vec<StationResult> {
        rs.iter()
            .filter(|r| bad.binary_search(&r.station_id).is_err())
            .cloned()
            .collect()
    };
    let table = assemble_map_table(
        &keep(&runs[0].results),
        &keep(&runs[1].results),
        &keep(&runs[2].results),
    )?;
    if table.rows.is_empty() {
        return Err(Error::Empty("every station failed".into()));
    }
    warnings.skipped_stations = bad.clone();
    if warnings.clamped.total() > 0 {
        log::warn!("{} out-of-range climate values were clamped", warnings.clamped.total());
    }

    let out = &cfg.out_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
    let mut outputs = Vec::new();
    let mapvar = out.join(format!("{}_mapvar.csv", cfg.name));
    write_map_table(&table, &mapvar)?;
    outputs.push(mapvar);
    for (ds, run) in datasets.iter().zip(&runs) {
        let p = out.join(format!("{}_{}.csv", cfg.name, ds.key));
        fs::write(&p, period_csv(&keep(&run.results))).map_err(|e| Error::io(format!("writing {}", p.display()), e))?;
        outputs.push(p);
    }

    let t_render = Instant::now();
    let maps = render_five(&table, &cfg.grid, &cfg.name, out)?;
    let render_seconds = t_render.elapsed().as_secs_f64();
    for m in &maps {
        outputs.push(m.png.clone());
        outputs.push(m.grid_csv.clone());
        warnings.masked.push(MapWarning {
            map: m.column.file_stem().to_string(),
            masked_fraction: m.masked_fraction,
        });
    }

    let manifest_path = out.join(format!("{}_manifest.json", cfg.name));
    let manifest = RunManifest {
        name: cfg.name.clone(),
        config_digest: cfg.digest(),
        mode: cfg.mode,
        station_count: table.rows.len(),
        hours_per_station: hours,
        workers,
        period_seconds: timings,
        render_seconds,
        total_seconds: t_start.elapsed().as_secs_f64(),
        indicator_dc_gain: gains,
        warnings,
        outputs,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(format!("writing {}", manifest_path.display()), e))?;
    Ok(RunOutput {
        table,
        manifest,
        manifest_path,
    })
}

/// Station placement for generated datasets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
}

impl Region {
    pub fn from_grid(g: &GridSpec) -> Self {
        Region {
            lon_min: g.lon_min,
            lon_max: g.lon_max,
            lat_min: g.lat_min,
            lat_max: g.lat_max,
        }
    }

    fn place(&self, u: f64, v: f64) -> (f64, f64) {
        (
            round_sig6(self.lon_min + u * (self.lon_max - self.lon_min)),
            round_sig6(self.lat_min + v * (self.lat_max - self.lat_min)),
        )
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// `n` stations spread over the region by a randomly shifted Halton
/// sequence (bases 2 and 3). The shift comes from `seed`.
pub fn halton_stations(n: usize, region: &Region, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let su: f64 = rng.random();
    let sv: f64 = rng.random();
    (1..=n as u64)
        .map(|i| {
            let u = (radical_inverse(i, 2) + su).fract();
            let v = (radical_inverse(i, 3) + sv).fract();
            region.place(u, v)
        })
        .collect()
}

/// `n` stations on a regular lattice over the region, filled row by row
/// from the north-west corner.
pub fn lattice_stations(n: usize, region: &Region) -> Vec<(f64, f64)> {
    if n == 0 {
        return Vec::new();
    }
    let aspect = (region.lon_max - region.lon_min) / (region.lat_max - region.lat_min);
    let cols = ((n as f64 * aspect).sqrt().ceil() as usize).clamp(1, n);
    let rows = n.div_ceil(cols);
    (0..n)
        .map(|k| {
            let (r, c) = (k / cols, k % cols);
            let u = (c as f64 + 0.5) / cols as f64;
            let v = 1.0 - (r as f64 + 0.5) / rows as f64;
            region.place(u, v)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnSummary {
    pub code: VarCode,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

pub fn summarize(series: &ClimateSeries) -> Vec<ColumnSummary> {
    VarCode::ALL
        .iter()
        .map(|&code| {
            let stat = |s| climate_stat(series, code, s).expect("series is non-empty");
            ColumnSummary {
                code,
                min: stat(Statistic::Min),
                mean: stat(Statistic::Mean),
                max: stat(Statistic::Max),
            }
        })
        .collect()
}
