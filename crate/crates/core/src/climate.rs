//! Hourly per-station climate series: the CLIM1 text format, load-time
//! clamping, the derived direct-radiation column, and a deterministic
//! synthetic generator for test and demo datasets.
//!
//! A CLIM1 file looks like:
//!
//! ```text
//! CLIM1
//! LON 4.9
//! LAT 52.37
//! HGT 0
//! TZ 1
//! DT 1
//! COLS TA HREL ISGH ISD PSTA RN WD WS CI ILAH ILTH GT GR
//! 3.5625 86.2 0 0 101325 0 213.5 4.1 0.42 330 330 10.2 0.2
//! ...
//! ```
//!
//! Numbers are written with at most 6 significant digits. Lines starting with
//! `#` after the first line are ignored.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numfmt::{format_sig, round_sig};

pub const HOURS_PER_YEAR: usize = 8760;
pub const MAGIC: &str = "CLIM1";
pub const FILE_EXTENSION: &str = "clim";

/// Climate variable codes. The first 13 are stored in files; `ISvar` is
/// derived on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VarCode {
    TA,
    HREL,
    ISGH,
    ISD,
    PSTA,
    RN,
    WD,
    WS,
    CI,
    ILAH,
    ILTH,
    GT,
    GR,
    ISvar,
}

impl VarCode {
    pub const ALL: [VarCode; 14] = [
        VarCode::TA,
        VarCode::HREL,
        VarCode::ISGH,
        VarCode::ISD,
        VarCode::PSTA,
        VarCode::RN,
        VarCode::WD,
        VarCode::WS,
        VarCode::CI,
        VarCode::ILAH,
        VarCode::ILTH,
        VarCode::GT,
        VarCode::GR,
        VarCode::ISvar,
    ];

    pub const STORED: usize = 13;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VarCode::TA => "TA",
            VarCode::HREL => "HREL",
            VarCode::ISGH => "ISGH",
            VarCode::ISD => "ISD",
            VarCode::PSTA => "PSTA",
            VarCode::RN => "RN",
            VarCode::WD => "WD",
            VarCode::WS => "WS",
            VarCode::CI => "CI",
            VarCode::ILAH => "ILAH",
            VarCode::ILTH => "ILTH",
            VarCode::GT => "GT",
            VarCode::GR => "GR",
            VarCode::ISvar => "ISvar",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            VarCode::TA | VarCode::GT => "°C",
            VarCode::HREL => "%",
            VarCode::ISGH | VarCode::ISD | VarCode::ILAH | VarCode::ILTH | VarCode::ISvar => "W/m²",
            VarCode::PSTA => "Pa",
            VarCode::RN => "mm/h",
            VarCode::WD => "°",
            VarCode::WS => "m/s",
            VarCode::CI | VarCode::GR => "-",
        }
    }
}

impl fmt::Display for VarCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VarCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VarCode::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown climate variable `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoHeader {
    pub longitude: f64,
    pub latitude: f64,
    pub height: f64,
    pub time_zone: f64,
    pub time_step: f64,
}

impl GeoHeader {
    pub fn new(longitude: f64, latitude: f64) -> Self {
        GeoHeader {
            longitude,
            latitude,
            height: 0.0,
            time_zone: 0.0,
            time_step: 1.0,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.longitude > -180.0 && self.longitude <= 180.0) {
            return Err(format!("longitude {} outside (-180, 180]", self.longitude));
        }
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(format!("latitude {} outside [-90, 90]", self.latitude));
        }
        if !self.height.is_finite() || !self.time_zone.is_finite() {
            return Err("height and time zone must be finite".into());
        }
        if self.time_step != 1.0 {
            return Err(format!("time step {} h, only hourly data is supported", self.time_step));
        }
        Ok(())
    }
}

/// Number of values clamped into range while loading a series.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClampCounts {
    pub hrel: usize,
    pub isgh: usize,
    pub isd: usize,
    pub ws: usize,
}

impl ClampCounts {
    pub fn total(&self) -> usize {
        self.hrel + self.isgh + self.isd + self.ws
    }

    pub fn add(&mut self, other: &ClampCounts) {
        self.hrel += other.hrel;
        self.isgh += other.isgh;
        self.isd += other.isd;
        self.ws += other.ws;
    }
}

/// One station's hourly climate. Immutable once built: all 14 columns have
/// `n_hours` entries and the clamping rules hold.
#[derive(Debug, Clone, PartialEq)]
pub struct ClimateSeries {
    header: GeoHeader,
    columns: Vec<Vec<f64>>,
    clamped: ClampCounts,
}

impl ClimateSeries {
    /// Builds a series from the 13 stored columns (in [`VarCode::ALL`]
    /// order), clamping out-of-range values and deriving `ISvar`.
    pub fn from_stored(header: GeoHeader, mut stored: Vec<Vec<f64>>) -> Result<Self> {
        header.validate().map_err(Error::Argument)?;
        if stored.len() != VarCode::STORED {
            return Err(Error::Length(format!(
                "{} stored columns, expected {}",
                stored.len(),
                VarCode::STORED
            )));
        }
        let n = stored[0].len();
        if let Some(bad) = stored.iter().position(|c| c.len() != n) {
            return Err(Error::Length(format!(
                "column {} has {} rows, {} has {n}",
                VarCode::ALL[bad],
                stored[bad].len(),
                VarCode::TA
            )));
        }
        check_hours(n)?;

        let mut clamped = ClampCounts::default();
        for v in stored[VarCode::HREL.index()].iter_mut() {
            if *v < 0.0 || *v > 100.0 {
                *v = v.clamp(0.0, 100.0);
                clamped.hrel += 1;
            }
        }
        for (code, count) in [
            (VarCode::ISGH, &mut clamped.isgh),
            (VarCode::ISD, &mut clamped.isd),
            (VarCode::WS, &mut clamped.ws),
        ] {
            for v in stored[code.index()].iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                    *count += 1;
                }
            }
        }
        let isvar = derive_isvar(&stored[VarCode::ISGH.index()], &stored[VarCode::ISD.index()])?;
        stored.push(isvar);
        Ok(ClimateSeries {
            header,
            columns: stored,
            clamped,
        })
    }

    pub fn header(&self) -> &GeoHeader {
        &self.header
    }

    pub fn n_hours(&self) -> usize {
        self.columns[0].len()
    }

    pub fn column(&self, code: VarCode) -> &[f64] {
        &self.columns[code.index()]
    }

    pub fn clamped(&self) -> &ClampCounts {
        &self.clamped
    }
}

fn check_hours(n: usize) -> Result<()> {
    if n == 0 || !n.is_multiple_of(HOURS_PER_YEAR) {
        return Err(Error::Length(format!(
            "{n} hourly rows is not a positive multiple of {HOURS_PER_YEAR}"
        )));
    }
    Ok(())
}

/// Direct horizontal radiation as `max(ISGH - ISD, 0)`.
pub fn derive_isvar(isgh: &[f64], isd: &[f64]) -> Result<Vec<f64>> {
    if isgh.len() != isd.len() {
        return Err(Error::Length(format!(
            "ISGH has {} values, ISD has {}",
            isgh.len(),
            isd.len()
        )));
    }
    Ok(isgh.iter().zip(isd).map(|(g, d)| (g - d).max(0.0)).collect())
}

/// Formats `v` with at most 6 significant digits, the file's precision.
pub fn format_sig6(v: f64, out: &mut String) {
    format_sig(v, 6, out)
}

/// Rounds `v` to the value its 6-significant-digit text parses back to.
pub fn round_sig6(v: f64) -> f64 {
    round_sig(v, 6)
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

pub fn parse_climate_file(path: &Path) -> Result<ClimateSeries> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_climate_str(&text, path)
}

/// Parses CLIM1 text. `path` is only used in error messages.
pub fn parse_climate_str(text: &str, path: &Path) -> Result<ClimateSeries> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    match lines.next() {
        Some((_, l)) if l.trim_end() == MAGIC => {}
        Some((n, l)) => return Err(parse_err(path, n, format!("expected `{MAGIC}`, found `{l}`"))),
        None => return Err(parse_err(path, 1, "empty file")),
    }
    let mut lines = lines.filter(|(_, l)| {
        let t = l.trim_start();
        !t.is_empty() && !t.starts_with('#')
    });

    let mut header_vals = [0.0; 5];
    let mut header_lines = [0usize; 5];
    for ((slot, at), key) in header_vals
        .iter_mut()
        .zip(header_lines.iter_mut())
        .zip(["LON", "LAT", "HGT", "TZ", "DT"])
    {
        let (n, l) = lines
            .next()
            .ok_or_else(|| parse_err(path, 0, format!("missing `{key}` header line")))?;
        let mut parts = l.split_ascii_whitespace();
        if parts.next() != Some(key) {
            return Err(parse_err(path, n, format!("expected `{key} <value>`, found `{l}`")));
        }
        let v = parts
            .next()
            .and_then(|t| t.parse::<f64>().ok())
            .filter(|v| v.is_finite())
            .ok_or_else(|| parse_err(path, n, format!("bad value for `{key}`")))?;
        if parts.next().is_some() {
            return Err(parse_err(path, n, format!("trailing tokens after `{key}`")));
        }
        *slot = v;
        *at = n;
    }
    let header = GeoHeader {
        longitude: header_vals[0],
        latitude: header_vals[1],
        height: header_vals[2],
        time_zone: header_vals[3],
        time_step: header_vals[4],
    };
    if let Err(reason) = header.validate() {
        let field = if reason.starts_with("longitude") {
            0
        } else if reason.starts_with("latitude") {
            1
        } else if reason.starts_with("time step") {
            4
        } else {
            2
        };
        return Err(parse_err(path, header_lines[field], reason));
    }

    let (n, l) = lines.next().ok_or_else(|| parse_err(path, 0, "missing `COLS` line"))?;
    let cols: Vec<&str> = l.split_ascii_whitespace().collect();
    let want: Vec<&str> = std::iter::once("COLS")
        .chain(VarCode::ALL[..VarCode::STORED].iter().map(|c| c.as_str()))
        .collect();
    if cols != want {
        return Err(parse_err(path, n, format!("expected `{}`", want.join(" "))));
    }

    let estimate = text.len() / 60;
    let mut stored: Vec<Vec<f64>> = (0..VarCode::STORED).map(|_| Vec::with_capacity(estimate)).collect();
    for (n, l) in lines {
        let mut count = 0;
        for tok in l.split_ascii_whitespace() {
            if count == VarCode::STORED {
                return Err(parse_err(path, n, "more than 13 values in row"));
            }
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(path, n, format!("bad number `{tok}`")))?;
            if !v.is_finite() {
                return Err(parse_err(path, n, format!("non-finite value `{tok}`")));
            }
            stored[count].push(v);
            count += 1;
        }
        if count != VarCode::STORED {
            return Err(parse_err(path, n, format!("{count} values in row, expected 13")));
        }
    }
    ClimateSeries::from_stored(header, stored)
}

/// Writes the 13 stored columns in CLIM1 format. `ISvar` is not written.
pub fn write_climate_file(series: &ClimateSeries, path: &Path) -> Result<()> {
    let ctx = || format!("writing {}", path.display());
    let file = fs::File::create(path).map_err(|e| Error::io(ctx(), e))?;
    let mut w = BufWriter::with_capacity(1 << 20, file);
    let text = render_header(series.header());
    w.write_all(text.as_bytes()).map_err(|e| Error::io(ctx(), e))?;

    let mut line = String::with_capacity(128);
    for k in 0..series.n_hours() {
        line.clear();
        for (j, col) in series.columns[..VarCode::STORED].iter().enumerate() {
            if j > 0 {
                line.push(' ');
            }
            format_sig6(col[k], &mut line);
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(|e| Error::io(ctx(), e))?;
    }
    w.flush().map_err(|e| Error::io(ctx(), e))
}

fn render_header(h: &GeoHeader) -> String {
    let mut s = String::from(MAGIC);
    s.push('\n');
    for (key, v) in [
        ("LON", h.longitude),
        ("LAT", h.latitude),
        ("HGT", h.height),
        ("TZ", h.time_zone),
        ("DT", h.time_step),
    ] {
        s.push_str(key);
        s.push(' ');
        format_sig6(v, &mut s);
        s.push('\n');
    }
    s.push_str("COLS");
    for c in &VarCode::ALL[..VarCode::STORED] {
        s.push(' ');
        s.push_str(c.as_str());
    }
    s.push('\n');
    s
}

/// Sine of the solar elevation angle for latitude `lat` (degrees), day of
/// year `day` (1..=365) and solar hour `hour` (0..24).
pub fn sin_solar_elevation(lat: f64, day: usize, hour: usize) -> f64 {
    let decl = (-23.44f64).to_radians() * (std::f64::consts::TAU * (day as f64 + 10.0) / 365.0).cos();
    let hour_angle = (15.0 * (hour as f64 - 12.0)).to_radians();
    let phi = lat.to_radians();
    phi.sin() * decl.sin() + phi.cos() * decl.cos() * hour_angle.cos()
}

/// Air temperature without noise or scenario offset.
pub fn synthetic_temperature_trend(lat: f64, day: usize, hour: usize) -> f64 {
    use std::f64::consts::TAU;
    let mean = 25.0 - 0.6 * (lat - 35.0);
    let seasonal = (8.0 + 0.15 * (lat - 35.0).abs()) * (TAU * (day as f64 - 196.0) / 365.0).cos();
    let diurnal = 4.0 * (TAU * (hour as f64 - 14.0) / 24.0).cos();
    mean + seasonal + diurnal
}

// Temperatures are snapped to 1/16 K before the offset is added, so that an
// offset that is itself a multiple of 1/16 K shifts the written file exactly.
const TA_QUANTUM: f64 = 1.0 / 16.0;

/// Deterministic synthetic station: seasonal and diurnal temperature cycles
/// with seeded noise, clear-sky radiation attenuated by a random cloud
/// index, and plausible constants for the remaining variables. All values
/// are exactly representable in the file format, so writing and re-reading
/// a generated series is lossless.
pub fn generate_station(lon: f64, lat: f64, years: usize, offset_t: f64, seed: u64) -> Result<ClimateSeries> {
    if years < 1 {
        return Err(Error::Argument("years must be at least 1".into()));
    }
    if !offset_t.is_finite() {
        return Err(Error::Argument("temperature offset must be finite".into()));
    }
    let header = GeoHeader::new(lon, lat);
    header.validate().map_err(Error::Argument)?;

    let n = years * HOURS_PER_YEAR;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols: Vec<Vec<f64>> = (0..VarCode::STORED).map(|_| Vec::with_capacity(n)).collect();

    for t in 0..n {
        let day = (t / 24) % 365 + 1;
        let hour = t % 24;
        let noise_t: f64 = rng.random_range(-1.5..=1.5);
        let ci: f64 = rng.random_range(0.0..=1.0);
        let noise_h: f64 = rng.random_range(-5.0..=5.0);
        let noise_w: f64 = rng.random_range(-3.0..=3.0);
        let wd: f64 = rng.random_range(0.0..360.0);

        let base = synthetic_temperature_trend(lat, day, hour) + noise_t;
        let ta = round_sig6((base / TA_QUANTUM).round() * TA_QUANTUM + offset_t);
        let ci = round_sig6(ci);
        let isgh = round_sig6((950.0 * sin_solar_elevation(lat, day, hour)).max(0.0) * (1.0 - 0.75 * ci));
        let isd = round_sig6(isgh * (0.25 + 0.55 * ci));
        let hrel = round_sig6((78.0 - 1.1 * (ta - 10.0) + noise_h).clamp(5.0, 100.0));
        let ws = round_sig6((3.5 + noise_w).abs());

        let row = [
            ta,
            hrel,
            isgh,
            isd,
            101325.0,
            0.0,
            round_sig6(wd),
            ws,
            ci,
            330.0,
            330.0,
            0.0, // ground temperature, filled below
            0.2,
        ];
        for (col, v) in cols.iter_mut().zip(row) {
            col.push(v);
        }
    }

    let (ta, gt) = {
        let (a, b) = cols.split_at_mut(VarCode::GT.index());
        (&a[VarCode::TA.index()], &mut b[0])
    };
    for (ta_year, gt_year) in ta.chunks(HOURS_PER_YEAR).zip(gt.chunks_mut(HOURS_PER_YEAR)) {
        let mean = round_sig6(ta_year.iter().sum::<f64>() / HOURS_PER_YEAR as f64);
        gt_year.fill(mean);
    }

    ClimateSeries::from_stored(header, cols)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeriodKey {
    Past,
    Near,
    Far,
}

impl PeriodKey {
    pub const ALL: [PeriodKey; 3] = [PeriodKey::Past, PeriodKey::Near, PeriodKey::Far];

    pub fn key(self) -> &'static str {
        match self {
            PeriodKey::Past => "past",
            PeriodKey::Near => "near",
            PeriodKey::Far => "far",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            PeriodKey::Past => "Past",
            PeriodKey::Near => "Near Future",
            PeriodKey::Far => "Far Future",
        }
    }

    pub fn years(self) -> &'static str {
        match self {
            PeriodKey::Past => "1960-1990",
            PeriodKey::Near => "2020-2050",
            PeriodKey::Far => "2070-2100",
        }
    }
}

impl fmt::Display for PeriodKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// The climate files of one period: every `*.clim` file in `dir`, sorted by
/// file name.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodDataset {
    pub key: PeriodKey,
    pub dir: PathBuf,
    pub stations: Vec<PathBuf>,
}

impl PeriodDataset {
    pub fn scan(key: PeriodKey, dir: &Path) -> Result<Self> {
        let entries = fs::read_dir(dir).map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
        let mut stations = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
            let path = entry.path();
            if path.is_file() && path.extension().is_some_and(|e| e == FILE_EXTENSION) {
                stations.push(path);
            }
        }
        stations.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
        Ok(PeriodDataset {
            key,
            dir: dir.to_path_buf(),
            stations,
        })
    }

    pub fn station_ids(&self) -> Vec<String> {
        self.stations.iter().map(|p| station_id(p)).collect()
    }
}

/// Station identifier: the file name without its extension.
pub fn station_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Checks that the datasets hold the same station file names.
pub fn check_matching(datasets: &[PeriodDataset]) -> Result<()> {
    let Some(first) = datasets.first() else {
        return Ok(());
    };
    let ids = first.station_ids();
    for ds in &datasets[1..] {
        let other = ds.station_ids();
        if other != ids {
            let missing = ids
                .iter()
                .find(|id| !other.contains(id))
                .map(|id| format!("`{id}` is in {} but not in {}", first.key, ds.key))
                .or_else(|| {
                    other
                        .iter()
                        .find(|id| !ids.contains(id))
                        .map(|id| format!("`{id}` is in {} but not in {}", ds.key, first.key))
                })
                .unwrap_or_else(|| "station lists differ".into());
            return Err(Error::Join(missing));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOffsets {
    pub near: f64,
    pub far: f64,
}

impl ScenarioOffsets {
    pub fn for_period(&self, key: PeriodKey) -> f64 {
        match key {
            PeriodKey::Past => 0.0,
            PeriodKey::Near => self.near,
            PeriodKey::Far => self.far,
        }
    }
}

/// SplitMix64 finalizer, used to derive independent per-station seeds.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// File name used by [`generate_dataset`] for station `index`.
pub fn station_file_name(index: usize) -> String {
    format!("st{index:04}.{FILE_EXTENSION}")
}

/// Writes one file per station per period under `out_dir/{past,near,far}/`.
/// The three periods of one station share a seed and differ only by the
/// temperature offset.
pub fn generate_dataset(
    stations: &[(f64, f64)],
    years: usize,
    offsets: ScenarioOffsets,
    seed: u64,
    out_dir: &Path,
) -> Result<[PeriodDataset; 3]> {
    if stations.is_empty() {
        return Err(Error::Argument("no stations to generate".into()));
    }
    for key in PeriodKey::ALL {
        let dir = out_dir.join(key.key());
        fs::create_dir_all(&dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    stations
        .par_iter()
        .enumerate()
        .try_for_each(|(i, &(lon, lat))| -> Result<()> {
            let station_seed = mix_seed(seed, i as u64);
            for key in PeriodKey::ALL {
                let series = generate_station(lon, lat, years, offsets.for_period(key), station_seed)?;
                let path = out_dir.join(key.key()).join(station_file_name(i));
                write_climate_file(&series, &path)?;
            }
            Ok(())
        })?;
    let scan = |k| PeriodDataset::scan(k, &out_dir.join(PeriodKey::key(k)));
    Ok([scan(PeriodKey::Past)?, scan(PeriodKey::Near)?, scan(PeriodKey::Far)?])
}
