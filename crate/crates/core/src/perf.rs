//! Performance indicators: reduce a stream of model outputs (or a raw
//! climate column) to one value per station, and join the three periods
//! into the map table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::climate::{ClimateSeries, GeoHeader, PeriodKey, VarCode};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::numfmt::format_sig;
use crate::statespace::{discretize_zoh, simulate, DiscreteModel, InputSource};
use crate::systems::{assemble_inputs, SystemSpec};

/// Seconds per climate time step.
pub const HOURLY_DT: f64 = 3600.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    #[default]
    Mean,
    Min,
    Max,
    /// Percentile `q` in `[0, 100]`, linear between order statistics.
    Percentile(f64),
    /// Fraction of steps strictly above the threshold.
    FractionAbove(f64),
}

impl Statistic {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Statistic::Percentile(q) if !(0.0..=100.0).contains(&q) => {
                Err(Error::config("statistic", format!("percentile {q} outside [0, 100]")))
            }
            Statistic::FractionAbove(t) if !t.is_finite() => {
                Err(Error::config("statistic", "threshold must be finite"))
            }
            _ => Ok(()),
        }
    }
}

/// `s_k = weights · y_k + offset`, reduced over all steps by `statistic`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerformanceIndicator {
    pub weights: Vec<f64>,
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub statistic: Statistic,
    /// Leading steps left out of the statistic.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub skip_hours: usize,
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

impl PerformanceIndicator {
    pub fn validate(&self, outputs: usize) -> Result<()> {
        if self.weights.len() != outputs {
            return Err(Error::config(
                "indicator.weights",
                format!("{} weights for {outputs} outputs", self.weights.len()),
            ));
        }
        if self.weights.iter().any(|w| !w.is_finite()) || !self.offset.is_finite() {
            return Err(Error::config("indicator", "weights and offset must be finite"));
        }
        self.statistic.validate().map_err(|e| match e {
            Error::Config { reason, .. } => Error::config("indicator.statistic", reason),
            e => e,
        })
    }

    #[inline]
    pub fn scalar(&self, y: &[f64]) -> f64 {
        dot(&self.weights, y) + self.offset
    }
}

/// Online reduction of a scalar stream. Mean uses Neumaier-compensated
/// summation in stream order; percentiles buffer the values.
#[derive(Debug, Clone)]
pub struct Reducer {
    statistic: Statistic,
    count: usize,
    sum: f64,
    compensation: f64,
    min: f64,
    max: f64,
    above: usize,
    buffer: Vec<f64>,
}

impl Reducer {
    pub fn new(statistic: Statistic) -> Self {
        Reducer {
            statistic,
            count: 0,
            sum: 0.0,
            compensation: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            above: 0,
            buffer: Vec::new(),
        }
    }

    pub fn with_capacity(statistic: Statistic, n: usize) -> Self {
        let mut r = Reducer::new(statistic);
        if matches!(statistic, Statistic::Percentile(_)) {
            r.buffer.reserve(n);
        }
        r
    }

    #[inline]
    pub fn push(&mut self, s: f64) {
        self.count += 1;
        match self.statistic {
            Statistic::Mean => {
                let t = self.sum + s;
                if self.sum.abs() >= s.abs() {
                    self.compensation += (self.sum - t) + s;
                } else {
                    self.compensation += (s - t) + self.sum;
                }
                self.sum = t;
            }
            Statistic::Min => self.min = self.min.min(s),
            Statistic::Max => self.max = self.max.max(s),
            Statistic::Percentile(_) => self.buffer.push(s),
            Statistic::FractionAbove(t) => {
                if s > t {
                    self.above += 1;
                }
            }
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(self) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::Empty("no values to reduce".into()));
        }
        let n = self.count as f64;
        Ok(match self.statistic {
            Statistic::Mean => (self.sum + self.compensation) / n,
            Statistic::Min => self.min,
            Statistic::Max => self.max,
            Statistic::FractionAbove(_) => self.above as f64 / n,
            Statistic::Percentile(q) => {
                let mut v = self.buffer;
                v.sort_by(f64::total_cmp);
                percentile_sorted(&v, q)
            }
        })
    }
}

fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q / 100.0;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Reduces output vectors to one indicator value.
pub fn reduce_stream<I, Y>(indicator: &PerformanceIndicator, ys: I) -> Result<f64>
where
    I: IntoIterator<Item = Y>,
    Y: AsRef<[f64]>,
{
    let mut r = Reducer::new(indicator.statistic);
    for (k, y) in ys.into_iter().enumerate() {
        if k >= indicator.skip_hours {
            r.push(indicator.scalar(y.as_ref()));
        }
    }
    r.finish()
}

/// Applies a statistic straight to one climate column, without a model.
pub fn climate_stat(series: &ClimateSeries, code: VarCode, statistic: Statistic) -> Result<f64> {
    statistic.validate()?;
    let col = series.column(code);
    let mut r = Reducer::with_capacity(statistic, col.len());
    for &v in col {
        r.push(v);
    }
    r.finish()
}

/// One station's value for one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationResult {
    pub station_id: String,
    pub lon: f64,
    pub lat: f64,
    pub value: f64,
}

impl StationResult {
    pub fn new(station_id: impl Into<String>, header: &GeoHeader, value: f64) -> Self {
        StationResult {
            station_id: station_id.into(),
            lon: header.longitude,
            lat: header.latitude,
            value,
        }
    }
}

/// A system spec with its model discretized at the hourly step, ready to be
/// run against any number of stations.
#[derive(Debug, Clone)]
pub struct PreparedSystem {
    pub spec: SystemSpec,
    pub discrete: DiscreteModel,
}

impl PreparedSystem {
    pub fn new(spec: SystemSpec) -> Result<Self> {
        spec.validate()?;
        let discrete = discretize_zoh(&spec.model, HOURLY_DT)?;
        Ok(PreparedSystem { spec, discrete })
    }

    /// Simulates the whole series and reduces the outputs with the spec's
    /// indicator.
    pub fn run(&self, series: &ClimateSeries, station_id: &str) -> Result<StationResult> {
        let tag = |e: Error| Error::Station {
            station: station_id.to_string(),
            source: Box::new(e),
        };
        let inputs = assemble_inputs(&self.spec.bindings, series).map_err(tag)?;
        let mut u0 = vec![0.0; inputs.width()];
        inputs.fill(0, &mut u0);
        let x0 = self.spec.initial_state(&u0).map_err(tag)?;

        let ind = &self.spec.indicator;
        let mut reducer = Reducer::with_capacity(ind.statistic, inputs.len());
        simulate(&self.discrete, &inputs, &x0, |k, y| {
            if k >= ind.skip_hours {
                reducer.push(ind.scalar(y));
            }
        })
        .map_err(tag)?;
        let value = reducer.finish().map_err(tag)?;
        Ok(StationResult::new(station_id, series.header(), value))
    }
}

/// Simulates one station: inputs from the bindings, hourly ZOH stepping, and
/// the indicator reduction applied as the outputs stream by.
pub fn run_station(spec: &SystemSpec, series: &ClimateSeries, station_id: &str) -> Result<StationResult> {
    PreparedSystem::new(spec.clone())?.run(series, station_id)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapRow {
    pub station_id: String,
    pub lon: f64,
    pub lat: f64,
    pub past: f64,
    pub near: f64,
    pub far: f64,
    pub diff_near: f64,
    pub diff_far: f64,
}

/// Per-station values for the three periods and the two future-minus-past
/// differences, sorted by station id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MapTable {
    pub rows: Vec<MapRow>,
}

/// The five mapped quantities, in figure order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapColumn {
    Past,
    Near,
    Far,
    DiffNear,
    DiffFar,
}

impl MapColumn {
    pub const ALL: [MapColumn; 5] = [
        MapColumn::Past,
        MapColumn::Near,
        MapColumn::Far,
        MapColumn::DiffNear,
        MapColumn::DiffFar,
    ];

    /// Figure title.
    pub fn title(self) -> &'static str {
        match self {
            MapColumn::Past => "Past",
            MapColumn::Near => "Near Future",
            MapColumn::Far => "Far Future",
            MapColumn::DiffNear => "Difference Near Future and Past",
            MapColumn::DiffFar => "Difference Far Future and Past",
        }
    }

    /// Suffix used in output file names.
    pub fn file_stem(self) -> &'static str {
        match self {
            MapColumn::Past => "Past",
            MapColumn::Near => "NearFuture",
            MapColumn::Far => "FarFuture",
            MapColumn::DiffNear => "DiffNearPast",
            MapColumn::DiffFar => "DiffFarPast",
        }
    }

    pub fn is_difference(self) -> bool {
        matches!(self, MapColumn::DiffNear | MapColumn::DiffFar)
    }
}

impl MapRow {
    pub fn get(&self, col: MapColumn) -> f64 {
        match col {
            MapColumn::Past => self.past,
            MapColumn::Near => self.near,
            MapColumn::Far => self.far,
            MapColumn::DiffNear => self.diff_near,
            MapColumn::DiffFar => self.diff_far,
        }
    }
}

impl MapTable {
    pub fn column(&self, col: MapColumn) -> Vec<(f64, f64, f64)> {
        self.rows.iter().map(|r| (r.lon, r.lat, r.get(col))).collect()
    }
}

fn index_by_id(results: &[StationResult], period: PeriodKey) -> Result<BTreeMap<&str, &StationResult>> {
    let mut map = BTreeMap::new();
    for r in results {
        if map.insert(r.station_id.as_str(), r).is_some() {
            return Err(Error::Join(format!(
                "station `{}` appears twice in {period}",
                r.station_id
            )));
        }
    }
    Ok(map)
}

/// Joins the three periods by station id.
pub fn assemble_map_table(past: &[StationResult], near: &[StationResult], far: &[StationResult]) -> Result<MapTable> {
    let p = index_by_id(past, PeriodKey::Past)?;
    let n = index_by_id(near, PeriodKey::Near)?;
    let f = index_by_id(far, PeriodKey::Far)?;
    for (other, key) in [(&n, PeriodKey::Near), (&f, PeriodKey::Far)] {
        if let Some(id) = p.keys().find(|id| !other.contains_key(*id)) {
            return Err(Error::Join(format!("station `{id}` is missing from {key}")));
        }
        if let Some(id) = other.keys().find(|id| !p.contains_key(*id)) {
            return Err(Error::Join(format!("station `{id}` is missing from past")));
        }
    }
    let rows = p
        .iter()
        .map(|(id, pr)| {
            let near = n[id].value;
            let far = f[id].value;
            MapRow {
                station_id: id.to_string(),
                lon: pr.lon,
                lat: pr.lat,
                past: pr.value,
                near,
                far,
                diff_near: near - pr.value,
                diff_far: far - pr.value,
            }
        })
        .collect();
    Ok(MapTable { rows })
}

pub const MAPVAR_HEADER: &str = "station,lon,lat,past,near,far,diff_near,diff_far";

fn push9(out: &mut String, v: f64) {
    out.push(',');
    format_sig(v, 9, out);
}

pub fn map_table_csv(table: &MapTable) -> String {
    let mut s = String::from(MAPVAR_HEADER);
    s.push('\n');
    for r in &table.rows {
        s.push_str(&r.station_id);
        for v in [r.lon, r.lat, r.past, r.near, r.far, r.diff_near, r.diff_far] {
            push9(&mut s, v);
        }
        s.push('\n');
    }
    s
}

pub fn period_csv(results: &[StationResult]) -> String {
    let mut sorted: Vec<&StationResult> = results.iter().collect();
    sorted.sort_by(|a, b| a.station_id.cmp(&b.station_id));
    let mut s = String::from("station,lon,lat,value\n");
    for r in sorted {
        s.push_str(&r.station_id);
        for v in [r.lon, r.lat, r.value] {
            push9(&mut s, v);
        }
        let _ = writeln!(s);
    }
    s
}

pub fn write_map_table(table: &MapTable, path: &Path) -> Result<()> {
    fs::write(path, map_table_csv(table)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Reads a map table CSV written by [`write_map_table`].
pub fn read_map_table(path: &Path) -> Result<MapTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let perr = |line: usize, reason: &str| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.to_string(),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == MAPVAR_HEADER => {}
        _ => return Err(perr(1, "unexpected header")),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 8 {
            return Err(perr(i + 1, "expected 8 fields"));
        }
        let mut v = [0.0; 7];
        for (slot, tok) in v.iter_mut().zip(&parts[1..]) {
            *slot = tok.parse().map_err(|_| perr(i + 1, "bad number"))?;
        }
        rows.push(MapRow {
            station_id: parts[0].to_string(),
            lon: v[0],
            lat: v[1],
            past: v[2],
            near: v[3],
            far: v[4],
            diff_near: v[5],
            diff_far: v[6],
        });
    }
    Ok(MapTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::climate::HOURS_PER_YEAR;
    use crate::statespace::steady_state;
    use crate::systems::{build_hvac, build_solar_collector, HvacConstants, ScConstants};

    fn ind(weights: Vec<f64>, offset: f64, statistic: Statistic) -> PerformanceIndicator {
        PerformanceIndicator {
            weights,
            offset,
            statistic,
            skip_hours: 0,
        }
    }

    fn series(ta: f64, isgh: f64) -> ClimateSeries {
        let n = HOURS_PER_YEAR;
        let mut cols = vec![vec![0.0; n]; VarCode::STORED];
        cols[VarCode::TA.index()] = vec![ta; n];
        cols[VarCode::ISGH.index()] = vec![isgh; n];
        cols[VarCode::WS.index()] = (0..n).map(|k| (k % 7) as f64).collect();
        ClimateSeries::from_stored(GeoHeader::new(3.0, 51.0), cols).unwrap()
    }

    #[test]
    fn mean_of_three() {
        let v = reduce_stream(&ind(vec![1.0], 0.0, Statistic::Mean), [[1.0], [2.0], [3.0]]).unwrap();
        assert_eq!(v, 2.0);
    }

    #[test]
    fn hvac_indicator_on_one_kelvin_lift() {
        let i = ind(vec![0.0, 0.0, 0.0, 0.0, 201.0], -201.0 * 22.0, Statistic::Mean);
        let ys = vec![[0.0, 0.0, 0.0, 0.0, 23.0]; 10];
        assert!((reduce_stream(&i, ys).unwrap() - 201.0).abs() < 1e-12);
    }

    #[test]
    fn other_statistics() {
        let s = [[-1.0], [2.0], [3.0], [-4.0]];
        let r = |st| reduce_stream(&ind(vec![1.0], 0.0, st), s).unwrap();
        assert_eq!(r(Statistic::FractionAbove(0.0)), 0.5);
        assert_eq!(r(Statistic::Min), -4.0);
        assert_eq!(r(Statistic::Max), 3.0);
        assert_eq!(r(Statistic::Percentile(0.0)), -4.0);
        assert_eq!(r(Statistic::Percentile(100.0)), 3.0);
        // sorted [-4, -1, 2, 3]; h = 1.5 -> halfway between -1 and 2
        assert_eq!(r(Statistic::Percentile(50.0)), 0.5);
    }

    #[test]
    fn empty_stream() {
        let err = reduce_stream(&ind(vec![1.0], 0.0, Statistic::Mean), Vec::<[f64; 1]>::new());
        assert!(matches!(err, Err(Error::Empty(_))));
        let mut i = ind(vec![1.0], 0.0, Statistic::Mean);
        i.skip_hours = 5;
        assert!(reduce_stream(&i, [[1.0]; 5]).is_err());
        assert_eq!(
            reduce_stream(&i, [[1.0], [1.0], [1.0], [1.0], [1.0], [7.0]]).unwrap(),
            7.0
        );
    }

    #[test]
    fn compensated_mean_keeps_digits() {
        // 1e8 followed by many 0.1s: a naive running sum loses the tail.
        let mut values = vec![1e8];
        values.extend(std::iter::repeat_n(0.1, 300_000));
        let mut r = Reducer::new(Statistic::Mean);
        for v in &values {
            r.push(*v);
        }
        let want = (1e8 + 30_000.0) / 300_001.0;
        assert!((r.finish().unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn climate_stat_modes() {
        let s = series(10.0, 0.0);
        assert_eq!(climate_stat(&s, VarCode::TA, Statistic::Mean).unwrap(), 10.0);
        assert!(climate_stat(&s, VarCode::WS, Statistic::Min).unwrap() >= 0.0);
        assert_eq!(climate_stat(&s, VarCode::WS, Statistic::Max).unwrap(), 6.0);
        assert!(climate_stat(&s, VarCode::TA, Statistic::Percentile(120.0)).is_err());
    }

    #[test]
    fn map_table_join() {
        let r = |id: &str, v| StationResult {
            station_id: id.into(),
            lon: 1.0,
            lat: 2.0,
            value: v,
        };
        let t = assemble_map_table(&[r("a", 5.0)], &[r("a", 7.0)], &[r("a", 9.0)]).unwrap();
        let row = &t.rows[0];
        assert_eq!(
            (row.past, row.near, row.far, row.diff_near, row.diff_far),
            (5.0, 7.0, 9.0, 2.0, 4.0)
        );

        let same = [r("b", 3.0), r("a", 1.5)];
        let t = assemble_map_table(&same, &same, &same).unwrap();
        assert_eq!(t.rows[0].station_id, "a");
        assert!(t.rows.iter().all(|r| r.diff_near == 0.0 && r.diff_far == 0.0));

        let err = assemble_map_table(&same, &[r("b", 3.0)], &same).unwrap_err();
        assert!(matches!(err, Error::Join(ref m) if m.contains("`a`")), "{err}");
        let err = assemble_map_table(&same, &[r("b", 3.0), r("c", 1.0)], &same).unwrap_err();
        assert!(matches!(err, Error::Join(_)));
    }

    #[test]
    fn sc_equilibrium_gives_zero() {
        let spec = build_solar_collector(&ScConstants::default()).unwrap();
        let r = run_station(&spec, &series(10.0, 0.0), "x").unwrap();
        assert!(r.value.abs() < 1e-9, "{}", r.value);
        assert_eq!((r.lon, r.lat), (3.0, 51.0));
    }

    #[test]
    fn hvac_matches_steady_state_oracle() {
        let spec = build_hvac(&HvacConstants::default()).unwrap();
        let (x, _) = steady_state(&spec.model, &[10.0, 22.0, 500.0, 2000.0, 500.0]).unwrap();
        let want = 201.0 * (x[4] - 22.0);
        let r = run_station(&spec, &series(10.0, 0.0), "x").unwrap();
        assert!((r.value - want).abs() < 1e-6, "{} vs {want}", r.value);
    }

    #[test]
    fn doubled_weights_double_mean() {
        let s = crate::climate::generate_station(5.0, 48.0, 1, 0.0, 5).unwrap();
        let spec = build_solar_collector(&ScConstants::default()).unwrap();
        let mut doubled = spec.clone();
        doubled.indicator.weights.iter_mut().for_each(|w| *w *= 2.0);
        let a = run_station(&spec, &s, "x").unwrap().value;
        let b = run_station(&doubled, &s, "x").unwrap().value;
        assert!((b - 2.0 * a).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn run_station_is_deterministic() {
        let s = crate::climate::generate_station(5.0, 48.0, 1, 0.0, 5).unwrap();
        let spec = build_hvac(&HvacConstants::default()).unwrap();
        let a = run_station(&spec, &s, "x").unwrap();
        let b = run_station(&spec, &s, "x").unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }

    #[test]
    fn csv_round_trip() {
        let r = |id: &str, v| StationResult {
            station_id: id.into(),
            lon: 4.25,
            lat: 51.125,
            value: v,
        };
        let t = assemble_map_table(&[r("a", 1.0 / 3.0)], &[r("a", 2.5)], &[r("a", -7.0)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_map_table(&t, &p).unwrap();
        let back = read_map_table(&p).unwrap();
        assert_eq!(back.rows[0].past, 0.333333333);
        assert_eq!(back.rows[0].far, -7.0);
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with(MAPVAR_HEADER));
    }

    #[test]
    fn statistic_config_forms() {
        let i: PerformanceIndicator =
            serde_json::from_str(r#"{"weights": [1], "statistic": {"percentile": 95}}"#).unwrap();
        assert_eq!(i.statistic, Statistic::Percentile(95.0));
        let i: PerformanceIndicator =
            serde_json::from_str(r#"{"weights": [1], "statistic": {"fraction_above": 0.5}}"#).unwrap();
        assert_eq!(i.statistic, Statistic::FractionAbove(0.5));
        let i: PerformanceIndicator = serde_json::from_str(r#"{"weights": [1], "statistic": "max"}"#).unwrap();
        assert_eq!(i.statistic, Statistic::Max);
        assert_eq!(i.offset, 0.0);
    }
}
