//! Station values to maps: k-nearest inverse-distance weighting on a
//! plate carrée lat/lon raster, PNG rendering with a color bar, and the
//! numeric `.grid.csv` companion files.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numfmt::format_sig;
use crate::perf::{MapColumn, MapTable};

pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Stations closer than this to a cell center set the cell value directly.
pub const EXACT_RADIUS_KM: f64 = 1.0;

pub const MASK_RGB: [u8; 3] = [200, 200, 200];
pub const MARKER_RGB: [u8; 3] = [0, 0, 0];
const BACKGROUND_RGB: [u8; 3] = [255, 255, 255];

/// Great-circle distance between two `(lon, lat)` points in degrees.
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lon1, lat1) = (a.0.to_radians(), a.1.to_radians());
    let (lon2, lat2) = (b.0.to_radians(), b.1.to_radians());
    let s_lat = ((lat2 - lat1) / 2.0).sin();
    let s_lon = ((lon2 - lon1) / 2.0).sin();
    let h = s_lat * s_lat + lat1.cos() * lat2.cos() * s_lon * s_lon;
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
    /// Cell size in degrees.
    pub cell: f64,
    pub idw_power: f64,
    pub neighbors: usize,
    /// Cells farther than this from every station are masked.
    pub max_distance_km: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            lon_min: -12.0,
            lon_max: 45.0,
            lat_min: 33.0,
            lat_max: 72.0,
            cell: 0.25,
            idw_power: 2.0,
            neighbors: 8,
            max_distance_km: 500.0,
        }
    }
}

impl GridSpec {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // also rejects NaN
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::config(format!("grid.{field}"), why));
        if !(self.lon_min < self.lon_max) {
            return bad("lon_min", "lon_min must be below lon_max");
        }
        if !(self.lat_min < self.lat_max) {
            return bad("lat_min", "lat_min must be below lat_max");
        }
        if !(self.cell > 0.0 && self.cell.is_finite()) {
            return bad("cell", "cell size must be positive");
        }
        if self.neighbors < 1 {
            return bad("neighbors", "at least one neighbor is needed");
        }
        if !(self.idw_power >= 0.0 && self.idw_power.is_finite()) {
            return bad("idw_power", "power must be finite and non-negative");
        }
        if !(self.max_distance_km > 0.0) {
            return bad("max_distance_km", "must be positive");
        }
        let (r, c) = self.shape();
        if r * c > 50_000_000 {
            return bad("cell", "grid has more than 5e7 cells");
        }
        Ok(())
    }

    fn cells_along(span: f64, cell: f64) -> usize {
        ((span / cell) - 1e-9).ceil().max(1.0) as usize
    }

    /// `(rows, cols)`; rows run north to south.
    pub fn shape(&self) -> (usize, usize) {
        (
            Self::cells_along(self.lat_max - self.lat_min, self.cell),
            Self::cells_along(self.lon_max - self.lon_min, self.cell),
        )
    }

    /// `(lon, lat)` of the center of cell (`row`, `col`).
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.lon_min + (col as f64 + 0.5) * self.cell,
            self.lat_max - (row as f64 + 0.5) * self.cell,
        )
    }

    /// Cell containing `(lon, lat)`, if inside the grid.
    pub fn cell_of(&self, lon: f64, lat: f64) -> Option<(usize, usize)> {
        let (rows, cols) = self.shape();
        let c = ((lon - self.lon_min) / self.cell).floor();
        let r = ((self.lat_max - lat) / self.cell).floor();
        if c < 0.0 || r < 0.0 || c as usize >= cols || r as usize >= rows {
            None
        } else {
            Some((r as usize, c as usize))
        }
    }
}

/// Interpolated raster. Masked cells hold `NaN` and `mask == true`.
#[derive(Debug, Clone, PartialEq)]
pub struct MapGrid {
    pub spec: GridSpec,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl MapGrid {
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let i = row * self.cols + col;
        (!self.mask[i]).then_some(self.values[i])
    }

    pub fn unmasked(&self) -> impl Iterator<Item = f64> + '_ {
        self.values
            .iter()
            .zip(&self.mask)
            .filter(|(_, m)| !**m)
            .map(|(v, _)| *v)
    }

    pub fn masked_fraction(&self) -> f64 {
        self.mask.iter().filter(|m| **m).count() as f64 / self.mask.len() as f64
    }
}

#[derive(Debug, Clone)]
enum CellRule {
    Masked,
    Exact(usize),
    Weighted(Vec<(usize, f64)>),
}

/// Neighbor sets and weights for every cell. They depend only on station
/// positions, so one plan serves all five maps.
#[derive(Debug, Clone)]
pub struct IdwPlan {
    spec: GridSpec,
    rows: usize,
    cols: usize,
    cells: Vec<CellRule>,
    n_stations: usize,
}

impl IdwPlan {
    /// `stations` are `(lon, lat)`; positions must be distinct.
    pub fn new(stations: &[(f64, f64)], spec: &GridSpec) -> Result<Self> {
        spec.validate()?;
        if stations.is_empty() {
            return Err(Error::Empty("no stations to interpolate".into()));
        }
        let (rows, cols) = spec.shape();
        let k = spec.neighbors.min(stations.len());
        let cells: Vec<CellRule> = (0..rows)
            .into_par_iter()
            .flat_map_iter(|r| {
                let mut dist: Vec<(f64, usize)> = Vec::with_capacity(stations.len());
                (0..cols)
                    .map(|c| {
                        let center = spec.cell_center(r, c);
                        dist.clear();
                        dist.extend(stations.iter().enumerate().map(|(i, s)| (haversine_km(center, *s), i)));
                        let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
                        if k < dist.len() {
                            dist.select_nth_unstable_by(k - 1, by_distance);
                        }
                        let nearest = &mut dist[..k];
                        nearest.sort_by(by_distance);
                        let (d0, i0) = nearest[0];
                        if d0 < EXACT_RADIUS_KM {
                            CellRule::Exact(i0)
                        } else if d0 > spec.max_distance_km {
                            CellRule::Masked
                        } else {
                            CellRule::Weighted(nearest.iter().map(|&(d, i)| (i, d.powf(-spec.idw_power))).collect())
                        }
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        Ok(IdwPlan {
            spec: spec.clone(),
            rows,
            cols,
            cells,
            n_stations: stations.len(),
        })
    }

    /// Interpolates `values` (one per station, in the plan's station order).
    pub fn apply(&self, values: &[f64]) -> MapGrid {
        assert_eq!(values.len(), self.n_stations, "one value per station");
        let mut out = Vec::with_capacity(self.cells.len());
        let mut mask = Vec::with_capacity(self.cells.len());
        for rule in &self.cells {
            let v = match rule {
                CellRule::Masked => None,
                CellRule::Exact(i) => Some(values[*i]),
                CellRule::Weighted(ws) => {
                    // offsets from the nearest value keep constant fields exact
                    let base = values[ws[0].0];
                    let (num, den) = ws
                        .iter()
                        .fold((0.0, 0.0), |(n, d), &(i, w)| (n + w * (values[i] - base), d + w));
                    Some(base + num / den)
                }
            };
            out.push(v.unwrap_or(f64::NAN));
            mask.push(v.is_none());
        }
        MapGrid {
            spec: self.spec.clone(),
            rows: self.rows,
            cols: self.cols,
            values: out,
            mask,
        }
    }
}

/// Averages stations that share identical coordinates. Returns the merged
/// list and how many entries were folded into another.
pub fn merge_duplicates(stations: &[(f64, f64, f64)]) -> (Vec<(f64, f64, f64)>, usize) {
    let mut merged: Vec<(f64, f64, f64, usize)> = Vec::with_capacity(stations.len());
    let mut dupes = 0;
    for &(lon, lat, v) in stations {
        if let Some(m) = merged.iter_mut().find(|m| m.0 == lon && m.1 == lat) {
            m.2 += v;
            m.3 += 1;
            dupes += 1;
        } else {
            merged.push((lon, lat, v, 1));
        }
    }
    let out = merged
        .into_iter()
        .map(|(lon, lat, s, n)| (lon, lat, s / n as f64))
        .collect();
    (out, dupes)
}

/// Inverse-distance weighting of `(lon, lat, value)` stations onto the grid.
pub fn interpolate(stations: &[(f64, f64, f64)], spec: &GridSpec) -> Result<MapGrid> {
    if stations.is_empty() {
        return Err(Error::Empty("no stations to interpolate".into()));
    }
    let (stations, dupes) = merge_duplicates(stations);
    if dupes > 0 {
        log::warn!("{dupes} stations share coordinates with another; their values were averaged");
    }
    let positions: Vec<(f64, f64)> = stations.iter().map(|s| (s.0, s.1)).collect();
    let values: Vec<f64> = stations.iter().map(|s| s.2).collect();
    Ok(IdwPlan::new(&positions, spec)?.apply(&values))
}

/// Piecewise-linear RGB colormap over `[vmin, vmax]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorScale {
    pub vmin: f64,
    pub vmax: f64,
}

/// Seven evenly spaced anchors from dark blue through cyan and yellow to dark red.
pub const ANCHORS: [[f64; 3]; 7] = [
    [0.0, 0.0, 131.0],
    [0.0, 60.0, 170.0],
    [5.0, 255.0, 255.0],
    [255.0, 255.0, 0.0],
    [250.0, 120.0, 0.0],
    [190.0, 0.0, 0.0],
    [84.0, 0.0, 0.0],
];

impl ColorScale {
    pub fn new(vmin: f64, vmax: f64) -> Self {
        ColorScale { vmin, vmax }
    }

    /// Domain `[-M, M]` with `M = max |v|`, so zero is always mid-scale.
    pub fn symmetric<I: IntoIterator<Item = f64>>(values: I) -> Self {
        let m = values
            .into_iter()
            .filter(|v| v.is_finite())
            .fold(0.0, |m: f64, v| m.max(v.abs()));
        ColorScale { vmin: -m, vmax: m }
    }

    pub fn spanning<I: IntoIterator<Item = f64>>(values: I) -> Self {
        let (lo, hi) = values
            .into_iter()
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if lo > hi {
            ColorScale { vmin: 0.0, vmax: 0.0 }
        } else {
            ColorScale { vmin: lo, vmax: hi }
        }
    }

    /// Position of `v` in the domain, clamped to `[0, 1]`. A zero-width
    /// domain maps everything to the midpoint.
    pub fn position(&self, v: f64) -> f64 {
        let span = self.vmax - self.vmin;
        if span <= 0.0 || !span.is_finite() {
            return 0.5;
        }
        ((v - self.vmin) / span).clamp(0.0, 1.0)
    }

    pub fn rgb_at(t: f64) -> [u8; 3] {
        let seg = t.clamp(0.0, 1.0) * 6.0;
        let i = (seg.floor() as usize).min(5);
        let f = seg - i as f64;
        let (a, b) = (ANCHORS[i], ANCHORS[i + 1]);
        [0, 1, 2].map(|c| (a[c] + f * (b[c] - a[c])).round() as u8)
    }

    pub fn color(&self, v: f64) -> [u8; 3] {
        Self::rgb_at(self.position(v))
    }
}

// 3x5 glyphs, one row per entry, bit 2 = left column.
fn glyph(c: char) -> [u8; 5] {
    match c {
        '0' => [7, 5, 5, 5, 7],
        '1' => [2, 6, 2, 2, 7],
        '2' => [7, 1, 7, 4, 7],
        '3' => [7, 1, 7, 1, 7],
        '4' => [5, 5, 7, 1, 1],
        '5' => [7, 4, 7, 1, 7],
        '6' => [7, 4, 7, 5, 7],
        '7' => [7, 1, 1, 1, 1],
        '8' => [7, 5, 7, 5, 7],
        '9' => [7, 5, 7, 1, 7],
        '-' => [0, 0, 7, 0, 0],
        '+' => [0, 2, 7, 2, 0],
        '.' => [0, 0, 0, 0, 2],
        'e' => [7, 5, 7, 4, 7],
        _ => [0; 5],
    }
}

const GLYPH_SCALE: usize = 2;
const GLYPH_W: usize = 3 * GLYPH_SCALE;
const GLYPH_H: usize = 5 * GLYPH_SCALE;
const BAR_GAP: usize = 10;
const BAR_WIDTH: usize = 20;
const LABEL_GAP: usize = 4;
const LABEL_CHARS: usize = 10;

struct Canvas {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Canvas {
    fn new(width: usize, height: usize) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&BACKGROUND_RGB);
        }
        Canvas { width, height, data }
    }

    fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        if x < self.width && y < self.height {
            let i = (y * self.width + x) * 3;
            self.data[i..i + 3].copy_from_slice(&rgb);
        }
    }

    fn text(&mut self, x: usize, y: usize, s: &str) {
        for (n, ch) in s.chars().enumerate() {
            let g = glyph(ch);
            let x0 = x + n * (GLYPH_W + GLYPH_SCALE);
            for (row, bits) in g.iter().enumerate() {
                for col in 0..3 {
                    if bits & (4 >> col) != 0 {
                        for dy in 0..GLYPH_SCALE {
                            for dx in 0..GLYPH_SCALE {
                                self.put(x0 + col * GLYPH_SCALE + dx, y + row * GLYPH_SCALE + dy, MARKER_RGB);
                            }
                        }
                    }
                }
            }
        }
    }
}

fn label(v: f64) -> String {
    let mut s = String::new();
    format_sig(v, 4, &mut s);
    s.chars().take(LABEL_CHARS).collect()
}

/// Rasterizes the grid, one pixel per cell, with station markers and a
/// color bar, and returns `(width, height, rgb)`.
pub fn render_rgb(grid: &MapGrid, scale: &ColorScale, stations: &[(f64, f64)]) -> (usize, usize, Vec<u8>) {
    let margin = BAR_GAP + BAR_WIDTH + LABEL_GAP + LABEL_CHARS * (GLYPH_W + GLYPH_SCALE);
    let width = grid.cols + margin;
    let height = grid.rows.max(3 * GLYPH_H);
    let mut canvas = Canvas::new(width, height);

    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let rgb = match grid.get(r, c) {
                Some(v) => scale.color(v),
                None => MASK_RGB,
            };
            canvas.put(c, r, rgb);
        }
    }
    for &(lon, lat) in stations {
        if let Some((r, c)) = grid.spec.cell_of(lon, lat) {
            for dr in 0..3 {
                for dc in 0..3 {
                    if let (Some(y), Some(x)) = ((r + dr).checked_sub(1), (c + dc).checked_sub(1)) {
                        if y < grid.rows && x < grid.cols {
                            canvas.put(x, y, MARKER_RGB);
                        }
                    }
                }
            }
        }
    }

    let bar_x = grid.cols + BAR_GAP;
    let bar_h = grid.rows.max(2);
    for y in 0..bar_h {
        let t = 1.0 - y as f64 / (bar_h - 1) as f64;
        let rgb = ColorScale::rgb_at(t);
        for x in bar_x..bar_x + BAR_WIDTH {
            canvas.put(x, y, rgb);
        }
    }
    let label_x = bar_x + BAR_WIDTH + LABEL_GAP;
    canvas.text(label_x, 0, &label(scale.vmax));
    canvas.text(label_x, bar_h.saturating_sub(GLYPH_H), &label(scale.vmin));

    (canvas.width, canvas.height, canvas.data)
}

/// Writes the rendered map as an 8-bit RGB PNG.
pub fn render_png(grid: &MapGrid, scale: &ColorScale, stations: &[(f64, f64)], out: &Path) -> Result<()> {
    if grid.values.is_empty() {
        return Err(Error::Empty("grid has no cells".into()));
    }
    let (w, h, data) = render_rgb(grid, scale, stations);
    let ctx = || format!("writing {}", out.display());
    let file = fs::File::create(out).map_err(|e| Error::io(ctx(), e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let io_err = |e: png::EncodingError| Error::io(ctx(), std::io::Error::other(e));
    let mut writer = enc.write_header().map_err(io_err)?;
    writer.write_image_data(&data).map_err(io_err)?;
    writer.finish().map_err(io_err)
}

pub fn grid_csv(grid: &MapGrid) -> String {
    let s = &grid.spec;
    let mut out = String::with_capacity(grid.values.len() * 12 + 64);
    out.push_str("# ");
    for (i, v) in [s.lon_min, s.lon_max, s.lat_min, s.lat_max, s.cell]
        .into_iter()
        .enumerate()
    {
        if i > 0 {
            out.push(',');
        }
        format_sig(v, 9, &mut out);
    }
    out.push('\n');
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            if c > 0 {
                out.push(',');
            }
            match grid.get(r, c) {
                Some(v) => format_sig(v, 9, &mut out),
                None => out.push_str("NA"),
            }
        }
        let _ = writeln!(out);
    }
    out
}

pub fn write_grid_csv(grid: &MapGrid, path: &Path) -> Result<()> {
    fs::write(path, grid_csv(grid)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Grid CSV contents: the header numbers and rows of cells (`None` when masked).
pub type GridCsv = ([f64; 5], Vec<Vec<Option<f64>>>);

/// Parses a `.grid.csv` back into rows of optional values, plus the
/// `[lon_min, lon_max, lat_min, lat_max, cell]` header.
pub fn read_grid_csv(path: &Path) -> Result<GridCsv> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let perr = |line: usize, reason: &str| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    };
    let mut lines = text.lines();
    let head = lines
        .next()
        .and_then(|l| l.strip_prefix("# "))
        .ok_or_else(|| perr(1, "missing header"))?;
    let nums: Vec<f64> = head
        .split(',')
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| perr(1, "bad header value"))?;
    let header: [f64; 5] = nums.try_into().map_err(|_| perr(1, "expected 5 header values"))?;
    let mut rows = Vec::new();
    for (i, l) in lines.enumerate() {
        let row = l
            .split(',')
            .map(|t| match t {
                "NA" => Ok(None),
                t => t.parse::<f64>().map(Some),
            })
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| perr(i + 2, "bad value"))?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// Files written for one map.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedMap {
    pub column: MapColumn,
    pub png: PathBuf,
    pub grid_csv: PathBuf,
    pub scale: ColorScale,
    pub masked_fraction: f64,
}

/// Renders the three period maps on one shared scale and the two
/// difference maps on symmetric scales. Files are
/// `<name>_<Past|NearFuture|FarFuture|DiffNearPast|DiffFarPast>.png` and
/// matching `.grid.csv`.
pub fn render_five(table: &MapTable, spec: &GridSpec, name: &str, out_dir: &Path) -> Result<Vec<RenderedMap>> {
    if table.rows.is_empty() {
        return Err(Error::Empty("map table has no stations".into()));
    }
    let positions: Vec<(f64, f64)> = table.rows.iter().map(|r| (r.lon, r.lat)).collect();

    // Duplicate coordinates are merged per column before building the plan.
    let triples = |col: MapColumn| -> Vec<(f64, f64, f64)> { table.column(col) };
    let (merged_positions, dupes) = merge_duplicates(&triples(MapColumn::Past));
    if dupes > 0 {
        log::warn!("{dupes} stations share coordinates with another; their values were averaged");
    }
    let plan_positions: Vec<(f64, f64)> = merged_positions.iter().map(|s| (s.0, s.1)).collect();
    let plan = IdwPlan::new(&plan_positions, spec)?;

    let period_scale = ColorScale::spanning(table.rows.iter().flat_map(|r| [r.past, r.near, r.far]));

    fs::create_dir_all(out_dir).map_err(|e| Error::io(format!("creating {}", out_dir.display()), e))?;
    MapColumn::ALL
        .par_iter()
        .map(|&col| {
            let (merged, _) = merge_duplicates(&triples(col));
            let values: Vec<f64> = merged.iter().map(|s| s.2).collect();
            let grid = plan.apply(&values);
            let scale = if col.is_difference() {
                ColorScale::symmetric(values.iter().copied())
            } else {
                period_scale
            };
            let stem = format!("{name}_{}", col.file_stem());
            let png = out_dir.join(format!("{stem}.png"));
            let csv = out_dir.join(format!("{stem}.grid.csv"));
            render_png(&grid, &scale, &positions, &png)?;
            write_grid_csv(&grid, &csv)?;
            Ok(RenderedMap {
                column: col,
                png,
                grid_csv: csv,
                scale,
                masked_fraction: grid.masked_fraction(),
            })
        })
        .collect()
}
