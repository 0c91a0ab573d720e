//! Raster data model for emission maps and its on-disk format.
//!
//! An [`EmissionGrid`] is a row-major 2D field of non-negative emission
//! fluxes (kg/m²s) with square cells, geographic bounds, a monthly
//! timestamp and a compound label. Row 0 is the northern edge
//! (`lat_max`), column 0 the western edge (`lon_min`).
//!
//! Grids are serialized in the little-endian EMG1 format:
//!
//! | offset | type | field |
//! |--------|------|-------|
//! | 0 | `[u8; 4]` | magic `EMG1` |
//! | 4 | `u32` | height |
//! | 8 | `u32` | width |
//! | 12 | `f64` × 4 | lat_min, lat_max, lon_min, lon_max |
//! | 44 | `u16` | year |
//! | 46 | `u8` | month |
//! | 47 | `u8` | compound code |
//! | 48 | `f64` × h·w | values, row-major |

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Upper end of the physical dynamic range, kg/m²s.
pub const EMISSION_MAX: f64 = 1e-9;
/// Smallest representable nonzero emission, kg/m²s. Positive values
/// below this are treated as zero by [`flush_below_floor`].
pub const EMISSION_FLOOR: f64 = 1e-30;

const EMG1_MAGIC: &[u8; 4] = b"EMG1";
const EMG1_HEADER_LEN: usize = 48;
const GEOMETRY_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Compound {
    Isoprene,
    Monoterpenes,
    Methanol,
    Sesquiterpenes,
}

impl Compound {
    pub const ALL: [Compound; 4] = [
        Compound::Isoprene,
        Compound::Monoterpenes,
        Compound::Methanol,
        Compound::Sesquiterpenes,
    ];

    pub fn code(self) -> u8 {
        match self {
            Compound::Isoprene => 0,
            Compound::Monoterpenes => 1,
            Compound::Methanol => 2,
            Compound::Sesquiterpenes => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Compound::ALL
            .into_iter()
            .find(|c| c.code() == code)
            .ok_or_else(|| Error::Format(format!("unknown compound code {code}")))
    }

    pub fn label(self) -> &'static str {
        match self {
            Compound::Isoprene => "isoprene",
            Compound::Monoterpenes => "monoterpenes",
            Compound::Methanol => "methanol",
            Compound::Sesquiterpenes => "sesquiterpenes",
        }
    }
}

impl fmt::Display for Compound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Compound {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Compound::ALL
            .into_iter()
            .find(|c| c.label() == s)
            .ok_or_else(|| Error::Domain(format!("unknown compound `{s}`")))
    }
}

/// Year and month of a monthly-averaged map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Timestamp {
    pub year: u16,
    pub month: u8,
}

impl Timestamp {
    pub fn new(year: u16, month: u8) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Domain(format!("month {month} outside 1..=12")));
        }
        Ok(Self { year, month })
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

/// Geographic extent of a grid, in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoBounds {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl GeoBounds {
    /// Bounds centred on (0, 0) for a `height`×`width` grid of square cells.
    pub fn centered(height: usize, width: usize, cell_size_deg: f64) -> Self {
        let half_lat = height as f64 * cell_size_deg / 2.0;
        let half_lon = width as f64 * cell_size_deg / 2.0;
        Self {
            lat_min: -half_lat,
            lat_max: half_lat,
            lon_min: -half_lon,
            lon_max: half_lon,
        }
    }

    pub fn lat_span(&self) -> f64 {
        self.lat_max - self.lat_min
    }

    pub fn lon_span(&self) -> f64 {
        self.lon_max - self.lon_min
    }

    /// True when `other` lies entirely within `self` (closed boxes).
    pub fn contains(&self, other: &GeoBounds) -> bool {
        other.lat_min >= self.lat_min
            && other.lat_max <= self.lat_max
            && other.lon_min >= self.lon_min
            && other.lon_max <= self.lon_max
    }

    /// True when the open interiors of the two boxes overlap.
    pub fn intersects(&self, other: &GeoBounds) -> bool {
        other.lat_min < self.lat_max
            && other.lat_max > self.lat_min
            && other.lon_min < self.lon_max
            && other.lon_max > self.lon_min
    }
}

/// Everything about a grid except its values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridMeta {
    pub bounds: GeoBounds,
    pub timestamp: Timestamp,
    pub compound: Compound,
}

/// A non-negative emission raster. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionGrid {
    height: usize,
    width: usize,
    values: Vec<f64>,
    meta: GridMeta,
}

impl EmissionGrid {
    /// Builds a grid, rejecting negative or non-finite values and
    /// inconsistent geometry.
    pub fn new(height: usize, width: usize, values: Vec<f64>, meta: GridMeta) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Domain(format!("grid dims {height}x{width} must be positive")));
        }
        if values.len() != height * width {
            return Err(Error::Shape(format!(
                "{} values for a {height}x{width} grid",
                values.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::Domain(format!(
                "cell ({}, {}) holds {v}; emissions must be finite and non-negative",
                i / width,
                i % width
            )));
        }
        let b = &meta.bounds;
        let lat_cell = b.lat_span() / height as f64;
        let lon_cell = b.lon_span() / width as f64;
        if !(lat_cell > 0.0 && lon_cell > 0.0) {
            return Err(Error::Domain("geographic bounds must be increasing".into()));
        }
        if (lat_cell - lon_cell).abs() > GEOMETRY_RTOL * lat_cell.max(lon_cell) {
            return Err(Error::Domain(format!(
                "cells are not square: {lat_cell}° lat vs {lon_cell}° lon"
            )));
        }
        Ok(Self {
            height,
            width,
            values,
            meta,
        })
    }

    /// A grid with every cell zero.
    pub fn zeros(height: usize, width: usize, meta: GridMeta) -> Result<Self> {
        Self::new(height, width, vec![0.0; height * width], meta)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn meta(&self) -> &GridMeta {
        &self.meta
    }

    pub fn bounds(&self) -> &GeoBounds {
        &self.meta.bounds
    }

    pub fn timestamp(&self) -> Timestamp {
        self.meta.timestamp
    }

    pub fn compound(&self) -> Compound {
        self.meta.compound
    }

    pub fn cell_size_deg(&self) -> f64 {
        self.meta.bounds.lat_span() / self.height as f64
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn nonzero_count(&self) -> usize {
        self.values.iter().filter(|v| **v > 0.0).count()
    }

    /// True when every value lies in `[0, EMISSION_MAX]` and nonzero values
    /// are at least `EMISSION_FLOOR`.
    pub fn within_envelope(&self) -> bool {
        self.values
            .iter()
            .all(|&v| v == 0.0 || (EMISSION_FLOOR..=EMISSION_MAX).contains(&v))
    }

    /// Same metadata, new values of possibly different dims covering the
    /// same geographic extent.
    pub fn with_values(&self, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(height, width, values, self.meta)
    }

    /// Copies out the `rows`×`cols` window starting at (`row0`, `col0`),
    /// with bounds narrowed to the window.
    pub fn window(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> Result<Self> {
        if row0 + rows > self.height || col0 + cols > self.width || rows == 0 || cols == 0 {
            return Err(Error::Domain(format!(
                "window {rows}x{cols} at ({row0}, {col0}) exceeds {}x{} grid",
                self.height, self.width
            )));
        }
        let mut values = Vec::with_capacity(rows * cols);
        for r in row0..row0 + rows {
            let start = r * self.width + col0;
            values.extend_from_slice(&self.values[start..start + cols]);
        }
        let cs = self.cell_size_deg();
        let b = &self.meta.bounds;
        let bounds = GeoBounds {
            lat_max: b.lat_max - row0 as f64 * cs,
            lat_min: b.lat_max - (row0 + rows) as f64 * cs,
            lon_min: b.lon_min + col0 as f64 * cs,
            lon_max: b.lon_min + (col0 + cols) as f64 * cs,
        };
        Self::new(
            rows,
            cols,
            values,
            GridMeta {
                bounds,
                ..self.meta
            },
        )
    }
}

/// Zeroes positive values below [`EMISSION_FLOOR`].
pub fn flush_below_floor(values: &mut [f64]) {
    for v in values.iter_mut() {
        if *v < EMISSION_FLOOR {
            *v = 0.0;
        }
    }
}

/// Which transform produced a [`TransformedGrid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransformId {
    /// Max-scaling with the stored maximum.
    Scaling { stored_max: f64 },
    /// Quantile mapping; carries a fingerprint of the quantile table.
    Quantile { fingerprint: u64 },
    /// Produced directly by a network or test, not by a transform.
    Raw,
}

/// A grid in the normalized `[0, 1]` domain.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedGrid {
    height: usize,
    width: usize,
    values: Vec<f64>,
    transform_id: TransformId,
}

impl TransformedGrid {
    pub fn new(
        height: usize,
        width: usize,
        values: Vec<f64>,
        transform_id: TransformId,
    ) -> Result<Self> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(Error::Shape(format!(
                "{} values for a {height}x{width} transformed grid",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("transformed value {v} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            values,
            transform_id,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn transform_id(&self) -> TransformId {
        self.transform_id
    }
}

pub fn encode_grid(grid: &EmissionGrid) -> Result<Vec<u8>> {
    let h = u32::try_from(grid.height).map_err(|_| Error::Format("height exceeds u32".into()))?;
    let w = u32::try_from(grid.width).map_err(|_| Error::Format("width exceeds u32".into()))?;
    let mut out = Vec::with_capacity(EMG1_HEADER_LEN + 8 * grid.values.len());
    out.extend_from_slice(EMG1_MAGIC);
    out.extend_from_slice(&h.to_le_bytes());
    out.extend_from_slice(&w.to_le_bytes());
    let b = grid.bounds();
    for x in [b.lat_min, b.lat_max, b.lon_min, b.lon_max] {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out.extend_from_slice(&grid.meta.timestamp.year.to_le_bytes());
    out.push(grid.meta.timestamp.month);
    out.push(grid.meta.compound.code());
    for v in &grid.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_grid(bytes: &[u8]) -> Result<EmissionGrid> {
    if bytes.len() < EMG1_HEADER_LEN {
        return Err(Error::Format(format!("{} bytes is shorter than the EMG1 header", bytes.len())));
    }
    if &bytes[0..4] != EMG1_MAGIC {
        return Err(Error::Format("bad magic, expected EMG1".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let height = u32_at(4);
    let width = u32_at(8);
    let bounds = GeoBounds {
        lat_min: f64_at(12),
        lat_max: f64_at(20),
        lon_min: f64_at(28),
        lon_max: f64_at(36),
    };
    let year = u16::from_le_bytes([bytes[44], bytes[45]]);
    let timestamp = Timestamp::new(year, bytes[46]).map_err(|e| Error::Format(e.to_string()))?;
    let compound = Compound::from_code(bytes[47])?;
    let expected = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(8))
        .map(|n| n + EMG1_HEADER_LEN)
        .ok_or_else(|| Error::Format("dims overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "payload length {} does not match {height}x{width} header",
            bytes.len()
        )));
    }
    let values = bytes[EMG1_HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EmissionGrid::new(
        height,
        width,
        values,
        GridMeta {
            bounds,
            timestamp,
            compound,
        },
    )
}

pub fn write_grid(grid: &EmissionGrid, path: &Path) -> Result<()> {
    let bytes = encode_grid(grid)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_grid(path: &Path) -> Result<EmissionGrid> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_grid(&bytes)
}

// Heatmap rendering.

/// Background colour for zero cells.
pub const ZERO_COLOR: [u8; 3] = [255, 255, 255];

const COLOR_STOPS: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

fn colormap(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0) * (COLOR_STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(COLOR_STOPS.len() - 2);
    let f = t - i as f64;
    let (a, b) = (COLOR_STOPS[i], COLOR_STOPS[i + 1]);
    [0, 1, 2].map(|k| (a[k] + (b[k] - a[k]) * f).round() as u8)
}

/// log₁₀ range of the nonzero values across `grids`, if any are nonzero.
fn log_range<'a>(grids: impl IntoIterator<Item = &'a EmissionGrid>) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for g in grids {
        for &v in g.values().iter().filter(|v| **v > 0.0) {
            let l = v.log10();
            lo = lo.min(l);
            hi = hi.max(l);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

fn cell_color(v: f64, range: Option<(f64, f64)>) -> [u8; 3] {
    match range {
        Some((lo, hi)) if v > 0.0 => {
            let t = if hi > lo { (v.log10() - lo) / (hi - lo) } else { 1.0 };
            colormap(t)
        }
        _ => ZERO_COLOR,
    }
}

fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(rgb.len() + 32);
    write!(out, "P6\n{width} {height}\n255\n").expect("write to Vec");
    out.extend_from_slice(rgb);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes a binary PPM heatmap, log₁₀-scaled over the grid's nonzero
/// values. Zero cells get [`ZERO_COLOR`].
pub fn render_heatmap(grid: &EmissionGrid, path: &Path) -> Result<()> {
    let range = log_range([grid]);
    let rgb: Vec<u8> = grid
        .values()
        .iter()
        .flat_map(|&v| cell_color(v, range))
        .collect();
    write_ppm(path, grid.width(), grid.height(), &rgb)
}

/// Renders HR / LR / SR side by side on a shared colour scale. The LR
/// panel is nearest-neighbour enlarged to the HR size.
pub fn render_triptych(
    hr: &EmissionGrid,
    lr: &EmissionGrid,
    sr: &EmissionGrid,
    path: &Path,
) -> Result<()> {
    if hr.dims() != sr.dims() {
        return Err(Error::Shape("HR and SR dims differ".into()));
    }
    let (h, w) = hr.dims();
    if h % lr.height() != 0 || w % lr.width() != 0 {
        return Err(Error::Shape("LR dims do not divide HR dims".into()));
    }
    let (fy, fx) = (h / lr.height(), w / lr.width());
    let range = log_range([hr, lr, sr]);
    let gap = 2;
    let total_w = 3 * w + 2 * gap;
    let mut rgb = Vec::with_capacity(total_w * h * 3);
    for r in 0..h {
        for panel in 0..3 {
            for c in 0..w {
                let v = match panel {
                    0 => hr.get(r, c),
                    1 => lr.get(r / fy, c / fx),
                    _ => sr.get(r, c),
                };
                rgb.extend_from_slice(&cell_color(v, range));
            }
            if panel < 2 {
                rgb.extend(std::iter::repeat_n(0u8, gap * 3));
            }
        }
    }
    write_ppm(path, total_w, h, &rgb)
}
