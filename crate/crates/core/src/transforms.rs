//! Invertible maps from physical emissions into `[0, 1]`.
//!
//! Two strategies are provided, both selectable by name through
//! [`preprocessors`]:
//!
//! * `scaling`: divide a grid by its own maximum. The inverse multiplies by
//!   the stored maximum, which at deployment is the LR input's maximum and
//!   therefore underestimates HR peaks.
//! * `quantile`: a fixed empirical CDF learned from HR training data, with
//!   piecewise-linear interpolation between quantiles.

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{EmissionGrid, GridMeta, TransformId, TransformedGrid};
use crate::registry::Registry;

pub const DEFAULT_N_QUANTILES: usize = 1000;

const QTX1_MAGIC: &[u8; 4] = b"QTX1";

/// A fitted, invertible map between emission grids and `[0, 1]` grids.
pub trait InvertibleTransform: Send + Sync + fmt::Debug {
    fn id(&self) -> TransformId;

    /// Forward map. Results are clamped to `[0, 1]`.
    fn apply(&self, grid: &EmissionGrid) -> Result<TransformedGrid>;

    /// Inverse map; `meta` supplies the geographic metadata of the result.
    fn invert(&self, grid: &TransformedGrid, meta: &GridMeta) -> Result<EmissionGrid>;
}

/// A preprocessing strategy: picks the transform to use for a given grid.
pub trait Preprocessor: Send + Sync {
    fn name(&self) -> &'static str;

    fn transform_for(&self, grid: &EmissionGrid) -> Result<Arc<dyn InvertibleTransform>>;
}

// ---------------------------------------------------------------------------
// Max scaling

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingTransform {
    stored_max: f64,
}

impl ScalingTransform {
    pub fn new(stored_max: f64) -> Result<Self> {
        if !(stored_max.is_finite() && stored_max > 0.0) {
            return Err(Error::DegenerateInput(format!(
                "scaling maximum must be positive, got {stored_max}"
            )));
        }
        Ok(Self { stored_max })
    }

    pub fn stored_max(&self) -> f64 {
        self.stored_max
    }
}

impl InvertibleTransform for ScalingTransform {
    fn id(&self) -> TransformId {
        TransformId::Scaling {
            stored_max: self.stored_max,
        }
    }

    fn apply(&self, grid: &EmissionGrid) -> Result<TransformedGrid> {
        let values = grid
            .values()
            .iter()
            .map(|v| (v / self.stored_max).min(1.0))
            .collect();
        TransformedGrid::new(grid.height(), grid.width(), values, self.id())
    }

    fn invert(&self, grid: &TransformedGrid, meta: &GridMeta) -> Result<EmissionGrid> {
        let values = grid.values().iter().map(|v| v * self.stored_max).collect();
        EmissionGrid::new(grid.height(), grid.width(), values, *meta)
    }
}

/// Divides `grid` by its maximum. The result has maximum exactly 1.
pub fn apply_scaling(grid: &EmissionGrid) -> Result<(TransformedGrid, ScalingTransform)> {
    let max = grid.max();
    if max <= 0.0 {
        return Err(Error::DegenerateInput("cannot scale an all-zero grid".into()));
    }
    let t = ScalingTransform::new(max)?;
    Ok((t.apply(grid)?, t))
}

pub fn invert_scaling(
    t: &ScalingTransform,
    grid: &TransformedGrid,
    meta: &GridMeta,
) -> Result<EmissionGrid> {
    t.invert(grid, meta)
}

// ---------------------------------------------------------------------------
// Quantile transform

/// Empirical CDF with `n_quantiles` knots at probabilities `k / (n - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileTransform {
    quantiles: Vec<f64>,
}

impl QuantileTransform {
    /// Wraps an existing quantile table. Needs at least two knots,
    /// all finite, non-negative and non-decreasing.
    pub fn from_quantiles(quantiles: Vec<f64>) -> Result<Self> {
        if quantiles.len() < 2 {
            return Err(Error::Domain("a quantile table needs at least two knots".into()));
        }
        if quantiles.iter().any(|q| !(q.is_finite() && *q >= 0.0)) {
            return Err(Error::Domain("quantiles must be finite and non-negative".into()));
        }
        if quantiles.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Domain("quantiles must be non-decreasing".into()));
        }
        Ok(Self { quantiles })
    }

    pub fn quantiles(&self) -> &[f64] {
        &self.quantiles
    }

    pub fn n_quantiles(&self) -> usize {
        self.quantiles.len()
    }

    fn last_index(&self) -> f64 {
        (self.quantiles.len() - 1) as f64
    }

    /// Interpolates the CDF given the index `i` of the upper knot of the
    /// segment containing `x`.
    fn interp_segment(&self, i: usize, x: f64) -> f64 {
        let n = self.quantiles.len();
        if i == 0 {
            return 0.0;
        }
        if i == n {
            return 1.0;
        }
        let (lo, hi) = (self.quantiles[i - 1], self.quantiles[i]);
        let frac = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
        ((i - 1) as f64 + frac) / self.last_index()
    }

    /// Forward CDF of a single value. Runs of equal quantiles map to the
    /// midpoint of their probability interval.
    pub fn forward_value(&self, x: f64) -> f64 {
        let q = &self.quantiles;
        // Interpolating from the right end of a tie run and from its left end
        // agree everywhere except on the run itself.
        let upper = self.interp_segment(q.partition_point(|v| *v <= x), x);
        let lower = self.interp_segment(q.partition_point(|v| *v < x), x);
        (0.5 * (upper + lower)).clamp(0.0, 1.0)
    }

    /// Inverse CDF of a single probability in `[0, 1]`.
    pub fn inverse_value(&self, p: f64) -> f64 {
        let pos = p * self.last_index();
        let k = (pos.floor() as usize).min(self.quantiles.len() - 2);
        let frac = pos - k as f64;
        let (lo, hi) = (self.quantiles[k], self.quantiles[k + 1]);
        (lo + frac * (hi - lo)).max(0.0)
    }

    /// FNV-1a over the quantile bit patterns.
    pub fn fingerprint(&self) -> u64 {
        fnv1a64(self.quantiles.iter().flat_map(|q| q.to_bits().to_le_bytes()))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.quantiles.len());
        out.extend_from_slice(QTX1_MAGIC);
        out.extend_from_slice(&(self.quantiles.len() as u32).to_le_bytes());
        for q in &self.quantiles {
            out.extend_from_slice(&q.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[0..4] != QTX1_MAGIC {
            return Err(Error::Format("missing QTX1 header".into()));
        }
        let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        if bytes.len() != 8 + 8 * n {
            return Err(Error::Format(format!(
                "QTX1 payload of {} bytes does not hold {n} quantiles",
                bytes.len() - 8
            )));
        }
        let quantiles = bytes[8..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_quantiles(quantiles).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

impl InvertibleTransform for QuantileTransform {
    fn id(&self) -> TransformId {
        TransformId::Quantile {
            fingerprint: self.fingerprint(),
        }
    }

    fn apply(&self, grid: &EmissionGrid) -> Result<TransformedGrid> {
        let values = grid.values().iter().map(|&v| self.forward_value(v)).collect();
        TransformedGrid::new(grid.height(), grid.width(), values, self.id())
    }

    fn invert(&self, grid: &TransformedGrid, meta: &GridMeta) -> Result<EmissionGrid> {
        let values = grid.values().iter().map(|&p| self.inverse_value(p)).collect();
        EmissionGrid::new(grid.height(), grid.width(), values, *meta)
    }
}

/// Fits a quantile table to `samples`. Knot `k` is the linearly
/// interpolated empirical quantile at probability `k / (n_quantiles - 1)`.
pub fn fit_quantile_transform<I>(samples: I, n_quantiles: usize) -> Result<QuantileTransform>
where
    I: IntoIterator<Item = f64>,
{
    if n_quantiles < 2 {
        return Err(Error::Domain(format!("n_quantiles must be at least 2, got {n_quantiles}")));
    }
    let mut sorted: Vec<f64> = Vec::new();
    for s in samples {
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::Domain(format!("fit sample {s} is not a non-negative number")));
        }
        sorted.push(s);
    }
    if sorted.len() < n_quantiles {
        return Err(Error::InsufficientData {
            needed: n_quantiles,
            got: sorted.len(),
        });
    }
    sorted.sort_by(f64::total_cmp);
    let last = (sorted.len() - 1) as f64;
    let quantiles = (0..n_quantiles)
        .map(|k| {
            let pos = k as f64 / (n_quantiles - 1) as f64 * last;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(sorted.len() - 1);
            let frac = pos - lo as f64;
            sorted[lo] + frac * (sorted[hi] - sorted[lo])
        })
        .collect();
    QuantileTransform::from_quantiles(quantiles)
}

pub fn apply_quantile(t: &QuantileTransform, grid: &EmissionGrid) -> Result<TransformedGrid> {
    t.apply(grid)
}

pub fn invert_quantile(
    t: &QuantileTransform,
    grid: &TransformedGrid,
    meta: &GridMeta,
) -> Result<EmissionGrid> {
    t.invert(grid, meta)
}

/// 64-bit FNV-1a hash.
pub(crate) fn fnv1a64(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

// ---------------------------------------------------------------------------
// Strategies

/// Scales each grid by its own maximum.
#[derive(Debug, Default, Clone, Copy)]
pub struct MaxScaling;

impl Preprocessor for MaxScaling {
    fn name(&self) -> &'static str {
        "scaling"
    }

    fn transform_for(&self, grid: &EmissionGrid) -> Result<Arc<dyn InvertibleTransform>> {
        let max = grid.max();
        if max <= 0.0 {
            return Err(Error::DegenerateInput("cannot scale an all-zero grid".into()));
        }
        Ok(Arc::new(ScalingTransform::new(max)?))
    }
}

/// Applies one fixed, pre-fitted quantile table to every grid.
#[derive(Debug, Clone)]
pub struct QuantileMapping {
    transform: Arc<QuantileTransform>,
}

impl QuantileMapping {
    pub fn new(transform: QuantileTransform) -> Self {
        Self {
            transform: Arc::new(transform),
        }
    }

    pub fn transform(&self) -> &QuantileTransform {
        &self.transform
    }
}

impl Preprocessor for QuantileMapping {
    fn name(&self) -> &'static str {
        "quantile"
    }

    fn transform_for(&self, _grid: &EmissionGrid) -> Result<Arc<dyn InvertibleTransform>> {
        Ok(self.transform.clone())
    }
}

/// What a preprocessor constructor may draw on.
#[derive(Debug, Clone, Default)]
pub struct PreprocessorSource {
    pub quantile: Option<QuantileTransform>,
}

pub type PreprocessorCtor = fn(&PreprocessorSource) -> Result<Arc<dyn Preprocessor>>;

/// Registry of the built-in preprocessing strategies.
pub fn preprocessors() -> Registry<PreprocessorCtor> {
    let mut r: Registry<PreprocessorCtor> = Registry::new("transform");
    r.register("scaling", |_| Ok(Arc::new(MaxScaling)));
    r.register("quantile", |src| {
        let t = src
            .quantile
            .clone()
            .ok_or_else(|| Error::State("quantile preprocessing needs a fitted transform".into()))?;
        Ok(Arc::new(QuantileMapping::new(t)))
    });
    r
}

/// Looks up and builds the named preprocessor.
pub fn build_preprocessor(name: &str, src: &PreprocessorSource) -> Result<Arc<dyn Preprocessor>> {
    let reg = preprocessors();
    let ctor = reg.get(name)?;
    ctor(src)
}
