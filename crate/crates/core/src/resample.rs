//! Separable bicubic resampling.
//!
//! Output cell centres map onto input cell centres
//! (`src = (dst + 0.5) * in_len / out_len - 0.5`), borders replicate the
//! edge cell, and the kernel is Keys' cubic with sharpness `a`.

use crate::error::{Error, Result};

/// A row-major 2D array of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "{} values for a {height}x{width} plane",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }
}

/// A positive rational scale factor `num / den` (output size / input size).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Factor {
    pub num: u32,
    pub den: u32,
}

impl Factor {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::Domain(format!("scale factor {num}/{den} must be positive")));
        }
        Ok(Self { num, den })
    }

    pub fn up(k: u32) -> Self {
        Self { num: k, den: 1 }
    }

    pub fn down(k: u32) -> Self {
        Self { num: 1, den: k }
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `round(len * factor)`, at least 1.
    pub fn apply(self, len: usize) -> usize {
        let n = len as u64 * self.num as u64;
        let d = self.den as u64;
        (((2 * n + d) / (2 * d)) as usize).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    #[default]
    Replicate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleSpec {
    pub factor: Factor,
    /// Keys kernel parameter; -0.5 gives Catmull-Rom.
    pub kernel_a: f64,
    pub boundary: Boundary,
    /// Widen the kernel by `1 / factor` when downsampling.
    pub antialias: bool,
}

pub const CATMULL_ROM_A: f64 = -0.5;

impl ResampleSpec {
    pub fn new(factor: Factor) -> Self {
        Self {
            factor,
            kernel_a: CATMULL_ROM_A,
            boundary: Boundary::Replicate,
            antialias: false,
        }
    }

    pub fn with_antialias(mut self, on: bool) -> Self {
        self.antialias = on;
        self
    }
}

/// Keys cubic convolution kernel.
#[inline]
pub fn cubic_kernel(x: f64, a: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

#[inline]
fn clamp_index(i: i64, len: usize) -> usize {
    i.clamp(0, len as i64 - 1) as usize
}

/// Per-output-cell taps along one axis.
#[derive(Debug, Clone)]
pub struct AxisWeights {
    in_len: usize,
    out_len: usize,
    /// For output cell `o`: `taps[starts[o]..starts[o + 1]]`.
    starts: Vec<usize>,
    taps: Vec<(usize, f64)>,
}

impl AxisWeights {
    pub fn new(in_len: usize, out_len: usize, spec: &ResampleSpec) -> Self {
        let ratio = in_len as f64 / out_len as f64;
        let widen = if spec.antialias && ratio > 1.0 { ratio } else { 1.0 };
        let support = 2.0 * widen;
        let mut starts = Vec::with_capacity(out_len + 1);
        let mut taps = Vec::with_capacity(out_len * (2.0 * support).ceil() as usize + 4);
        for o in 0..out_len {
            starts.push(taps.len());
            let center = (o as f64 + 0.5) * ratio - 0.5;
            let first = (center - support).floor() as i64 + 1;
            let last = (center + support).ceil() as i64 - 1;
            let begin = taps.len();
            let mut total = 0.0;
            for j in first..=last {
                let w = cubic_kernel((center - j as f64) / widen, spec.kernel_a);
                if w != 0.0 {
                    taps.push((clamp_index(j, in_len), w));
                    total += w;
                }
            }
            if widen != 1.0 {
                for t in &mut taps[begin..] {
                    t.1 /= total;
                }
            }
        }
        starts.push(taps.len());
        Self {
            in_len,
            out_len,
            starts,
            taps,
        }
    }

    #[inline]
    fn taps(&self, o: usize) -> &[(usize, f64)] {
        &self.taps[self.starts[o]..self.starts[o + 1]]
    }
}

/// Resamples each row (the horizontal axis).
pub fn resample_horizontal(src: &Plane, weights: &AxisWeights) -> Plane {
    debug_assert_eq!(src.width, weights.in_len);
    let mut data = Vec::with_capacity(src.height * weights.out_len);
    for r in 0..src.height {
        let row = &src.data[r * src.width..(r + 1) * src.width];
        for o in 0..weights.out_len {
            data.push(weights.taps(o).iter().map(|&(j, w)| w * row[j]).sum());
        }
    }
    Plane {
        height: src.height,
        width: weights.out_len,
        data,
    }
}

/// Resamples each column (the vertical axis).
pub fn resample_vertical(src: &Plane, weights: &AxisWeights) -> Plane {
    debug_assert_eq!(src.height, weights.in_len);
    let w = src.width;
    let mut data = vec![0.0; weights.out_len * w];
    for o in 0..weights.out_len {
        let out = &mut data[o * w..(o + 1) * w];
        for &(j, wt) in weights.taps(o) {
            let row = &src.data[j * w..(j + 1) * w];
            for (d, s) in out.iter_mut().zip(row) {
                *d += wt * s;
            }
        }
    }
    Plane {
        height: weights.out_len,
        width: w,
        data,
    }
}

/// Output dims of resampling a `height`×`width` plane.
pub fn output_dims(height: usize, width: usize, factor: Factor) -> (usize, usize) {
    (factor.apply(height), factor.apply(width))
}

/// Bicubic resampling of `src` by `spec.factor` (rows first, then columns).
pub fn bicubic_resample(src: &Plane, spec: &ResampleSpec) -> Result<Plane> {
    if src.height == 0 || src.width == 0 {
        return Err(Error::Domain("cannot resample an empty plane".into()));
    }
    let (oh, ow) = output_dims(src.height, src.width, spec.factor);
    let wx = AxisWeights::new(src.width, ow, spec);
    let wy = AxisWeights::new(src.height, oh, spec);
    Ok(resample_vertical(&resample_horizontal(src, &wx), &wy))
}

/// Bicubic evaluation of `src` at fractional cell coordinates, with edge
/// replication.
pub fn bicubic_sample(src: &Plane, y: f64, x: f64, a: f64) -> f64 {
    let (y0, x0) = (y.floor() as i64, x.floor() as i64);
    let mut acc = 0.0;
    for dy in -1..=2 {
        let r = y0 + dy;
        let wy = cubic_kernel(y - r as f64, a);
        let row = clamp_index(r, src.height);
        let mut racc = 0.0;
        for dx in -1..=2 {
            let c = x0 + dx;
            racc += cubic_kernel(x - c as f64, a) * src.get(row, clamp_index(c, src.width));
        }
        acc += wy * racc;
    }
    acc
}

/// Elementwise `max(v, 0)`.
pub fn clamp_non_negative(src: &Plane) -> Plane {
    Plane {
        height: src.height,
        width: src.width,
        data: src.data.iter().map(|v| v.max(0.0)).collect(),
    }
}
