use crate::error::{Error, Result};
use crate::grid::EmissionGrid;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// Reported NMSE for exact reconstructions.
pub const NMSE_FLOOR_DB: f64 = -300.0;
pub const DEFAULT_HIST_BINS: usize = 64;

/// Normalized 1D Gaussian taps of the SSIM window.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering with `taps` along both axes.
fn filter_valid(x: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        let src = &x[r * w..(r + 1) * w];
        for c in 0..ow {
            rows[r * ow + c] = taps.iter().zip(&src[c..c + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for (i, t) in taps.iter().enumerate() {
            let src = &rows[(r + i) * ow..(r + i + 1) * ow];
            for (o, v) in out[r * ow..(r + 1) * ow].iter_mut().zip(src) {
                *o += t * v;
            }
        }
    }
    out
}

/// Mean local SSIM over every position of an 11×11 Gaussian window
/// (σ = 1.5) lying fully inside the images, with dynamic range 1.
pub fn ssim(a: &[f64], b: &[f64], height: usize, width: usize) -> Result<f64> {
    if a.len() != height * width || b.len() != height * width {
        return Err(Error::Shape(format!(
            "ssim inputs of {} and {} values for {height}x{width}",
            a.len(),
            b.len()
        )));
    }
    if height < SSIM_WINDOW || width < SSIM_WINDOW {
        return Err(Error::Shape(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {height}x{width}"
        )));
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let f = |x: &[f64]| filter_valid(x, height, width, &taps);
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>();
    let (mu_a, mu_b) = (f(a), f(b));
    let (saa, sbb, sab) = (f(&prod(a, a)), f(&prod(b, b)), f(&prod(a, b)));
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = saa[i] - ma * ma;
        let vb = sbb[i] - mb * mb;
        let cov = sab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / n as f64)
}

/// `10·log10(mean((sr − hr)²) / mean(hr²))`, floored at −300 dB.
pub fn nmse_db(hr: &EmissionGrid, sr: &EmissionGrid) -> Result<f64> {
    if hr.dims() != sr.dims() {
        return Err(Error::Shape(format!("nmse of {:?} against {:?}", sr.dims(), hr.dims())));
    }
    let power: f64 = hr.values().iter().map(|h| h * h).sum();
    if power == 0.0 {
        return Err(Error::DegenerateInput("nmse reference is all zero".into()));
    }
    let err: f64 = sr.values().iter().zip(hr.values()).map(|(s, h)| (s - h) * (s - h)).sum();
    if err == 0.0 {
        return Ok(NMSE_FLOOR_DB);
    }
    Ok((10.0 * (err / power).log10()).max(NMSE_FLOOR_DB))
}

/// Shared histogram bins: a zero bin plus `n_bins` log-spaced bins over the
/// union of both grids' nonzero ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct LogBins {
    /// `n_bins + 1` edges in log10 units; empty when no value is nonzero.
    pub edges: Vec<f64>,
}

impl LogBins {
    pub fn spanning(grids: &[&EmissionGrid], n_bins: usize) -> Self {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in grids.iter().flat_map(|g| g.values()).filter(|v| **v > 0.0) {
            let l = v.log10();
            lo = lo.min(l);
            hi = hi.max(l);
        }
        if !lo.is_finite() {
            return Self { edges: Vec::new() };
        }
        let edges = (0..=n_bins)
            .map(|k| if k == n_bins { hi } else { lo + (hi - lo) * k as f64 / n_bins as f64 })
            .collect();
        Self { edges }
    }

    pub fn n_bins(&self) -> usize {
        self.edges.len().saturating_sub(1)
    }

    /// Bin of a value: 0 for zero, `1 + k` for log bin `k`.
    pub fn bin(&self, v: f64) -> usize {
        if v <= 0.0 || self.edges.is_empty() {
            return 0;
        }
        let l = v.log10();
        let k = self.edges[1..].partition_point(|e| *e <= l);
        1 + k.min(self.n_bins().max(1) - 1)
    }

    /// Normalized histogram of `grid`.
    pub fn histogram(&self, grid: &EmissionGrid) -> Vec<f64> {
        let mut h = vec![0.0; self.n_bins().max(1) + 1];
        for v in grid.values() {
            h[self.bin(*v)] += 1.0;
        }
        let n = grid.values().len() as f64;
        h.iter_mut().for_each(|c| *c /= n);
        h
    }
}

/// L1 distance between normalized histograms of `a` and `b` over shared
/// bins; lies in `[0, 2]`.
pub fn distribution_distance(a: &EmissionGrid, b: &EmissionGrid, n_bins: usize) -> Result<f64> {
    if n_bins < 2 {
        return Err(Error::Domain(format!("need at least 2 bins, got {n_bins}")));
    }
    let bins = LogBins::spanning(&[a, b], n_bins);
    let (ha, hb) = (bins.histogram(a), bins.histogram(b));
    Ok(ha.iter().zip(&hb).map(|(p, q)| (p - q).abs()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Compound, GeoBounds, GridMeta, Timestamp};

    fn grid(h: usize, w: usize, values: Vec<f64>) -> EmissionGrid {
        let meta = GridMeta {
            bounds: GeoBounds::centered(h, w, 0.25),
            timestamp: Timestamp::new(2010, 1).unwrap(),
            compound: Compound::Isoprene,
        };
        EmissionGrid::new(h, w, values, meta).unwrap()
    }

    #[test]
    fn ssim_constants() {
        let a = vec![0.5; 16 * 16];
        let b = vec![0.25; 16 * 16];
        let expect = (2.0 * 0.125 + 1e-4) / (0.25 + 0.0625 + 1e-4);
        assert!((ssim(&a, &b, 16, 16).unwrap() - expect).abs() < 1e-12);
        assert_eq!(ssim(&a, &a, 16, 16).unwrap(), 1.0);
    }

    #[test]
    fn ssim_shape_errors() {
        assert!(matches!(ssim(&[0.0; 100], &[0.0; 100], 10, 10), Err(Error::Shape(_))));
        assert!(matches!(ssim(&[0.0; 144], &[0.0; 143], 12, 12), Err(Error::Shape(_))));
    }

    #[test]
    fn nmse_identities() {
        let hr = grid(4, 4, (1..=16).map(|i| i as f64 * 1e-12).collect());
        let zero = grid(4, 4, vec![0.0; 16]);
        assert_eq!(nmse_db(&hr, &hr).unwrap(), NMSE_FLOOR_DB);
        assert_eq!(nmse_db(&hr, &zero).unwrap(), 0.0);
        let up = grid(4, 4, hr.values().iter().map(|v| v * 1.1).collect());
        assert!((nmse_db(&hr, &up).unwrap() + 20.0).abs() < 1e-10);
        for c in [0.5, 2.0, 3.0] {
            let s = grid(4, 4, hr.values().iter().map(|v| v * c).collect());
            let want = 20.0 * (c - 1.0).abs().log10();
            assert!((nmse_db(&hr, &s).unwrap() - want).abs() < 1e-9);
        }
        assert!(matches!(nmse_db(&zero, &hr), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn distance_bounds() {
        let a = grid(2, 2, vec![1e-20, 0.0, 1e-12, 1e-10]);
        assert_eq!(distribution_distance(&a, &a, 64).unwrap(), 0.0);
        let lo = grid(2, 2, vec![1e-25; 4]);
        let hi = grid(2, 2, vec![1e-11; 4]);
        assert_eq!(distribution_distance(&lo, &hi, 64).unwrap(), 2.0);
        let zero = grid(2, 2, vec![0.0; 4]);
        assert_eq!(distribution_distance(&zero, &hi, 64).unwrap(), 2.0);
        assert_eq!(distribution_distance(&zero, &zero, 64).unwrap(), 0.0);
        assert!(distribution_distance(&a, &a, 1).is_err());
    }

    #[test]
    fn extreme_values_land_in_end_bins() {
        let g = grid(1, 3, vec![1e-30, 1e-20, 1e-9]);
        let bins = LogBins::spanning(&[&g], 10);
        assert_eq!(bins.bin(0.0), 0);
        assert_eq!(bins.bin(1e-30), 1);
        assert_eq!(bins.bin(1e-9), 10);
    }
}
