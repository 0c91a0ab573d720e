mod common;

use common::{grid, sparse_values};
use emsr_core::evaluation::{distribution_distance, nmse_db, ssim, LogBins, SSIM_K1, SSIM_K2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Windowed SSIM written from scratch: full 2D Gaussian weights, per-window
/// weighted moments, no separability.
fn ssim_direct(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let k = 11usize;
    let mut wts = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            wts[i * k + j] = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
        }
    }
    let s: f64 = wts.iter().sum();
    wts.iter_mut().for_each(|x| *x /= s);
    let (c1, c2) = ((0.01f64).powi(2), (0.03f64).powi(2));
    let mut total = 0.0;
    let mut count = 0;
    for r in 0..=h - k {
        for c in 0..=w - k {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let p = (r + i) * w + c + j;
                    ma += wts[i * k + j] * a[p];
                    mb += wts[i * k + j] * b[p];
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let p = (r + i) * w + c + j;
                    let (da, db) = (a[p] - ma, b[p] - mb);
                    va += wts[i * k + j] * da * da;
                    vb += wts[i * k + j] * db * db;
                    cov += wts[i * k + j] * da * db;
                }
            }
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

#[test]
fn ssim_matches_direct_windowed_oracle() {
    assert_eq!((SSIM_K1, SSIM_K2), (0.01, 0.03));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (h, w) in [(11, 11), (16, 16), (23, 31), (64, 64)] {
        let a: Vec<f64> = (0..h * w).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = a.iter().map(|v| (v + 0.2 * rng.random::<f64>() - 0.1).clamp(0.0, 1.0)).collect();
        let got = ssim(&a, &b, h, w).unwrap();
        let want = ssim_direct(&a, &b, h, w);
        assert!((got - want).abs() < 1e-9, "{h}x{w}: {got} vs {want}");
    }
}

/// Histogram by explicit edge comparison.
fn histogram_oracle(values: &[f64], lo: f64, hi: f64, n_bins: usize) -> Vec<f64> {
    let mut hist = vec![0.0; n_bins + 1];
    for &v in values {
        if v <= 0.0 {
            hist[0] += 1.0;
            continue;
        }
        let l = v.log10();
        let mut k = 0;
        while k + 1 < n_bins && l >= lo + (hi - lo) * (k + 1) as f64 / n_bins as f64 {
            k += 1;
        }
        hist[1 + k] += 1.0;
    }
    hist.iter().map(|c| c / values.len() as f64).collect()
}

#[test]
fn histogram_matches_counting_oracle() {
    let a = grid(32, 32, sparse_values(1, 1024, 0.4, -25.0, -10.0));
    let b = grid(32, 32, sparse_values(2, 1024, 0.2, -22.0, -9.5));
    let bins = LogBins::spanning(&[&a, &b], 64);
    let nz = a.values().iter().chain(b.values()).filter(|v| **v > 0.0).map(|v| v.log10());
    let lo = nz.clone().fold(f64::INFINITY, f64::min);
    let hi = nz.fold(f64::NEG_INFINITY, f64::max);
    let (ha, hb) = (histogram_oracle(a.values(), lo, hi, 64), histogram_oracle(b.values(), lo, hi, 64));
    for (got, want) in [(bins.histogram(&a), &ha), (bins.histogram(&b), &hb)] {
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
    }
    let l1: f64 = ha.iter().zip(&hb).map(|(p, q)| (p - q).abs()).sum();
    assert!((distribution_distance(&a, &b, 64).unwrap() - l1).abs() < 1e-12);
}

proptest! {
    #[test]
    fn ssim_is_symmetric_and_at_most_one(seed in 0u64..1000, h in 11usize..24, w in 11usize..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..h * w).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..h * w).map(|_| rng.random::<f64>()).collect();
        let ab = ssim(&a, &b, h, w).unwrap();
        let ba = ssim(&b, &a, h, w).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((-1.0..=1.0 + 1e-12).contains(&ab));
        prop_assert_eq!(ssim(&a, &a, h, w).unwrap(), 1.0);
    }

    #[test]
    fn nmse_of_scaled_output(seed in 0u64..1000, c in 0.01f64..5.0) {
        prop_assume!((c - 1.0).abs() > 1e-3);
        let hr = grid(8, 8, sparse_values(seed, 64, 0.3, -20.0, -10.0));
        prop_assume!(hr.nonzero_count() > 0);
        let sr = grid(8, 8, hr.values().iter().map(|v| v * c).collect());
        let want = 20.0 * (c - 1.0).abs().log10();
        prop_assert!((nmse_db(&hr, &sr).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn distance_is_a_bounded_symmetric_l1(sa in 0u64..500, sb in 0u64..500, pz in 0.0f64..1.0) {
        let a = grid(8, 8, sparse_values(sa, 64, pz, -28.0, -9.0));
        let b = grid(8, 8, sparse_values(sb, 64, 0.5, -28.0, -9.0));
        let d = distribution_distance(&a, &b, 64).unwrap();
        prop_assert!((0.0..=2.0 + 1e-12).contains(&d));
        prop_assert!((d - distribution_distance(&b, &a, 64).unwrap()).abs() < 1e-12);
        prop_assert_eq!(distribution_distance(&a, &a, 64).unwrap(), 0.0);
    }
}
