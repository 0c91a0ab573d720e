//! Seeded synthetic emission maps.
//!
//! A fixed "world" of anisotropic Gaussian sources is drawn from the seed.
//! Sources in the west are broad and smooth, sources in the east small and
//! sharp, so geographically held-out areas differ in texture. Each monthly
//! map modulates source strengths seasonally, adds smooth multiplicative
//! weather noise, zeroes all but a random fraction of cells, and remaps the
//! surviving values log-affinely onto roughly 20 decades below 1e-9.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::{
    Compound, EmissionGrid, GeoBounds, GridMeta, Timestamp, EMISSION_FLOOR, EMISSION_MAX,
};

pub const FIRST_YEAR: u16 = 2000;
/// Months from January 2000 through December 2020.
pub const CALENDAR_MONTHS: usize = 252;

/// Source statistics that distinguish compounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompoundProfile {
    /// Sources per 30 square degrees.
    pub blob_density: f64,
    /// Standard deviation of log10 source amplitude.
    pub amplitude_sigma: f64,
    /// Multiplier on source widths.
    pub width_scale: f64,
    /// Multiplier on the per-map nonzero fraction.
    pub coverage_scale: f64,
}

impl CompoundProfile {
    pub fn of(compound: Compound) -> Self {
        let (blob_density, amplitude_sigma, width_scale, coverage_scale) = match compound {
            Compound::Isoprene => (1.0, 0.8, 1.0, 1.0),
            Compound::Monoterpenes => (1.4, 0.6, 0.8, 1.1),
            Compound::Methanol => (0.6, 0.4, 1.6, 1.3),
            Compound::Sesquiterpenes => (1.8, 1.2, 0.6, 0.7),
        };
        Self {
            blob_density,
            amplitude_sigma,
            width_scale,
            coverage_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_maps: usize,
    pub height: usize,
    pub width: usize,
    pub cell_size_deg: f64,
    pub compound: Compound,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_maps: CALENDAR_MONTHS,
            height: 192,
            width: 384,
            cell_size_deg: 0.25,
            compound: Compound::Isoprene,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height < 64 || self.width < 64 {
            return Err(Error::config(
                "height",
                format!("maps must be at least 64x64, got {}x{}", self.height, self.width),
            ));
        }
        if !(self.cell_size_deg.is_finite() && self.cell_size_deg > 0.0) {
            return Err(Error::config("cell_size", "must be positive"));
        }
        let b = self.bounds();
        if b.lat_max > 90.0 || b.lon_max > 180.0 {
            return Err(Error::config("cell_size", "map extent exceeds the globe"));
        }
        Ok(())
    }

    pub fn bounds(&self) -> GeoBounds {
        GeoBounds::centered(self.height, self.width, self.cell_size_deg)
    }

    /// Calendar month of map `i`; maps are spread evenly over 2000–2020.
    pub fn timestamp(&self, i: usize) -> Timestamp {
        let m = i
            .checked_rem(self.n_maps)
            .map_or(0, |r| r * CALENDAR_MONTHS / self.n_maps);
        Timestamp::new(FIRST_YEAR + (m / 12) as u16, (m % 12) as u8 + 1)
            .expect("month index is in 1..=12")
    }
}

#[derive(Debug, Clone)]
struct Source {
    lat: f64,
    lon: f64,
    sigma_major: f64,
    sigma_minor: f64,
    cos_t: f64,
    sin_t: f64,
    amplitude: f64,
    phase: f64,
    depth: f64,
}

/// Sum of random plane waves with roughly unit variance.
#[derive(Debug, Clone)]
struct SmoothNoise {
    modes: Vec<[f64; 3]>,
    amp: f64,
}

impl SmoothNoise {
    fn new(rng: &mut ChaCha8Rng, n_modes: usize, min_wavelength: f64, max_wavelength: f64) -> Self {
        let modes = (0..n_modes)
            .map(|_| {
                let wavelength = rng.random_range(min_wavelength..max_wavelength);
                let dir = rng.random_range(0.0..PI);
                let k = 2.0 * PI / wavelength;
                [k * dir.cos(), k * dir.sin(), rng.random_range(0.0..2.0 * PI)]
            })
            .collect();
        Self {
            modes,
            amp: (2.0 / n_modes as f64).sqrt(),
        }
    }

    fn eval(&self, lat: f64, lon: f64) -> f64 {
        self.amp * self.modes.iter().map(|[kx, ky, ph]| (kx * lon + ky * lat + ph).sin()).sum::<f64>()
    }
}

struct World {
    sources: Vec<Source>,
    background: SmoothNoise,
    /// Sub-degree texture that strengthens towards the east.
    texture: SmoothNoise,
}

impl World {
    fn new(cfg: &SynthConfig, profile: &CompoundProfile) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let b = cfg.bounds();
        let n = (profile.blob_density * b.lat_span() * b.lon_span() / 30.0).round() as usize;
        let log_amp = Normal::new(0.0, profile.amplitude_sigma).expect("positive sigma");
        let sources = (0..n.max(1))
            .map(|_| {
                let lat = rng.random_range(b.lat_min..b.lat_max);
                // Source density grows linearly from west to east (1:3).
                let u: f64 = rng.random();
                let east = (-1.0 + (1.0 + 8.0 * u).sqrt()) / 2.0;
                let lon = b.lon_min + east * b.lon_span();
                // Broad in the west, fine in the east.
                let sigma = profile.width_scale * rng.random_range(0.4..2.0) * 2f64.powf(1.0 - 2.0 * east);
                let theta: f64 = rng.random_range(0.0..PI);
                Source {
                    lat,
                    lon,
                    sigma_major: sigma,
                    sigma_minor: sigma * rng.random_range(0.3..1.0),
                    cos_t: theta.cos(),
                    sin_t: theta.sin(),
                    amplitude: 10f64.powf(log_amp.sample(&mut rng)),
                    phase: rng.random_range(0.0..12.0),
                    depth: rng.random_range(0.2..0.8),
                }
            })
            .collect();
        let background = SmoothNoise::new(&mut rng, 8, 4.0, 30.0);
        let texture = SmoothNoise::new(&mut rng, 24, 0.5, 2.0);
        Self {
            sources,
            background,
            texture,
        }
    }
}

fn render_map(cfg: &SynthConfig, profile: &CompoundProfile, world: &World, i: usize) -> Result<EmissionGrid> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(i as u64 + 1);
    let (h, w, cs) = (cfg.height, cfg.width, cfg.cell_size_deg);
    let b = cfg.bounds();
    let ts = cfg.timestamp(i);
    let month = (ts.month - 1) as f64;
    let weather = SmoothNoise::new(&mut rng, 8, 3.0, 20.0);
    let jitter = Normal::<f64>::new(0.0, 0.15).expect("positive sigma");
    let wobble = Normal::<f64>::new(0.0, 0.25).expect("positive sigma");
    let lat_of = |r: usize| b.lat_max - (r as f64 + 0.5) * cs;
    let lon_of = |c: usize| b.lon_min + (c as f64 + 0.5) * cs;

    let mut field = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let (lat, lon) = (lat_of(r), lon_of(c));
            let east = (lon - b.lon_min) / b.lon_span();
            let log_bg = world.background.eval(lat, lon) + east * (3.0 + 2.0 * world.texture.eval(lat, lon));
            field[r * w + c] = 1e-3 * log_bg.exp();
        }
    }
    for s in &world.sources {
        let season = 1.0 + s.depth * (2.0 * PI * (month + s.phase) / 12.0).sin();
        let amp = s.amplitude * season * wobble.sample(&mut rng).exp();
        let lat0 = s.lat + jitter.sample(&mut rng);
        let lon0 = s.lon + jitter.sample(&mut rng);
        let reach = 4.0 * s.sigma_major;
        let r0 = ((b.lat_max - lat0 - reach) / cs).floor().max(0.0) as usize;
        let r1 = (((b.lat_max - lat0 + reach) / cs).ceil().max(0.0) as usize).min(h);
        let c0 = ((lon0 - reach - b.lon_min) / cs).floor().max(0.0) as usize;
        let c1 = (((lon0 + reach - b.lon_min) / cs).ceil().max(0.0) as usize).min(w);
        let (ia, ib) = (0.5 / (s.sigma_major * s.sigma_major), 0.5 / (s.sigma_minor * s.sigma_minor));
        for r in r0..r1 {
            let dy = lat_of(r) - lat0;
            for c in c0..c1 {
                let dx = lon_of(c) - lon0;
                let u = dx * s.cos_t + dy * s.sin_t;
                let v = -dx * s.sin_t + dy * s.cos_t;
                field[r * w + c] += amp * (-(u * u * ia + v * v * ib)).exp();
            }
        }
    }
    for r in 0..h {
        for c in 0..w {
            field[r * w + c] *= (0.3 * weather.eval(lat_of(r), lon_of(c))).exp();
        }
    }

    let fraction = (rng.random_range(0.02..0.6) * profile.coverage_scale).clamp(0.02, 0.6);
    let mut sorted = field.clone();
    sorted.sort_by(f64::total_cmp);
    let keep = ((fraction * sorted.len() as f64).ceil() as usize).max(1);
    let threshold = sorted[sorted.len() - keep];
    let top = sorted[sorted.len() - 1];
    let (l_lo, l_hi) = (threshold.log10(), top.log10());
    let hi = -9.1 - rng.random_range(0.0..0.3) - 0.3 * (1.0 + (2.0 * PI * month / 12.0).cos()) / 2.0;
    let lo = -29.6 + rng.random_range(0.0..0.6);
    let values = field
        .iter()
        .map(|&v| {
            if v < threshold {
                return 0.0;
            }
            let t = if l_hi > l_lo { (v.log10() - l_lo) / (l_hi - l_lo) } else { 1.0 };
            10f64.powf(lo + t * (hi - lo)).clamp(EMISSION_FLOOR, EMISSION_MAX)
        })
        .collect();
    EmissionGrid::new(
        h,
        w,
        values,
        GridMeta {
            bounds: b,
            timestamp: ts,
            compound: cfg.compound,
        },
    )
}

/// Generates `cfg.n_maps` monthly maps. Identical configs give
/// bit-identical maps.
pub fn synth_emissions(cfg: &SynthConfig) -> Result<Vec<EmissionGrid>> {
    cfg.validate()?;
    let profile = CompoundProfile::of(cfg.compound);
    let world = World::new(cfg, &profile);
    (0..cfg.n_maps).map(|i| render_map(cfg, &profile, &world, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            seed,
            n_maps: 6,
            height: 64,
            width: 128,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_emissions(&small(1)).unwrap();
        assert_eq!(a, synth_emissions(&small(1)).unwrap());
        assert_ne!(a, synth_emissions(&small(2)).unwrap());
    }

    #[test]
    fn maps_respect_envelope_and_sparsity() {
        let maps = synth_emissions(&small(4)).unwrap();
        let (mut lo, mut hi) = (f64::INFINITY, 0f64);
        for m in &maps {
            assert!(m.within_envelope());
            let f = m.nonzero_count() as f64 / m.values().len() as f64;
            assert!((0.019..=0.61).contains(&f), "fraction {f}");
            for v in m.values().iter().filter(|v| **v > 0.0) {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
        }
        assert!((hi / lo).log10() >= 10.0);
    }

    #[test]
    fn calendar_spacing() {
        let cfg = SynthConfig::default();
        assert_eq!(cfg.timestamp(0), Timestamp::new(2000, 1).unwrap());
        assert_eq!(cfg.timestamp(251), Timestamp::new(2020, 12).unwrap());
        let few = SynthConfig { n_maps: 21, ..cfg };
        assert_eq!(few.timestamp(20), Timestamp::new(2020, 1).unwrap());
    }

    #[test]
    fn no_maps_and_bad_dims() {
        assert!(synth_emissions(&SynthConfig { n_maps: 0, ..small(0) }).unwrap().is_empty());
        assert!(synth_emissions(&SynthConfig { height: 32, ..small(0) }).unwrap_err().is_config());
    }
}
