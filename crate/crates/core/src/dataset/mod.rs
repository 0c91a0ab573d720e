//! Training corpus construction.
//!
//! HR maps are tiled into non-overlapping square patches, patches that are
//! too sparse are discarded, and each surviving patch is paired with an LR
//! version obtained by bicubic downsampling. Pairs are then split into
//! train/validation/test sets under one of three protocols (see
//! [`Protocol`]).

mod manifest;
mod split;
mod synth;

pub use manifest::{
    load_dataset, read_manifest, save_dataset, write_manifest, ManifestEntry, SplitRole,
};
pub use split::{
    split_random, split_time, split_time_area, subsample_to_cardinality, DatasetSplit, Protocol,
    TEST_YEARS, TRAIN_YEARS, VALIDATION_YEARS,
};
pub use synth::{synth_emissions, CompoundProfile, SynthConfig, CALENDAR_MONTHS, FIRST_YEAR};

use crate::error::{Error, Result};
use crate::grid::{flush_below_floor, EmissionGrid, Timestamp};
use crate::resample::{bicubic_resample, clamp_non_negative, Factor, Plane, ResampleSpec};

pub const DEFAULT_PATCH_SIZE: usize = 64;
pub const DEFAULT_MIN_NONZERO: f64 = 0.05;

/// A patch together with where it was cut from.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub grid: EmissionGrid,
    pub origin: PatchOrigin,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PatchOrigin {
    pub source: String,
    pub row: usize,
    pub col: usize,
}

impl PatchOrigin {
    pub fn pair_id(&self) -> String {
        format!("{}-r{}-c{}", self.source, self.row, self.col)
    }

    /// Inverse of [`PatchOrigin::pair_id`].
    pub fn parse(id: &str) -> Option<Self> {
        let (rest, col) = id.rsplit_once("-c")?;
        let (source, row) = rest.rsplit_once("-r")?;
        Some(Self {
            source: source.to_string(),
            row: row.parse().ok()?,
            col: col.parse().ok()?,
        })
    }
}

/// An aligned LR/HR training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    pub lr: EmissionGrid,
    pub hr: EmissionGrid,
    pub alpha: usize,
    pub origin: PatchOrigin,
}

impl PatchPair {
    pub fn id(&self) -> String {
        self.origin.pair_id()
    }

    pub fn timestamp(&self) -> Timestamp {
        self.hr.timestamp()
    }
}

/// Tiles `grid` into `patch_size` squares, row-major, dropping partial
/// tiles at the right and bottom edges.
pub fn slice_patches(grid: &EmissionGrid, source: &str, patch_size: usize) -> Result<Vec<Patch>> {
    if patch_size == 0 {
        return Err(Error::Domain("patch size must be positive".into()));
    }
    let (h, w) = grid.dims();
    if patch_size > h.max(w) {
        return Err(Error::Domain(format!("patch size {patch_size} exceeds {h}x{w} grid")));
    }
    let mut out = Vec::with_capacity((h / patch_size) * (w / patch_size));
    for r in (0..h / patch_size).map(|i| i * patch_size) {
        for c in (0..w / patch_size).map(|j| j * patch_size) {
            out.push(Patch {
                grid: grid.window(r, c, patch_size, patch_size)?,
                origin: PatchOrigin {
                    source: source.to_string(),
                    row: r,
                    col: c,
                },
            });
        }
    }
    Ok(out)
}

/// True when the fraction of strictly positive cells is at least
/// `min_nonzero_fraction`.
pub fn sparsity_filter(patch: &EmissionGrid, min_nonzero_fraction: f64) -> bool {
    let total = patch.values().len() as f64;
    patch.nonzero_count() as f64 / total >= min_nonzero_fraction
}

/// Bicubic reduction of `grid` by an integer `factor`, clamped to be
/// non-negative, with sub-floor values flushed to zero.
pub fn downsample(grid: &EmissionGrid, factor: usize) -> Result<EmissionGrid> {
    let (h, w) = grid.dims();
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(Error::Domain(format!("{h}x{w} grid is not divisible by {factor}")));
    }
    if factor == 1 {
        return Ok(grid.clone());
    }
    let plane = Plane::new(h, w, grid.values().to_vec())?;
    let spec = ResampleSpec::new(Factor::down(factor as u32)).with_antialias(true);
    let mut values = clamp_non_negative(&bicubic_resample(&plane, &spec)?).data;
    flush_below_floor(&mut values);
    grid.with_values(h / factor, w / factor, values)
}

/// Reduces a map to a `factor`-times coarser cell size over the same area.
pub fn coarsen(grid: &EmissionGrid, factor: usize) -> Result<EmissionGrid> {
    downsample(grid, factor)
}

/// Pairs each HR patch with its `alpha`-times downsampled LR counterpart.
pub fn make_pairs(patches: &[Patch], alpha: usize) -> Result<Vec<PatchPair>> {
    patches
        .iter()
        .map(|p| {
            Ok(PatchPair {
                lr: downsample(&p.grid, alpha)?,
                hr: p.grid.clone(),
                alpha,
                origin: p.origin.clone(),
            })
        })
        .collect()
}

/// Counts reported by [`build_pairs`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PrepareStats {
    pub sliced: usize,
    pub retained: usize,
    pub discarded: usize,
}

/// Slices every map, filters sparse patches and builds LR/HR pairs.
/// `maps` carries a source id per map.
pub fn build_pairs(
    maps: &[(String, EmissionGrid)],
    patch_size: usize,
    min_nonzero_fraction: f64,
    alpha: usize,
) -> Result<(Vec<PatchPair>, PrepareStats)> {
    if maps.is_empty() {
        return Err(Error::Domain("empty corpus".into()));
    }
    if !(0.0..=1.0).contains(&min_nonzero_fraction) {
        return Err(Error::config(
            "min_nonzero",
            format!("must lie in [0, 1], got {min_nonzero_fraction}"),
        ));
    }
    let mut stats = PrepareStats::default();
    let mut pairs = Vec::new();
    for (id, map) in maps {
        let patches = slice_patches(map, id, patch_size)?;
        stats.sliced += patches.len();
        let kept: Vec<Patch> = patches
            .into_iter()
            .filter(|p| sparsity_filter(&p.grid, min_nonzero_fraction))
            .collect();
        pairs.extend(make_pairs(&kept, alpha)?);
    }
    stats.retained = pairs.len();
    stats.discarded = stats.sliced - stats.retained;
    Ok((pairs, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Compound, GeoBounds, GridMeta};

    fn meta(h: usize, w: usize) -> GridMeta {
        GridMeta {
            bounds: GeoBounds::centered(h, w, 0.25),
            timestamp: Timestamp::new(2005, 6).unwrap(),
            compound: Compound::Isoprene,
        }
    }

    fn grid(h: usize, w: usize, f: impl Fn(usize) -> f64) -> EmissionGrid {
        EmissionGrid::new(h, w, (0..h * w).map(f).collect(), meta(h, w)).unwrap()
    }

    #[test]
    fn slicing_counts() {
        let g = EmissionGrid::zeros(720, 1440, meta(720, 1440)).unwrap();
        assert_eq!(slice_patches(&g, "m", 64).unwrap().len(), 22 * 11);
        let g = grid(64, 64, |i| i as f64 * 1e-15);
        let one = slice_patches(&g, "m", 64).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].grid, g);
        let g = EmissionGrid::zeros(63, 64, meta(63, 64)).unwrap();
        assert!(slice_patches(&g, "m", 64).unwrap().is_empty());
        assert!(slice_patches(&g, "m", 65).is_err());
    }

    #[test]
    fn patches_inherit_position() {
        let g = grid(128, 192, |i| (i % 7) as f64 * 1e-12);
        let ps = slice_patches(&g, "m7", 64).unwrap();
        assert_eq!(ps.len(), 6);
        let p = &ps[4];
        assert_eq!((p.origin.row, p.origin.col), (64, 64));
        assert_eq!(p.grid.get(0, 0), g.get(64, 64));
        assert_eq!(p.grid.bounds().lon_min, g.bounds().lon_min + 16.0);
        assert_eq!(p.grid.bounds().lat_max, g.bounds().lat_max - 16.0);
        assert_eq!(PatchOrigin::parse(&p.origin.pair_id()), Some(p.origin.clone()));
    }

    #[test]
    fn sparsity_boundary_is_inclusive() {
        assert!(!sparsity_filter(&grid(64, 64, |_| 0.0), 0.05));
        assert!(sparsity_filter(&grid(64, 64, |i| if i < 205 { 1e-12 } else { 0.0 }), 0.05));
        assert!(!sparsity_filter(&grid(64, 64, |i| if i < 204 { 1e-12 } else { 0.0 }), 0.05));
        assert!(sparsity_filter(&grid(20, 20, |i| if i < 20 { 1e-12 } else { 0.0 }), 0.05));
        assert!(sparsity_filter(&grid(8, 8, |_| 1e-20), 1.0));
    }

    #[test]
    fn pair_dims_and_constants() {
        let g = grid(64, 64, |_| 3e-11);
        let pairs = make_pairs(&slice_patches(&g, "m", 64).unwrap(), 4).unwrap();
        assert_eq!(pairs[0].lr.dims(), (16, 16));
        for v in pairs[0].lr.values() {
            assert!((v - 3e-11).abs() <= 1e-12 * 3e-11);
        }
        assert_eq!(pairs[0].lr.cell_size_deg(), 1.0);
        let id = make_pairs(&slice_patches(&g, "m", 64).unwrap(), 1).unwrap();
        assert_eq!(id[0].lr, id[0].hr);
        assert!(make_pairs(&slice_patches(&grid(30, 30, |_| 0.0), "m", 30).unwrap(), 4).is_err());
    }

    #[test]
    fn lr_is_within_envelope_and_reproducible() {
        let g = grid(64, 64, |i| if i % 3 == 0 { 1e-9 } else if i % 3 == 1 { 1e-30 } else { 0.0 });
        let pair = &make_pairs(&slice_patches(&g, "m", 64).unwrap(), 4).unwrap()[0];
        assert!(pair.lr.within_envelope());
        assert_eq!(downsample(&pair.hr, 4).unwrap(), pair.lr);
    }

    #[test]
    fn build_pairs_counts() {
        let dense = grid(128, 128, |_| 1e-12);
        let sparse = grid(128, 128, |i| if i == 0 { 1e-12 } else { 0.0 });
        let maps = vec![("a".to_string(), dense), ("b".to_string(), sparse)];
        let (pairs, stats) = build_pairs(&maps, 64, 0.05, 4).unwrap();
        assert_eq!(stats, PrepareStats { sliced: 8, retained: 4, discarded: 4 });
        assert!(pairs.iter().all(|p| p.origin.source == "a"));
        assert!(matches!(build_pairs(&[], 64, 0.05, 4), Err(Error::Domain(_))));
        let (none, _) = build_pairs(&maps, 64, 1.0, 4).unwrap();
        assert_eq!(none.len(), 4);
    }
}
