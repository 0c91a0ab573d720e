mod common;

use std::collections::BTreeSet;

use common::{grid, sparse_values};
use emsr_core::dataset::*;
use emsr_core::grid::{EmissionGrid, GeoBounds, EMISSION_FLOOR, EMISSION_MAX};
use proptest::prelude::*;

fn small_corpus(seed: u64, n_maps: usize) -> Vec<(String, EmissionGrid)> {
    let cfg = SynthConfig {
        seed,
        n_maps,
        height: 64,
        width: 128,
        ..SynthConfig::default()
    };
    synth_emissions(&cfg)
        .unwrap()
        .into_iter()
        .enumerate()
        .map(|(i, g)| (format!("m{i:03}"), g))
        .collect()
}

fn assert_envelope(g: &EmissionGrid) {
    for &v in g.values() {
        assert!(v == 0.0 || (EMISSION_FLOOR..=EMISSION_MAX).contains(&v), "{v}");
    }
}

#[test]
fn synthetic_corpus_passes_grid_validation() {
    for (_, g) in small_corpus(3, 12) {
        let rebuilt = EmissionGrid::new(g.height(), g.width(), g.values().to_vec(), *g.meta()).unwrap();
        assert_eq!(rebuilt, g);
        assert_envelope(&g);
        assert!(g.nonzero_count() > 0);
    }
}

#[test]
fn patches_tile_the_map_without_overlap() {
    let (_, map) = &small_corpus(4, 1)[0];
    let patches = slice_patches(map, "m", 32).unwrap();
    assert_eq!(patches.len(), (64 / 32) * (128 / 32));
    let mut seen = vec![0u8; 64 * 128];
    for p in &patches {
        let (r0, c0) = (p.origin.row, p.origin.col);
        for r in 0..32 {
            for c in 0..32 {
                seen[(r0 + r) * 128 + c0 + c] += 1;
                assert_eq!(p.grid.get(r, c), map.get(r0 + r, c0 + c));
            }
        }
    }
    assert!(seen.iter().all(|&s| s == 1));
}

#[test]
fn pairs_have_matching_geometry() {
    let (pairs, stats) = build_pairs(&small_corpus(5, 6), 32, 0.05, 4).unwrap();
    assert_eq!(stats.sliced, stats.retained + stats.discarded);
    assert_eq!(pairs.len(), stats.retained);
    for p in &pairs {
        assert_eq!(p.lr.dims(), (8, 8));
        assert_eq!(p.hr.dims(), (32, 32));
        assert_eq!(p.lr.bounds(), p.hr.bounds());
        assert_envelope(&p.lr);
        assert!(sparsity_filter(&p.hr, 0.05));
    }
}

#[test]
fn all_threshold_leaves_almost_nothing() {
    let (pairs, stats) = build_pairs(&small_corpus(6, 6), 32, 1.0, 4).unwrap();
    assert!(pairs.len() * 4 < stats.sliced);
    assert!(matches!(build_pairs(&[], 32, 0.05, 4), Err(emsr_core::Error::Domain(_))));
}

#[test]
fn manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (pairs, _) = build_pairs(&small_corpus(7, 20), 32, 0.05, 4).unwrap();
    let split = split_random(&pairs, 9).unwrap();
    let manifest = save_dataset(dir.path(), &pairs, &split).unwrap();
    let (loaded, loaded_split) = load_dataset(&manifest).unwrap();
    assert_eq!(loaded_split.protocol, Protocol::Random);
    let by_id = |ps: &[PatchPair], idx: &[usize]| idx.iter().map(|&i| ps[i].id()).collect::<BTreeSet<_>>();
    assert_eq!(by_id(&pairs, &split.train), by_id(&loaded, &loaded_split.train));
    assert_eq!(by_id(&pairs, &split.test), by_id(&loaded, &loaded_split.test));
    for p in &loaded {
        let orig = pairs.iter().find(|q| q.id() == p.id()).unwrap();
        assert_eq!(orig.hr, p.hr);
        assert_eq!(orig.lr, p.lr);
    }
}

#[test]
fn time_area_keeps_regions_apart() {
    let cfg = SynthConfig {
        n_maps: 24,
        height: 64,
        width: 256,
        ..SynthConfig::default()
    };
    let maps: Vec<_> = synth_emissions(&cfg)
        .unwrap()
        .into_iter()
        .enumerate()
        .map(|(i, g)| (format!("m{i}"), g))
        .collect();
    let (pairs, _) = build_pairs(&maps, 32, 0.0, 4).unwrap();
    let region = GeoBounds {
        lat_min: -90.0,
        lat_max: 90.0,
        lon_min: -32.0,
        lon_max: 0.0,
    };
    let s = split_time_area(&pairs, &region).unwrap();
    for &i in s.train.iter().chain(&s.validation) {
        assert!(region.contains(pairs[i].hr.bounds()));
    }
    for &i in &s.test {
        assert!(!region.intersects(pairs[i].hr.bounds()));
    }
    let far = GeoBounds {
        lat_min: 50.0,
        lat_max: 60.0,
        lon_min: 100.0,
        lon_max: 110.0,
    };
    assert!(matches!(split_time_area(&pairs, &far), Err(emsr_core::Error::DegenerateSplit(_))));
}

fn fake_pairs(n: usize) -> Vec<PatchPair> {
    (0..n)
        .map(|i| {
            let hr = grid(8, 8, sparse_values(i as u64, 64, 0.5, -20.0, -10.0));
            PatchPair {
                lr: downsample(&hr, 2).unwrap(),
                hr,
                alpha: 2,
                origin: PatchOrigin {
                    source: format!("s{i}"),
                    row: 0,
                    col: 0,
                },
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_split_is_a_partition(n in 10usize..300, seed in any::<u64>()) {
        let pairs = fake_pairs(n);
        let s = split_random(&pairs, seed).unwrap();
        prop_assert_eq!(s.train.len(), n * 7 / 10);
        prop_assert_eq!(s.validation.len(), n * 2 / 10);
        let all: BTreeSet<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
        prop_assert_eq!(all.len(), n);
        prop_assert_eq!(s.len(), n);
        prop_assert_eq!(split_random(&pairs, seed).unwrap(), s);
    }

    #[test]
    fn subsampling_takes_an_ordered_subset(n in 10usize..200, frac in 0.0f64..1.2, seed in any::<u64>()) {
        let pairs = fake_pairs(n);
        let s = split_random(&pairs, 1).unwrap();
        let target = (s.train.len() as f64 * frac) as usize;
        match subsample_to_cardinality(&s, target, seed) {
            Ok(sub) => {
                prop_assert!(target <= s.train.len());
                prop_assert_eq!(sub.train.len(), target);
                let pos: Vec<usize> = sub.train.iter().map(|i| s.train.iter().position(|j| j == i).unwrap()).collect();
                prop_assert!(pos.windows(2).all(|w| w[0] < w[1]));
                prop_assert_eq!(&sub.validation, &s.validation);
                prop_assert_eq!(&sub.test, &s.test);
            }
            Err(_) => prop_assert!(target > s.train.len()),
        }
    }

    #[test]
    fn downsampled_pairs_stay_in_envelope(seed in any::<u64>(), pz in 0.0f64..0.95) {
        let hr = grid(16, 16, sparse_values(seed, 256, pz, -29.0, -9.0));
        for f in [2usize, 4] {
            let lr = downsample(&hr, f).unwrap();
            prop_assert_eq!(lr.dims(), (16 / f, 16 / f));
            for &v in lr.values() {
                prop_assert!(v == 0.0 || (EMISSION_FLOOR..=EMISSION_MAX).contains(&v));
            }
        }
    }
}
