use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::PatchPair;
use crate::error::{Error, Result};
use crate::grid::GeoBounds;

pub const TRAIN_YEARS: RangeInclusive<u16> = 2000..=2014;
pub const VALIDATION_YEARS: RangeInclusive<u16> = 2015..=2018;
pub const TEST_YEARS: RangeInclusive<u16> = 2019..=2020;

/// Split protocol: `random` (D), `time` (D_T) or `time_area` (D_TA).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    Random,
    Time,
    TimeArea,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Random, Protocol::Time, Protocol::TimeArea];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Random => "random",
            Protocol::Time => "time",
            Protocol::TimeArea => "time_area",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::config("protocol", format!("unknown protocol `{s}`")))
    }
}

/// Indices into a pair list, partitioned into three disjoint sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub protocol: Protocol,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Seeded shuffle, then ⌊0.7n⌋ / ⌊0.2n⌋ / remainder.
pub fn split_random(pairs: &[PatchPair], seed: u64) -> Result<DatasetSplit> {
    let n = pairs.len();
    if n < 10 {
        return Err(Error::InsufficientData { needed: 10, got: n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n * 7 / 10;
    let n_val = n * 2 / 10;
    let test = idx.split_off(n_train + n_val);
    let validation = idx.split_off(n_train);
    Ok(DatasetSplit {
        protocol: Protocol::Random,
        train: idx,
        validation,
        test,
    })
}

/// Assignment by year. Pairs dated outside 2000–2020 are left out.
pub fn split_time(pairs: &[PatchPair]) -> DatasetSplit {
    let mut split = DatasetSplit {
        protocol: Protocol::Time,
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (i, p) in pairs.iter().enumerate() {
        let y = p.timestamp().year;
        if TRAIN_YEARS.contains(&y) {
            split.train.push(i);
        } else if VALIDATION_YEARS.contains(&y) {
            split.validation.push(i);
        } else if TEST_YEARS.contains(&y) {
            split.test.push(i);
        }
    }
    split
}

/// Time split, then train/validation restricted to patches fully inside
/// `train_region` and test to patches fully outside it. Patches crossing
/// the region boundary are dropped.
pub fn split_time_area(pairs: &[PatchPair], train_region: &GeoBounds) -> Result<DatasetSplit> {
    if !(train_region.lat_span() > 0.0 && train_region.lon_span() > 0.0) {
        return Err(Error::DegenerateSplit(format!("empty train region {train_region:?}")));
    }
    let inside = |i: &usize| train_region.contains(pairs[*i].hr.bounds());
    let outside = |i: &usize| !train_region.intersects(pairs[*i].hr.bounds());
    if !pairs.is_empty() {
        if !(0..pairs.len()).any(|i| inside(&i)) {
            return Err(Error::DegenerateSplit("train region contains no patch".into()));
        }
        if !(0..pairs.len()).any(|i| outside(&i)) {
            return Err(Error::DegenerateSplit("train region leaves no patch outside".into()));
        }
    }
    let time = split_time(pairs);
    Ok(DatasetSplit {
        protocol: Protocol::TimeArea,
        train: time.train.into_iter().filter(inside).collect(),
        validation: time.validation.into_iter().filter(inside).collect(),
        test: time.test.into_iter().filter(outside).collect(),
    })
}

/// Keeps a seeded uniform subset of `target` training indices (in their
/// original order); validation and test are untouched.
pub fn subsample_to_cardinality(
    split: &DatasetSplit,
    target: usize,
    seed: u64,
) -> Result<DatasetSplit> {
    let n = split.train.len();
    if target > n {
        return Err(Error::Domain(format!("cannot subsample {n} training pairs to {target}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.truncate(target);
    order.sort_unstable();
    Ok(DatasetSplit {
        train: order.into_iter().map(|k| split.train[k]).collect(),
        ..split.clone()
    })
}
