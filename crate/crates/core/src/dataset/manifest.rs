//! Dataset manifests: one line per pair,
//! `pair-id, lr-path, hr-path, alpha, year, month, compound, split`.
//! Paths are relative to the manifest's directory. Lines starting with `#`
//! are comments; `# protocol: <name>` records the split protocol.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{DatasetSplit, PatchOrigin, PatchPair, Protocol};
use crate::error::{Error, Result};
use crate::grid::{read_grid, write_grid, Compound, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitRole {
    Train,
    Validation,
    Test,
}

impl SplitRole {
    pub fn name(self) -> &'static str {
        match self {
            SplitRole::Train => "train",
            SplitRole::Validation => "validation",
            SplitRole::Test => "test",
        }
    }
}

impl fmt::Display for SplitRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SplitRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitRole::Train),
            "validation" => Ok(SplitRole::Validation),
            "test" => Ok(SplitRole::Test),
            _ => Err(Error::Format(format!("unknown split `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub pair_id: String,
    pub lr_path: PathBuf,
    pub hr_path: PathBuf,
    pub alpha: usize,
    pub timestamp: Timestamp,
    pub compound: Compound,
    pub split: SplitRole,
}

pub fn write_manifest(path: &Path, protocol: Protocol, entries: &[ManifestEntry]) -> Result<()> {
    let mut text = format!("# protocol: {protocol}\n");
    for e in entries {
        text.push_str(&format!(
            "{}, {}, {}, {}, {}, {}, {}, {}\n",
            e.pair_id,
            e.lr_path.display(),
            e.hr_path.display(),
            e.alpha,
            e.timestamp.year,
            e.timestamp.month,
            e.compound,
            e.split
        ));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<(Protocol, Vec<ManifestEntry>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut protocol = Protocol::Random;
    let mut entries = Vec::new();
    let bad = |n: usize, what: &str| Error::Format(format!("{}:{}: {what}", path.display(), n + 1));
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(name) = comment.trim().strip_prefix("protocol:") {
                protocol = name.trim().parse().map_err(|_| bad(n, "unknown protocol"))?;
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 8 {
            return Err(bad(n, "expected 8 fields"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad(n, "bad number"));
        entries.push(ManifestEntry {
            pair_id: f[0].to_string(),
            lr_path: PathBuf::from(f[1]),
            hr_path: PathBuf::from(f[2]),
            alpha: num(f[3])?,
            timestamp: Timestamp::new(num(f[4])? as u16, num(f[5])? as u8)
                .map_err(|_| bad(n, "bad month"))?,
            compound: f[6].parse().map_err(|_| bad(n, "unknown compound"))?,
            split: f[7].parse().map_err(|_| bad(n, "unknown split"))?,
        });
    }
    Ok((protocol, entries))
}

/// Writes every pair referenced by `split` as EMG1 files under
/// `dir/pairs/` plus `dir/manifest.csv`, and returns the manifest path.
pub fn save_dataset(dir: &Path, pairs: &[PatchPair], split: &DatasetSplit) -> Result<PathBuf> {
    let pair_dir = dir.join("pairs");
    fs::create_dir_all(&pair_dir).map_err(|e| Error::io(&pair_dir, e))?;
    let roles = [
        (SplitRole::Train, &split.train),
        (SplitRole::Validation, &split.validation),
        (SplitRole::Test, &split.test),
    ];
    let mut entries = Vec::with_capacity(split.len());
    for (role, idx) in roles {
        for &i in idx {
            let p = &pairs[i];
            let id = p.id();
            let lr_path = PathBuf::from("pairs").join(format!("{id}-lr.emg"));
            let hr_path = PathBuf::from("pairs").join(format!("{id}-hr.emg"));
            write_grid(&p.lr, &dir.join(&lr_path))?;
            write_grid(&p.hr, &dir.join(&hr_path))?;
            entries.push(ManifestEntry {
                pair_id: id,
                lr_path,
                hr_path,
                alpha: p.alpha,
                timestamp: p.timestamp(),
                compound: p.hr.compound(),
                split: role,
            });
        }
    }
    let path = dir.join("manifest.csv");
    write_manifest(&path, split.protocol, &entries)?;
    Ok(path)
}

/// Reads a manifest and every grid it references.
pub fn load_dataset(manifest: &Path) -> Result<(Vec<PatchPair>, DatasetSplit)> {
    let (protocol, entries) = read_manifest(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut split = DatasetSplit {
        protocol,
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    let mut pairs = Vec::with_capacity(entries.len());
    for (i, e) in entries.into_iter().enumerate() {
        let lr = read_grid(&base.join(&e.lr_path))?;
        let hr = read_grid(&base.join(&e.hr_path))?;
        if hr.dims() != (lr.height() * e.alpha, lr.width() * e.alpha) {
            return Err(Error::Shape(format!(
                "pair {}: HR {:?} is not {}x LR {:?}",
                e.pair_id,
                hr.dims(),
                e.alpha,
                lr.dims()
            )));
        }
        let origin = PatchOrigin::parse(&e.pair_id).unwrap_or(PatchOrigin {
            source: e.pair_id.clone(),
            row: 0,
            col: 0,
        });
        pairs.push(PatchPair {
            lr,
            hr,
            alpha: e.alpha,
            origin,
        });
        match e.split {
            SplitRole::Train => split.train.push(i),
            SplitRole::Validation => split.validation.push(i),
            SplitRole::Test => split.test.push(i),
        }
    }
    Ok((pairs, split))
}
