use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::metrics::{distribution_distance, nmse_db, ssim, DEFAULT_HIST_BINS};
use super::pipeline::Upscaler;
use crate::dataset::{DatasetSplit, PatchPair};
use crate::error::{Error, Result};
use crate::grid::{render_triptych, Compound, EmissionGrid};
use crate::transforms::InvertibleTransform;

/// Metrics of one super-resolved pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub pair_id: String,
    /// SSIM in the metric transform's `[0, 1]` domain.
    pub ssim: f64,
    /// NMSE in physical units, dB.
    pub nmse_db: f64,
    /// Histogram distance between the output and the HR grid.
    pub distribution_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Row label: protocol, resolution or compound.
    pub label: String,
    pub model: String,
    pub records: Vec<PairRecord>,
    pub mean_ssim: f64,
    pub mean_nmse_db: f64,
    pub mean_distribution_distance: f64,
}

impl EvalReport {
    pub fn new(label: impl Into<String>, model: impl Into<String>, records: Vec<PairRecord>) -> Self {
        let n = records.len().max(1) as f64;
        let mean = |f: fn(&PairRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
        Self {
            label: label.into(),
            model: model.into(),
            mean_ssim: mean(|r| r.ssim),
            mean_nmse_db: mean(|r| r.nmse_db),
            mean_distribution_distance: mean(|r| r.distribution_distance),
            records,
        }
    }
}

/// Runs `upscaler` on `pairs` and scores each output against its HR grid.
/// SSIM is measured after mapping both through `metric`.
pub fn evaluate_pairs(
    upscaler: &dyn Upscaler,
    pairs: &[&PatchPair],
    metric: &dyn InvertibleTransform,
    label: &str,
) -> Result<(EvalReport, Vec<EmissionGrid>)> {
    if let Some(p) = pairs.iter().find(|p| p.alpha != upscaler.alpha()) {
        return Err(Error::config(
            "alpha",
            format!("{} upscales by {}, pair {} needs {}", upscaler.name(), upscaler.alpha(), p.id(), p.alpha),
        ));
    }
    let lr: Vec<&EmissionGrid> = pairs.iter().map(|p| &p.lr).collect();
    let outputs = upscaler.upscale(&lr)?;
    let mut records = Vec::with_capacity(pairs.len());
    for (p, sr) in pairs.iter().zip(&outputs) {
        let (h, w) = p.hr.dims();
        let t_sr = metric.apply(sr)?;
        let t_hr = metric.apply(&p.hr)?;
        records.push(PairRecord {
            pair_id: p.id(),
            ssim: ssim(t_sr.values(), t_hr.values(), h, w)?,
            nmse_db: nmse_db(&p.hr, sr)?,
            distribution_distance: distribution_distance(sr, &p.hr, DEFAULT_HIST_BINS)?,
        });
    }
    Ok((EvalReport::new(label, upscaler.name(), records), outputs))
}

/// Scores every model on the protocol's test set: one row per model.
pub fn run_protocol(
    models: &[&dyn Upscaler],
    pairs: &[PatchPair],
    split: &DatasetSplit,
    metric: &dyn InvertibleTransform,
) -> Result<Vec<EvalReport>> {
    let test: Vec<&PatchPair> = split.test.iter().map(|&i| &pairs[i]).collect();
    models
        .iter()
        .map(|m| Ok(evaluate_pairs(*m, &test, metric, split.protocol.name())?.0))
        .collect()
}

/// A set of test pairs at one cell size.
pub struct ResolutionCorpus<'a> {
    pub cell_size_deg: f64,
    pub pairs: Vec<&'a PatchPair>,
}

/// Scores one fixed model on corpora of different cell sizes. Every corpus
/// must use the model's scale factor.
pub fn run_scale_invariance(
    model: &dyn Upscaler,
    corpora: &[ResolutionCorpus<'_>],
    metric: &dyn InvertibleTransform,
) -> Result<Vec<EvalReport>> {
    corpora
        .iter()
        .map(|c| {
            let label = format!("{}deg", c.cell_size_deg);
            Ok(evaluate_pairs(model, &c.pairs, metric, &label)?.0)
        })
        .collect()
}

/// Scores one model, with its training-time transform, on test pairs of
/// other compounds: one row per compound.
pub fn run_cross_compound(
    model: &dyn Upscaler,
    corpora: &[(Compound, Vec<&PatchPair>)],
    metric: &dyn InvertibleTransform,
) -> Result<Vec<EvalReport>> {
    corpora
        .iter()
        .map(|(compound, pairs)| {
            if pairs.is_empty() {
                return Err(Error::State(format!("no test pairs for {compound}")));
            }
            Ok(evaluate_pairs(model, pairs, metric, compound.label())?.0)
        })
        .collect()
}

pub const TABLE_HEADER: &str = "label,model,n_pairs,mean_ssim,mean_nmse_db,mean_distribution_distance";

/// Summary table, one line per report.
pub fn format_table(reports: &[EvalReport]) -> String {
    let mut s = format!("{TABLE_HEADER}\n");
    for r in reports {
        writeln!(
            s,
            "{},{},{},{:.6},{:.4},{:.6}",
            r.label,
            r.model,
            r.records.len(),
            r.mean_ssim,
            r.mean_nmse_db,
            r.mean_distribution_distance
        )
        .unwrap();
    }
    s
}

pub fn format_records(report: &EvalReport) -> String {
    let mut s = String::from("pair_id,ssim,nmse_db,distribution_distance\n");
    for r in &report.records {
        writeln!(s, "{},{},{},{}", r.pair_id, r.ssim, r.nmse_db, r.distribution_distance).unwrap();
    }
    s
}

pub fn write_table(path: &Path, reports: &[EvalReport]) -> Result<()> {
    fs::write(path, format_table(reports)).map_err(|e| Error::io(path, e))
}

pub fn write_records(path: &Path, report: &EvalReport) -> Result<()> {
    fs::write(path, format_records(report)).map_err(|e| Error::io(path, e))
}

/// Parses a table written by [`write_table`] back into
/// `(label, model, n_pairs, mean_ssim, mean_nmse_db, mean_distance)` rows.
pub fn read_table(path: &Path) -> Result<Vec<(String, String, usize, f64, f64, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = || Error::Format(format!("malformed report table {}", path.display()));
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 6 {
                return Err(bad());
            }
            Ok((
                f[0].to_string(),
                f[1].to_string(),
                f[2].parse().map_err(|_| bad())?,
                f[3].parse().map_err(|_| bad())?,
                f[4].parse().map_err(|_| bad())?,
                f[5].parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}

/// Renders HR / LR / SR triptychs for the first `n` pairs into `dir`.
pub fn write_triptychs(dir: &Path, pairs: &[&PatchPair], outputs: &[EmissionGrid], n: usize) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (p, sr) in pairs.iter().zip(outputs).take(n) {
        render_triptych(&p.hr, &p.lr, sr, &dir.join(format!("{}.ppm", p.id())))?;
    }
    Ok(())
}
