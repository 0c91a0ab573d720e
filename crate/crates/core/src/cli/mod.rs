//! Batch commands behind the `emsr` binary.
//!
//! Each command reads a [`RunConfig`], validates it completely before
//! touching the filesystem, and writes a reproducibility stamp (command,
//! crate version, config hash and the full sorted configuration) next to
//! its outputs. Commands compose through files:
//!
//! ```text
//! synth -> corpus.csv -> prepare -> manifest.csv -> fit-transform -> quantiles.qtx
//!                                        \-> train -> model.emw -> evaluate -> table.csv -> report
//! ```

mod config;

pub use config::RunConfig;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use crate::dataset::{
    build_pairs, coarsen, load_dataset, save_dataset, split_random, split_time, split_time_area,
    subsample_to_cardinality, synth_emissions, DatasetSplit, PatchPair, Protocol, SynthConfig,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    evaluate_pairs, format_table, read_table, run_cross_compound, run_protocol, run_scale_invariance,
    write_records, write_table, write_triptychs, Bicubic, EvalReport, Pipeline, ResolutionCorpus,
    Upscaler, TABLE_HEADER,
};
use crate::grid::{read_grid, write_grid, Compound, EmissionGrid, GeoBounds, Timestamp};
use crate::neuralnet::{checkpoint, Model, ModelConfig};
use crate::training::{train, ScheduleConfig, TrainConfig};
use crate::transforms::{
    build_preprocessor, fit_quantile_transform, Preprocessor, PreprocessorSource, QuantileTransform,
    DEFAULT_N_QUANTILES,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Prepare,
    FitTransform,
    Train,
    Evaluate,
    SuperResolve,
    Report,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Synth,
        Command::Prepare,
        Command::FitTransform,
        Command::Train,
        Command::Evaluate,
        Command::SuperResolve,
        Command::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Prepare => "prepare",
            Command::FitTransform => "fit-transform",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::SuperResolve => "super-resolve",
            Command::Report => "report",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::config("command", format!("unknown command `{s}`")))
    }
}

/// Process exit code for an error: 2 for configuration problems, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_config() {
        2
    } else {
        1
    }
}

/// Runs `command` and returns a human-readable summary.
pub fn run(command: Command, cfg: &RunConfig) -> Result<String> {
    match command {
        Command::Synth => cmd_synth(cfg),
        Command::Prepare => cmd_prepare(cfg),
        Command::FitTransform => cmd_fit_transform(cfg),
        Command::Train => cmd_train(cfg),
        Command::Evaluate => cmd_evaluate(cfg),
        Command::SuperResolve => cmd_super_resolve(cfg),
        Command::Report => cmd_report(cfg),
    }
}

fn write_stamp(path: &Path, command: Command, cfg: &RunConfig) -> Result<()> {
    let text = format!(
        "command={command}\nversion={VERSION}\nconfig_hash={:016x}\n{}",
        cfg.hash(),
        cfg.canonical()
    );
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn file_stamp(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".stamp");
    PathBuf::from(s)
}

// ---------------------------------------------------------------------------
// Corpus listing written by `synth`: `map-id, path, year, month, compound`.

fn write_corpus(path: &Path, entries: &[(String, PathBuf, Timestamp, Compound)]) -> Result<()> {
    let text: String = entries
        .iter()
        .map(|(id, p, ts, c)| format!("{id}, {}, {}, {}, {c}\n", p.display(), ts.year, ts.month))
        .collect();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_corpus(path: &Path) -> Result<Vec<(String, EmissionGrid)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| {
            let f: Vec<&str> = l.split(',').map(str::trim).collect();
            if f.len() != 5 {
                return Err(Error::Format(format!("bad corpus line `{l}` in {}", path.display())));
            }
            Ok((f[0].to_string(), read_grid(&base.join(f[1]))?))
        })
        .collect()
}

// ---------------------------------------------------------------------------

fn cmd_synth(cfg: &RunConfig) -> Result<String> {
    let out_dir = cfg.path("out_dir")?;
    let d = SynthConfig::default();
    let synth = SynthConfig {
        seed: cfg.parsed_or("seed", d.seed)?,
        n_maps: cfg.parsed_or("n_maps", d.n_maps)?,
        height: cfg.parsed_or("height", d.height)?,
        width: cfg.parsed_or("width", d.width)?,
        cell_size_deg: cfg.parsed_or("cell_size", d.cell_size_deg)?,
        compound: cfg.parsed_or("compound", d.compound)?,
    };
    cfg.finish()?;
    synth.validate()?;

    let maps = synth_emissions(&synth)?;
    create_dir(&out_dir.join("maps"))?;
    let mut entries = Vec::with_capacity(maps.len());
    for (i, m) in maps.iter().enumerate() {
        let id = format!("m{i:04}");
        let rel = PathBuf::from("maps").join(format!("{id}.emg"));
        write_grid(m, &out_dir.join(&rel))?;
        entries.push((id, rel, m.timestamp(), m.compound()));
    }
    write_corpus(&out_dir.join("corpus.csv"), &entries)?;
    write_stamp(&out_dir.join("stamp-synth.txt"), Command::Synth, cfg)?;
    Ok(format!("wrote {} maps to {}", maps.len(), out_dir.display()))
}

fn parse_region(s: &str) -> Result<GeoBounds> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::config("train_region", format!("cannot parse `{s}`")))?;
    match v[..] {
        [lat_min, lat_max, lon_min, lon_max] if lat_min < lat_max && lon_min < lon_max => Ok(GeoBounds {
            lat_min,
            lat_max,
            lon_min,
            lon_max,
        }),
        _ => Err(Error::config("train_region", "expected lat_min,lat_max,lon_min,lon_max")),
    }
}

fn cmd_prepare(cfg: &RunConfig) -> Result<String> {
    let corpus = cfg.existing_path("corpus")?;
    let out_dir = cfg.path("out_dir")?;
    let patch_size: usize = cfg.parsed_or("patch_size", 64)?;
    let min_nonzero: f64 = cfg.parsed_or("min_nonzero", 0.05)?;
    let alpha: usize = cfg.parsed_or("alpha", 4)?;
    let protocol: Protocol = cfg.parsed_or("protocol", Protocol::Random)?;
    let seed: u64 = cfg.parsed_or("seed", 0)?;
    let coarsen_by: usize = cfg.parsed_or("coarsen", 1)?;
    let cardinality: Option<usize> = cfg.parsed("train_cardinality")?;
    let region = match protocol {
        Protocol::TimeArea => Some(parse_region(cfg.require("train_region")?)?),
        _ => None,
    };
    cfg.finish()?;
    if alpha == 0 || patch_size == 0 || !patch_size.is_multiple_of(alpha) {
        return Err(Error::config("alpha", format!("patch size {patch_size} is not divisible by {alpha}")));
    }
    if coarsen_by == 0 {
        return Err(Error::config("coarsen", "must be at least 1"));
    }
    if !(0.0..=1.0).contains(&min_nonzero) {
        return Err(Error::config("min_nonzero", "must lie in [0, 1]"));
    }

    let mut maps = read_corpus(&corpus)?;
    if coarsen_by > 1 {
        for (_, m) in maps.iter_mut() {
            *m = coarsen(m, coarsen_by)?;
        }
    }
    let (pairs, stats) = build_pairs(&maps, patch_size, min_nonzero, alpha)?;
    let mut split = match protocol {
        Protocol::Random => split_random(&pairs, seed)?,
        Protocol::Time => split_time(&pairs),
        Protocol::TimeArea => split_time_area(&pairs, region.as_ref().expect("region parsed"))?,
    };
    if let Some(n) = cardinality {
        split = subsample_to_cardinality(&split, n, seed)?;
    }
    create_dir(&out_dir)?;
    save_dataset(&out_dir, &pairs, &split)?;
    write_stamp(&out_dir.join("stamp-prepare.txt"), Command::Prepare, cfg)?;
    Ok(format!(
        "sliced {} patches: retained {}, discarded {}; {} split train/validation/test = {}/{}/{}",
        stats.sliced,
        stats.retained,
        stats.discarded,
        protocol,
        split.train.len(),
        split.validation.len(),
        split.test.len()
    ))
}

fn cmd_fit_transform(cfg: &RunConfig) -> Result<String> {
    let manifest = cfg.existing_path("manifest")?;
    let out = cfg.path("out")?;
    let n_quantiles: usize = cfg.parsed_or("n_quantiles", DEFAULT_N_QUANTILES)?;
    cfg.finish()?;
    if n_quantiles < 2 {
        return Err(Error::config("n_quantiles", "must be at least 2"));
    }
    let (pairs, split) = load_dataset(&manifest)?;
    if split.train.is_empty() {
        return Err(Error::State(format!("{} has no training pairs", manifest.display())));
    }
    let t = fit_train_quantiles(&pairs, &split, n_quantiles)?;
    t.save(&out)?;
    write_stamp(&file_stamp(&out), Command::FitTransform, cfg)?;
    Ok(format!(
        "fitted {n_quantiles} quantiles on {} training pairs -> {}",
        split.train.len(),
        out.display()
    ))
}

/// Quantile transform fitted on the HR grids of the training pairs only.
pub fn fit_train_quantiles(pairs: &[PatchPair], split: &DatasetSplit, n_quantiles: usize) -> Result<QuantileTransform> {
    fit_quantile_transform(
        split.train.iter().flat_map(|&i| pairs[i].hr.values().iter().copied()),
        n_quantiles,
    )
}

const MODEL_KEYS: [&str; 8] = [
    "architecture",
    "alpha",
    "srcnn_kernels",
    "srcnn_widths",
    "resnet_blocks",
    "resnet_width",
    "activation",
    "init_seed",
];

/// Transform selection shared by train, evaluate and super-resolve.
fn preprocessor_from(cfg: &RunConfig) -> Result<(String, Arc<dyn Preprocessor>, Option<QuantileTransform>)> {
    let name = cfg.get("transform").unwrap_or("quantile").to_string();
    let quantile = match cfg.get("quantiles") {
        Some(p) => {
            let p = Path::new(p);
            if !p.exists() {
                return Err(Error::config("quantiles", format!("{} does not exist", p.display())));
            }
            Some(QuantileTransform::load(p)?)
        }
        None => None,
    };
    let pre = build_preprocessor(&name, &PreprocessorSource { quantile: quantile.clone() })
        .map_err(|e| match e {
            Error::State(d) => Error::config("quantiles", d),
            other => other,
        })?;
    Ok((name, pre, quantile))
}

fn cmd_train(cfg: &RunConfig) -> Result<String> {
    let manifest = cfg.existing_path("manifest")?;
    let out_dir = cfg.path("out_dir")?;
    let model_pairs: BTreeMap<String, String> = MODEL_KEYS
        .iter()
        .filter_map(|k| cfg.get(k).map(|v| (k.to_string(), v.to_string())))
        .collect();
    let mut model_cfg = ModelConfig::resnet();
    if model_cfg_needs_srcnn(&model_pairs) {
        model_cfg = ModelConfig::srcnn();
    }
    model_cfg.apply_pairs(&model_pairs)?;
    let iterations: usize = cfg.parsed_or("iterations", 2_000)?;
    let d = TrainConfig::default();
    let base = ScheduleConfig {
        lr_max: cfg.parsed_or("lr_max", d.schedule.lr_max)?,
        lr_min: cfg.parsed_or("lr_min", d.schedule.lr_min)?,
        ..ScheduleConfig::default()
    };
    let train_cfg = TrainConfig {
        schedule: base.scaled(iterations)?,
        batch_size: cfg.parsed_or("batch_size", d.batch_size)?,
        seed: cfg.parsed_or("seed", d.seed)?,
        validation_interval: cfg.parsed_or("validation_interval", 500)?,
        max_validation_pairs: cfg.parsed_or("max_validation_pairs", d.max_validation_pairs)?,
        checkpoint_path: Some(out_dir.join("model.emw")),
        log_path: Some(out_dir.join("train.log")),
    };
    let (transform, pre, _) = preprocessor_from(cfg)?;
    cfg.finish()?;
    model_cfg.validate()?;
    train_cfg.validate()?;

    let (pairs, split) = load_dataset(&manifest)?;
    if split.train.is_empty() {
        return Err(Error::State(format!("{} has no training pairs", manifest.display())));
    }
    if let Some(p) = split.train.iter().map(|&i| &pairs[i]).find(|p| p.alpha != model_cfg.alpha) {
        return Err(Error::config(
            "alpha",
            format!("model alpha {} but pair {} has alpha {}", model_cfg.alpha, p.id(), p.alpha),
        ));
    }
    let model = Model::new(model_cfg)?;
    create_dir(&out_dir)?;
    let outcome = train(model, &pairs, &split, pre, &train_cfg)?;
    write_stamp(&out_dir.join("stamp-train.txt"), Command::Train, cfg)?;
    let last = outcome.log.last();
    Ok(format!(
        "trained {} with {transform} for {iterations} iterations; best validation at {:?}, last val_ssim {:.4}",
        outcome.model.config().architecture,
        outcome.best_iteration,
        last.map(|r| r.val_ssim).unwrap_or(f64::NAN)
    ))
}

fn model_cfg_needs_srcnn(pairs: &BTreeMap<String, String>) -> bool {
    pairs.get("architecture").map(|a| a.trim() == "srcnn_t").unwrap_or(false)
}

/// Loads a checkpoint and wraps it with its transform as a labelled pipeline.
fn load_pipeline(cfg: &RunConfig) -> Result<(Pipeline, Option<QuantileTransform>)> {
    let ckpt = cfg.path("checkpoint")?;
    let (transform, pre, quantile) = preprocessor_from(cfg)?;
    if !ckpt.exists() {
        return Err(Error::State(format!("checkpoint {} does not exist", ckpt.display())));
    }
    let model = checkpoint::load(&ckpt)?;
    let label = format!("{}+{transform}", model.config().architecture);
    Ok((Pipeline::new(model, pre, label), quantile))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Harness {
    Protocol,
    Scale,
    Compound,
}

fn cmd_evaluate(cfg: &RunConfig) -> Result<String> {
    let manifests: Vec<PathBuf> = cfg.list("manifest")?.into_iter().map(PathBuf::from).collect();
    let out_dir = cfg.path("out_dir")?;
    let harness = match cfg.get("harness").unwrap_or("protocol") {
        "protocol" => Harness::Protocol,
        "scale" => Harness::Scale,
        "compound" => Harness::Compound,
        other => return Err(Error::config("harness", format!("unknown harness `{other}`"))),
    };
    let baseline: bool = cfg.parsed_or("baseline", true)?;
    let n_triptychs: usize = cfg.parsed_or("triptychs", 4)?;
    let ckpt_given = cfg.get("checkpoint").is_some();
    if !ckpt_given {
        return Err(Error::config("checkpoint", "required setting is missing"));
    }
    let (pipeline, quantile) = load_pipeline(cfg)?;
    cfg.finish()?;
    for m in &manifests {
        if !m.exists() {
            return Err(Error::config("manifest", format!("{} does not exist", m.display())));
        }
    }
    if manifests.is_empty() {
        return Err(Error::config("manifest", "no manifest given"));
    }
    if harness == Harness::Protocol && manifests.len() != 1 {
        return Err(Error::config("manifest", "the protocol harness takes exactly one manifest"));
    }
    let metric =
        quantile.ok_or_else(|| Error::config("quantiles", "evaluation needs the reference quantile transform"))?;

    let datasets: Vec<(Vec<PatchPair>, DatasetSplit)> =
        manifests.iter().map(|m| load_dataset(m)).collect::<Result<_>>()?;
    let bicubic = Bicubic {
        alpha: pipeline.alpha(),
    };
    let mut models: Vec<&dyn Upscaler> = vec![&pipeline];
    if baseline {
        models.push(&bicubic);
    }
    let tests = |(pairs, split): &(Vec<PatchPair>, DatasetSplit)| -> Vec<usize> {
        split.test.iter().copied().filter(|&i| i < pairs.len()).collect()
    };
    let mut reports: Vec<EvalReport> = Vec::new();
    for m in &models {
        let rows = match harness {
            Harness::Protocol => run_protocol(&[*m], &datasets[0].0, &datasets[0].1, &metric)?,
            Harness::Scale => {
                let corpora: Vec<ResolutionCorpus<'_>> = datasets
                    .iter()
                    .map(|d| {
                        let pairs: Vec<&PatchPair> = tests(d).into_iter().map(|i| &d.0[i]).collect();
                        let cell_size_deg = pairs.first().map(|p| p.hr.cell_size_deg()).unwrap_or(f64::NAN);
                        ResolutionCorpus { cell_size_deg, pairs }
                    })
                    .collect();
                run_scale_invariance(*m, &corpora, &metric)?
            }
            Harness::Compound => {
                let corpora: Vec<(Compound, Vec<&PatchPair>)> = datasets
                    .iter()
                    .map(|d| {
                        let pairs: Vec<&PatchPair> = tests(d).into_iter().map(|i| &d.0[i]).collect();
                        let c = pairs.first().map(|p| p.hr.compound()).unwrap_or(Compound::Isoprene);
                        (c, pairs)
                    })
                    .collect();
                run_cross_compound(*m, &corpora, &metric)?
            }
        };
        reports.extend(rows);
    }

    create_dir(&out_dir)?;
    write_table(&out_dir.join("table.csv"), &reports)?;
    for (k, r) in reports.iter().enumerate() {
        write_records(&out_dir.join(format!("pairs-{k:02}-{}-{}.csv", r.model, r.label)), r)?;
    }
    if n_triptychs > 0 {
        let (pairs, split) = &datasets[0];
        let test: Vec<&PatchPair> = split.test.iter().take(n_triptychs).map(|&i| &pairs[i]).collect();
        let (_, outputs) = evaluate_pairs(&pipeline, &test, &metric, "triptych")?;
        write_triptychs(&out_dir.join("triptychs"), &test, &outputs, n_triptychs)?;
    }
    write_stamp(&out_dir.join("stamp-evaluate.txt"), Command::Evaluate, cfg)?;
    Ok(format_table(&reports))
}

fn cmd_super_resolve(cfg: &RunConfig) -> Result<String> {
    let input = cfg.existing_path("input")?;
    let output = cfg.path("output")?;
    let heatmap = cfg.get("heatmap").map(PathBuf::from);
    if cfg.get("checkpoint").is_none() {
        return Err(Error::config("checkpoint", "required setting is missing"));
    }
    let (pipeline, _) = load_pipeline(cfg)?;
    cfg.finish()?;
    let lr = read_grid(&input)?;
    let sr = pipeline.upscale(&[&lr])?.remove(0);
    write_grid(&sr, &output)?;
    if let Some(h) = heatmap {
        crate::grid::render_heatmap(&sr, &h)?;
    }
    write_stamp(&file_stamp(&output), Command::SuperResolve, cfg)?;
    Ok(format!(
        "{}x{} -> {}x{} written to {}",
        lr.height(),
        lr.width(),
        sr.height(),
        sr.width(),
        output.display()
    ))
}

fn cmd_report(cfg: &RunConfig) -> Result<String> {
    let tables: Vec<PathBuf> = cfg.list("tables")?.into_iter().map(PathBuf::from).collect();
    let out = cfg.path("out")?;
    cfg.finish()?;
    if let Some(t) = tables.iter().find(|t| !t.exists()) {
        return Err(Error::config("tables", format!("{} does not exist", t.display())));
    }
    let mut text = format!("source,{TABLE_HEADER}\n");
    for t in &tables {
        let name = t
            .parent()
            .and_then(|p| p.file_name())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        for (label, model, n, ssim, nmse, dist) in read_table(t)? {
            text.push_str(&format!("{name},{label},{model},{n},{ssim:.6},{nmse:.4},{dist:.6}\n"));
        }
    }
    fs::write(&out, &text).map_err(|e| Error::io(&out, e))?;
    write_stamp(&file_stamp(&out), Command::Report, cfg)?;
    Ok(text)
}
