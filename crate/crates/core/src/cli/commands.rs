use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;

use super::RunConfig;
use crate::data::{load_dataset, read_ppm, resize_bilinear, synth_generate, write_ppm, DatasetManifest, SynthConfig, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::interpret::{build_prm, overlay_prm, render_global_chart, render_local_chart, rss_statistics, stats_table};
use crate::metrics::mean_std;
use crate::model::{EpuModel, Mode};
use crate::pfm::{build_pfm_stack, PfmConfig, PfmKind, PfmStack};
use crate::train::{
    cross_validate, fit, holdout_split, load_checkpoint, metrics_tsv, save_checkpoint, CheckpointMeta, EpochRecord, Sample,
};

/// Process exit status for an error: 2 configuration or usage, 3 I/O or
/// unreadable input, 4 numeric failure.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Contract(_) | Error::Dimension(_) | Error::Metric(_) | Error::Ingest { .. } => 2,
        Error::Io { .. } | Error::Parse(_) | Error::Checkpoint(_) => 3,
        Error::Numeric(_) | Error::Degenerate(_) => 4,
    }
}

fn out_err(w: std::io::Error) -> Error {
    Error::io("<stdout>", w)
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

pub fn run_synth(cfg: &SynthConfig, out: &Path, stdout: &mut dyn Write) -> Result<()> {
    synth_generate(cfg, out)?;
    writeln!(stdout, "{}", out.join(MANIFEST_FILE).display()).map_err(out_err)
}

fn to_gray(v: f64) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

/// Writes `<stem>.pfm-<kind>.pgm` for all four maps and returns the paths.
pub fn run_pfm(image: &Path, out: &Path, side: usize) -> Result<Vec<PathBuf>> {
    let img = read_ppm(image)?;
    let stack = build_pfm_stack(&img, &PfmConfig { side })?;
    ensure_dir(out)?;
    let name = stem(image);
    let mut written = Vec::new();
    for (map, kind) in stack.maps.iter().zip(&stack.kinds) {
        let gray: Vec<u8> = map.data.iter().map(|&v| to_gray(v)).collect();
        let path = out.join(format!("{name}.pfm-{}.pgm", kind.slug()));
        write_file(&path, crate::data::encode_pgm(map.width, map.height, &gray)?)?;
        written.push(path);
    }
    Ok(written)
}

fn fit_stack(stack: PfmStack, n_pfms: usize) -> Result<PfmStack> {
    if n_pfms == stack.count() {
        Ok(stack)
    } else {
        stack.first(n_pfms)
    }
}

/// Decodes every image of the manifest and builds its feature maps.
pub fn load_samples(manifest: &DatasetManifest, side: usize, n_pfms: usize, keep_images: bool) -> Result<Vec<Sample>> {
    manifest
        .entries
        .par_iter()
        .map(|(path, label)| {
            let img = read_ppm(path)?;
            let mut s = Sample::from_image(&img, *label, side, keep_images)?;
            s.stack = fit_stack(s.stack, n_pfms)?;
            s.source = Some(path.clone());
            Ok(s)
        })
        .collect()
}

fn epoch_line(r: &EpochRecord) -> String {
    let mut line = format!("epoch {:>3}  loss {:.4}  acc {:.4}", r.epoch, r.train.loss, r.train.accuracy);
    if let Some(v) = &r.val {
        line += &format!(
            "  val_loss {:.4}  val_acc {:.4}  val_auc {:.4}  val_aint {:.4}",
            v.loss, v.accuracy, v.auc, v.interpretability
        );
    }
    line
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainOutcome {
    /// Single train/validation run; final validation metrics.
    Holdout { auc: f64, accuracy: f64, interpretability: f64 },
    /// Per-fold validation AUCs.
    CrossValidation { aucs: Vec<f64> },
}

/// Trains per `cfg` on `data` and writes `model.ckpt`, `metrics.tsv` and the
/// resolved `config.txt` to `out`. With `folds`, runs cross-validation
/// instead and writes `folds.tsv`.
pub fn run_train(
    data: &Path,
    cfg: &RunConfig,
    out: &Path,
    folds: Option<usize>,
    stdout: &mut dyn Write,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let manifest = load_dataset(data, Some(cfg.mode.class_count()))?;
    let side = cfg.arch.input_side;
    let samples = load_samples(&manifest, side, cfg.n_pfms, cfg.train.augment)?;
    ensure_dir(out)?;
    write_file(&out.join("config.txt"), cfg.to_text())?;

    if let Some(k) = folds {
        let tc = crate::train::TrainConfig {
            folds: k,
            ..cfg.train.clone()
        };
        let reports = cross_validate(&cfg.arch, cfg.n_pfms, cfg.mode, &samples, &tc)?;
        let mut table = String::from("fold\ttrain\tval\tauc\taccuracy\taint\n");
        for r in &reports {
            let line = format!(
                "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
                r.fold + 1,
                r.train_size,
                r.val_size,
                r.report.auc,
                r.report.accuracy,
                r.report.interpretability
            );
            writeln!(stdout, "fold {:>2}  auc {:.4}", r.fold + 1, r.report.auc).map_err(out_err)?;
            table += &line;
            table.push('\n');
        }
        let aucs: Vec<f64> = reports.iter().map(|r| r.report.auc).collect();
        let (m, s) = mean_std(&aucs);
        table += &format!("mean\t-\t-\t{m:.6}\t-\t-\nstd\t-\t-\t{s:.6}\t-\t-\n");
        writeln!(stdout, "auc {m:.4} ± {s:.4}").map_err(out_err)?;
        write_file(&out.join("folds.tsv"), table)?;
        return Ok(TrainOutcome::CrossValidation { aucs });
    }

    let labels = manifest.labels();
    let (train, val) = holdout_split(&labels, cfg.holdout_folds, cfg.train.seed)?;
    let mut model = EpuModel::<f32>::new(&cfg.arch, cfg.n_pfms, cfg.mode, cfg.train.seed)?;
    let mut history: Vec<EpochRecord> = Vec::new();
    let mut echo_err = None;
    let result = fit(&mut model, &samples, &train, &val, &cfg.train, |r| {
        if let Err(e) = writeln!(stdout, "{}", epoch_line(r)) {
            echo_err.get_or_insert(e);
        }
        history.push(r.clone());
    });
    write_file(&out.join("metrics.tsv"), metrics_tsv(&history))?;
    if let Err(e) = result {
        return Err(match e {
            Error::Numeric(msg) => Error::Numeric(match history.last() {
                Some(r) => format!("{msg}; last finite epoch {}", r.epoch),
                None => format!("{msg}; no epoch completed"),
            }),
            other => other,
        });
    }
    if let Some(e) = echo_err {
        return Err(out_err(e));
    }
    let last = history
        .last()
        .and_then(|r| r.val.clone())
        .ok_or_else(|| Error::config("validation split is empty"))?;
    let meta = CheckpointMeta {
        class_names: manifest.class_names.clone(),
        pfm_side: side,
        epoch: history.len(),
        metrics: vec![
            ("auc".into(), last.auc),
            ("accuracy".into(), last.accuracy),
            ("aint".into(), last.interpretability),
        ],
    };
    save_checkpoint(&out.join("model.ckpt"), &model, &meta)?;
    Ok(TrainOutcome::Holdout {
        auc: last.auc,
        accuracy: last.accuracy,
        interpretability: last.interpretability,
    })
}

fn check_side(model: &EpuModel<f32>, side: Option<usize>) -> Result<usize> {
    let ckpt = model.arch.input_side;
    match side {
        Some(s) if s != ckpt => Err(Error::config(format!(
            "input side {s} does not match the checkpoint input side {ckpt}"
        ))),
        _ => Ok(ckpt),
    }
}

/// Files and values produced by one explanation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplainOutput {
    pub label: String,
    pub probability: f64,
    pub chart: PathBuf,
    pub overlays: Vec<PathBuf>,
    pub sidecar: PathBuf,
}

/// Predicts one image and writes its chart, relevance overlays and score
/// sidecar. Prints one label line.
pub fn run_explain(
    model_path: &Path,
    image: &Path,
    out: &Path,
    side: Option<usize>,
    prm_layer: usize,
    stdout: &mut dyn Write,
) -> Result<ExplainOutput> {
    let (model, meta) = load_checkpoint(model_path)?;
    let side = check_side(&model, side)?;
    if prm_layer == 0 || prm_layer > model.arch.conv_layers() {
        return Err(Error::config(format!(
            "relevance layer {prm_layer} is outside 1..={}",
            model.arch.conv_layers()
        )));
    }
    let img = read_ppm(image)?;
    let resized = resize_bilinear(&img, side)?;
    let stack = fit_stack(build_pfm_stack(&img, &PfmConfig { side })?, model.n_pfms())?;
    let ex = model.explain(&stack)?;
    let p = &ex.prediction;
    let class_name = |i: usize| meta.class_names.get(i).cloned().unwrap_or_else(|| format!("class{i}"));
    ensure_dir(out)?;
    let name = stem(image);

    let (neg, pos) = match model.mode {
        Mode::Binary => (class_name(0), class_name(1)),
        Mode::Multiclass { .. } => ("other classes".to_string(), class_name(p.label)),
    };
    let chart = out.join(format!("{name}.chart.svg"));
    write_file(&chart, render_local_chart(&p.rss, (&neg, &pos)))?;

    let mut overlays = Vec::new();
    for (acts, kind) in ex.activations.iter().zip(&model.pfm_labels) {
        let prm = build_prm(acts, prm_layer, side, side)?;
        let path = out.join(format!("{name}.prm-{}.ppm", kind.slug()));
        write_ppm(&path, &overlay_prm(&resized, &prm)?)?;
        overlays.push(path);
    }

    let mut sidecar_text = String::new();
    for (kind, v) in p.rss.labels.iter().zip(&p.rss.values) {
        sidecar_text += &json!({ "pfm": kind.slug(), "value": v }).to_string();
        sidecar_text.push('\n');
    }
    let summary = json!({
        "bias": p.bias,
        "probability": p.probability,
        "label": class_name(p.label),
        "mode": model.mode.to_string(),
    });
    sidecar_text += &summary.to_string();
    sidecar_text.push('\n');
    let sidecar = out.join(format!("{name}.rss.jsonl"));
    write_file(&sidecar, sidecar_text)?;

    let label = class_name(p.label);
    writeln!(stdout, "{label}\t{:.9}", p.probability).map_err(out_err)?;
    Ok(ExplainOutput {
        label,
        probability: p.probability,
        chart,
        overlays,
        sidecar,
    })
}

/// Per-class score statistics over a labelled set: writes
/// `global.chart.svg` and `global.stats.tsv`, and prints the table.
pub fn run_global_explain(model_path: &Path, data: &Path, out: &Path, stdout: &mut dyn Write) -> Result<String> {
    let (model, meta) = load_checkpoint(model_path)?;
    let manifest = load_dataset(data, Some(model.mode.class_count()))?;
    let samples = load_samples(&manifest, model.arch.input_side, model.n_pfms(), false)?;
    let mut scored = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(64) {
        let stacks: Vec<&PfmStack> = chunk.iter().map(|s| &s.stack).collect();
        for (s, p) in chunk.iter().zip(model.predict_batch(&stacks)?) {
            scored.push((s.label, p.rss.values));
        }
    }
    let names = if meta.class_names.len() == manifest.class_names.len() {
        meta.class_names.clone()
    } else {
        manifest.class_names.clone()
    };
    let labels: Vec<PfmKind> = model.pfm_labels.clone();
    let stats = rss_statistics(&scored, &names, &labels)?;
    ensure_dir(out)?;
    write_file(&out.join("global.chart.svg"), render_global_chart(&stats)?)?;
    let table = stats_table(&stats);
    write_file(&out.join("global.stats.tsv"), &table)?;
    stdout.write_all(table.as_bytes()).map_err(out_err)?;
    Ok(table)
}
