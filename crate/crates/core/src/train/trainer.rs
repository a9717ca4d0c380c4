use std::fmt::Write as _;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::augment::augment_orientation;
use super::kfold::kfold_split;
use crate::error::{Error, Result};
use crate::metrics::{auc, interpretability_accuracy, JaccardMode, ScoredSet};
use crate::model::{stack_inputs, ArchConfig, EpuModel, Mode, Prediction};
use crate::pfm::{build_pfm_stack, PfmConfig, PfmStack, RgbImage};

/// Clipped binary cross-entropy of one prediction.
pub fn bce_loss(p: f64, y: f64) -> f64 {
    let clip = crate::tensor::PROB_CLIP;
    let p = p.clamp(clip, 1.0 - clip);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Random flips and quarter turns, re-drawn every epoch.
    pub augment: bool,
    pub folds: usize,
    pub pfm_side: usize,
    pub jaccard: JaccardMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            lr: 0.01,
            epochs: 30,
            seed: 0,
            augment: false,
            folds: 10,
            pfm_side: 64,
            jaccard: JaccardMode::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        Ok(())
    }
}

/// One labelled example. `image` is kept (already at the feature-map side)
/// only when augmentation needs to rebuild the stack.
#[derive(Debug, Clone)]
pub struct Sample {
    pub stack: PfmStack,
    pub label: usize,
    pub source: Option<PathBuf>,
    pub image: Option<RgbImage>,
}

impl Sample {
    pub fn from_image(image: &RgbImage, label: usize, side: usize, keep_image: bool) -> Result<Self> {
        let stack = build_pfm_stack(image, &PfmConfig { side })?;
        let image = if keep_image {
            Some(crate::data::resize_bilinear(image, side)?)
        } else {
            None
        };
        Ok(Self {
            stack,
            label,
            source: None,
            image,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub loss: f64,
    pub accuracy: f64,
}

/// Validation summary. `auc` is one-vs-rest macro AUC for more than two classes.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub auc: f64,
    pub accuracy: f64,
    pub interpretability: f64,
    pub loss: f64,
    pub predictions: Vec<Prediction>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: EpochStats,
    pub val: Option<EvalReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    pub fold: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub history: Vec<EpochRecord>,
    pub report: EvalReport,
}

fn batch_inputs(model: &EpuModel<f32>, stacks: &[&PfmStack]) -> Result<Vec<crate::tensor::Tensor<f32>>> {
    (0..model.n_pfms()).map(|i| stack_inputs(stacks, i)).collect()
}

/// One pass over `indices` in a shuffled order drawn from `rng`.
pub fn train_epoch(
    model: &mut EpuModel<f32>,
    samples: &[Sample],
    indices: &[usize],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<EpochStats> {
    cfg.validate()?;
    if indices.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    let mut order = indices.to_vec();
    order.shuffle(rng);
    let (mut loss_sum, mut correct) = (0.0, 0usize);
    for chunk in order.chunks(cfg.batch_size) {
        let augmented: Vec<PfmStack> = if cfg.augment {
            chunk
                .iter()
                .map(|&i| {
                    let img = samples[i].image.as_ref().ok_or_else(|| {
                        Error::contract("augmentation needs the source image of every sample")
                    })?;
                    build_pfm_stack(&augment_orientation(img, rng), &PfmConfig { side: cfg.pfm_side })
                })
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        let stacks: Vec<&PfmStack> = if cfg.augment {
            augmented.iter().collect()
        } else {
            chunk.iter().map(|&i| &samples[i].stack).collect()
        };
        let targets: Vec<usize> = chunk.iter().map(|&i| samples[i].label).collect();
        let inputs = batch_inputs(model, &stacks)?;
        let step = model.train_step(&inputs, &targets, cfg.lr as f32)?;
        if !step.loss.is_finite() {
            return Err(Error::Numeric(format!("training loss became {}", step.loss)));
        }
        loss_sum += step.loss * chunk.len() as f64;
        correct += step.correct;
    }
    Ok(EpochStats {
        loss: loss_sum / order.len() as f64,
        accuracy: correct as f64 / order.len() as f64,
    })
}

fn binary_auc(scores: Vec<f64>, positive: Vec<u8>) -> Result<f64> {
    auc(&ScoredSet::new(scores, positive)?)
}

/// Evaluation-mode metrics over `indices`.
pub fn evaluate(
    model: &EpuModel<f32>,
    samples: &[Sample],
    indices: &[usize],
    jaccard: JaccardMode,
) -> Result<EvalReport> {
    if indices.is_empty() {
        return Err(Error::config("evaluation set is empty"));
    }
    let mut predictions = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(64) {
        let stacks: Vec<&PfmStack> = chunk.iter().map(|&i| &samples[i].stack).collect();
        predictions.extend(model.predict_batch(&stacks)?);
    }
    let labels: Vec<usize> = indices.iter().map(|&i| samples[i].label).collect();
    let n = labels.len() as f64;
    let accuracy = predictions.iter().zip(&labels).filter(|(p, &y)| p.label == y).count() as f64 / n;
    let loss = predictions
        .iter()
        .zip(&labels)
        .map(|(p, &y)| match model.mode {
            Mode::Binary => bce_loss(p.probability, y as f64),
            Mode::Multiclass { .. } => bce_loss(p.distribution[y], 1.0),
        })
        .sum::<f64>()
        / n;
    let auc = match model.mode {
        Mode::Binary => binary_auc(
            predictions.iter().map(|p| p.probability).collect(),
            labels.iter().map(|&y| y as u8).collect(),
        )?,
        Mode::Multiclass { classes } => {
            let mut total = 0.0;
            for c in 0..classes {
                total += binary_auc(
                    predictions.iter().map(|p| p.distribution[c]).collect(),
                    labels.iter().map(|&y| u8::from(y == c)).collect(),
                )?;
            }
            total / classes as f64
        }
    };
    // In the multiclass case scores are relative to the predicted class, so
    // the expected sign is positive exactly when that prediction is right.
    let truth: Vec<u8> = predictions
        .iter()
        .zip(&labels)
        .map(|(p, &y)| match model.mode {
            Mode::Binary => y as u8,
            Mode::Multiclass { .. } => u8::from(p.label == y),
        })
        .collect();
    let interpretability = interpretability_accuracy(
        truth.iter().zip(&predictions).map(|(&t, p)| (t, p.rss.values.as_slice())),
        jaccard,
    )?;
    Ok(EvalReport {
        auc,
        accuracy,
        interpretability,
        loss,
        predictions,
        labels,
    })
}

/// Trains for `cfg.epochs` epochs, evaluating on `val` after each one.
/// `on_epoch` sees every record as it is produced.
pub fn fit<F: FnMut(&EpochRecord)>(
    model: &mut EpuModel<f32>,
    samples: &[Sample],
    train: &[usize],
    val: &[usize],
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let stats = train_epoch(model, samples, train, cfg, &mut rng)?;
        let val = if val.is_empty() {
            None
        } else {
            Some(evaluate(model, samples, val, cfg.jaccard)?)
        };
        let record = EpochRecord {
            epoch,
            train: stats,
            val,
        };
        on_epoch(&record);
        history.push(record);
    }
    Ok(history)
}

/// Stratified train/validation split holding out one fold of `folds`.
pub fn holdout_split(labels: &[usize], folds: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    Ok(kfold_split(labels, folds, seed)?.swap_remove(0))
}

/// k-fold cross-validation. Every fold starts from a fresh model seeded with
/// `cfg.seed + fold`.
pub fn cross_validate(
    arch: &ArchConfig,
    n_pfms: usize,
    mode: Mode,
    samples: &[Sample],
    cfg: &TrainConfig,
) -> Result<Vec<FoldReport>> {
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let split = kfold_split(&labels, cfg.folds, cfg.seed)?;
    let mut reports = Vec::with_capacity(split.len());
    for (fold, (train, val)) in split.into_iter().enumerate() {
        let fold_cfg = TrainConfig {
            seed: cfg.seed.wrapping_add(fold as u64),
            ..cfg.clone()
        };
        let mut model = EpuModel::new(arch, n_pfms, mode, fold_cfg.seed)?;
        let history = fit(&mut model, samples, &train, &[], &fold_cfg, |_| {})?;
        let report = evaluate(&model, samples, &val, cfg.jaccard)?;
        reports.push(FoldReport {
            fold,
            train_size: train.len(),
            val_size: val.len(),
            history,
            report,
        });
    }
    Ok(reports)
}

/// Tab-separated per-epoch metrics with fixed precision.
pub fn metrics_tsv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch\ttrain_loss\ttrain_acc\tval_loss\tval_acc\tval_auc\tval_aint\n");
    for r in history {
        let _ = write!(out, "{}\t{:.6}\t{:.6}", r.epoch, r.train.loss, r.train.accuracy);
        match &r.val {
            Some(v) => {
                let _ = writeln!(
                    out,
                    "\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
                    v.loss, v.accuracy, v.auc, v.interpretability
                );
            }
            None => out.push_str("\t-\t-\t-\t-\n"),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{render_sample, SynthConfig};

    fn tiny_arch() -> ArchConfig {
        ArchConfig {
            preset: "tiny".into(),
            blocks: vec![(1, 4), (1, 4)],
            kernel_size: 3,
            fc_width: 8,
            input_side: 16,
            bn_momentum: 0.9,
            bn_epsilon: 1e-5,
        }
    }

    fn samples(n: usize, keep: bool) -> Vec<Sample> {
        let cfg = SynthConfig {
            side: 32,
            ..SynthConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        (0..n)
            .map(|i| Sample::from_image(&render_sample(i % 2, &cfg, &mut rng), i % 2, 16, keep).unwrap())
            .collect()
    }

    #[test]
    fn bce_reference_values() {
        assert!((bce_loss(0.5, 1.0) - 2f64.ln()).abs() < 1e-12);
        assert!((bce_loss(0.9, 0.0) - 10f64.ln()).abs() < 1e-12);
        assert!(bce_loss(0.0, 1.0).is_finite());
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let data = samples(24, false);
        let idx: Vec<usize> = (0..data.len()).collect();
        let cfg = TrainConfig {
            batch_size: 8,
            lr: 0.05,
            epochs: 6,
            seed: 2,
            pfm_side: 16,
            ..TrainConfig::default()
        };
        let run = || {
            let mut m = EpuModel::new(&tiny_arch(), 4, Mode::Binary, 1).unwrap();
            let h = fit(&mut m, &data, &idx, &idx, &cfg, |_| {}).unwrap();
            (m, h)
        };
        let (m1, h1) = run();
        let (m2, h2) = run();
        assert_eq!(m1, m2);
        assert_eq!(metrics_tsv(&h1), metrics_tsv(&h2));
        assert!(h1.last().unwrap().train.loss < h1[0].train.loss);
    }

    #[test]
    fn non_finite_loss_stops_training() {
        let data = samples(8, false);
        let idx: Vec<usize> = (0..data.len()).collect();
        let mut m = EpuModel::new(&tiny_arch(), 4, Mode::Binary, 1).unwrap();
        m.beta_mut()[0] = f32::NAN;
        let cfg = TrainConfig {
            batch_size: 4,
            epochs: 2,
            pfm_side: 16,
            ..TrainConfig::default()
        };
        let err = fit(&mut m, &data, &idx, &[], &cfg, |_| {}).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "{err}");
        assert_eq!(crate::cli::exit_code(&err), 4);
    }

    #[test]
    fn augmentation_requires_images() {
        let data = samples(4, false);
        let mut m = EpuModel::new(&tiny_arch(), 4, Mode::Binary, 1).unwrap();
        let cfg = TrainConfig {
            augment: true,
            pfm_side: 16,
            ..TrainConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(train_epoch(&mut m, &data, &[0, 1, 2, 3], &cfg, &mut rng).is_err());
        let data = samples(4, true);
        assert!(train_epoch(&mut m, &data, &[0, 1, 2, 3], &cfg, &mut rng).is_ok());
    }

    #[test]
    fn cross_validation_covers_every_sample_once() {
        let data = samples(12, false);
        let cfg = TrainConfig {
            batch_size: 4,
            epochs: 1,
            folds: 3,
            pfm_side: 16,
            ..TrainConfig::default()
        };
        let reports = cross_validate(&tiny_arch(), 4, Mode::Binary, &data, &cfg).unwrap();
        assert_eq!(reports.len(), 3);
        assert_eq!(reports.iter().map(|r| r.val_size).sum::<usize>(), 12);
    }
}
