//! Training loop, evaluation metrics and leave-one-subject-out folds.

use std::collections::BTreeSet;
use std::path::Path;

use attnhar_nn::{sgd_step, Graph, Mode};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DatasetMeta};
use crate::error::{io_err, HarError, Result};
use crate::model::{images_to_tensor, HarModel};
use crate::signal::{recording_images, ImageEncoder, Representation, SegmentImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    /// L2 coefficient on weights (biases and norm parameters are exempt).
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Recorded for provenance. Every code path is already single-threaded
    /// within a fold and seeded, so results do not depend on it.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            momentum: 0.9,
            weight_decay: 1e-5,
            batch_size: 64,
            epochs: 30,
            seed: 0,
            deterministic: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarError::Config(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2 for batch normalization");
        }
        Ok(())
    }
}

/// Mean training objective of every epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epoch_loss: Vec<f64>,
}

/// Mini-batch SGD with momentum on cross-entropy plus L2 weight decay.
/// Batches are reshuffled every epoch from a generator seeded by
/// `cfg.seed`; a trailing batch of one sample is skipped.
pub fn train(model: &mut HarModel, images: &[SegmentImage], cfg: &TrainConfig) -> Result<TrainHistory> {
    cfg.validate()?;
    if images.len() < 2 {
        return Err(HarError::Data(format!(
            "need at least 2 training segments, got {}",
            images.len()
        )));
    }
    let m = model.arch().num_classes;
    if let Some(bad) = images.iter().find(|i| i.label >= m) {
        return Err(HarError::Data(format!("label {} out of range for {m} classes", bad.label)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                log::warn!("epoch {epoch}: dropping a batch of one sample");
                continue;
            }
            let refs: Vec<&SegmentImage> = chunk.iter().map(|&i| &images[i]).collect();
            let labels: Vec<usize> = refs.iter().map(|i| i.label).collect();
            let batch = images_to_tensor(&refs)?;
            let mut g = Graph::new();
            let out = model.forward(&mut g, &batch, Mode::Train)?;
            let loss = g.cross_entropy(out.probs, &labels)?;
            let ce = g.value(loss).data()[0];
            let grads = g.backward(loss);
            let store = model.params_mut();
            let penalty = cfg.weight_decay * store.l2_norm_sq();
            g.accumulate_param_grads(&grads, store);
            store.add_l2_grad(cfg.weight_decay);
            sgd_step(store, cfg.lr, cfg.momentum);
            g.commit_running_stats(store);
            total += ce + penalty;
            batches += 1;
        }
        let mean = if batches == 0 { f64::NAN } else { total / batches as f64 };
        log::debug!("epoch {epoch}: loss {mean:.6}");
        history.push(mean);
    }
    Ok(TrainHistory { epoch_loss: history })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `confusion[truth][prediction]`.
    pub confusion: Vec<Vec<u64>>,
    pub samples: u64,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Averages weighted by true-class support.
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl EvalReport {
    /// Builds every metric from a confusion matrix. A class with no true and
    /// no predicted samples scores 0 precision and recall.
    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Result<Self> {
        let m = confusion.len();
        if confusion.iter().any(|r| r.len() != m) {
            return Err(HarError::Data("confusion matrix must be square".into()));
        }
        let samples: u64 = confusion.iter().flatten().sum();
        if samples == 0 {
            return Err(HarError::EmptyEvaluation);
        }
        let per_class: Vec<ClassMetrics> = (0..m)
            .map(|c| {
                let tp = confusion[c][c];
                let support: u64 = confusion[c].iter().sum();
                let predicted: u64 = confusion.iter().map(|r| r[c]).sum();
                let precision = ratio(tp, predicted);
                let recall = ratio(tp, support);
                ClassMetrics {
                    precision,
                    recall,
                    f1: harmonic(precision, recall),
                    support,
                }
            })
            .collect();
        let macro_of = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / m as f64;
        let weighted_of = |f: fn(&ClassMetrics) -> f64| {
            per_class.iter().map(|c| f(c) * c.support as f64).sum::<f64>() / samples as f64
        };
        let correct: u64 = (0..m).map(|c| confusion[c][c]).sum();
        Ok(Self {
            samples,
            accuracy: ratio(correct, samples),
            macro_precision: macro_of(|c| c.precision),
            macro_recall: macro_of(|c| c.recall),
            macro_f1: macro_of(|c| c.f1),
            weighted_precision: weighted_of(|c| c.precision),
            weighted_recall: weighted_of(|c| c.recall),
            weighted_f1: weighted_of(|c| c.f1),
            per_class,
            confusion,
        })
    }

    pub fn from_labels(truth: &[usize], predicted: &[usize], num_classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(HarError::Data(format!(
                "{} labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        if truth.is_empty() {
            return Err(HarError::EmptyEvaluation);
        }
        let mut confusion = vec![vec![0u64; num_classes]; num_classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= num_classes || p >= num_classes {
                return Err(HarError::Data(format!(
                    "label pair ({t}, {p}) out of range for {num_classes} classes"
                )));
            }
            confusion[t][p] += 1;
        }
        Self::from_confusion(confusion)
    }

    pub fn num_classes(&self) -> usize {
        self.confusion.len()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }

    /// `metric,value` rows followed by one `class,precision,recall,f1,support`
    /// block.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_path(path)?;
        w.write_record(["metric", "value"])?;
        for (k, v) in [
            ("samples", self.samples as f64),
            ("accuracy", self.accuracy),
            ("macro_precision", self.macro_precision),
            ("macro_recall", self.macro_recall),
            ("macro_f1", self.macro_f1),
            ("weighted_precision", self.weighted_precision),
            ("weighted_recall", self.weighted_recall),
            ("weighted_f1", self.weighted_f1),
        ] {
            w.write_record([k.to_string(), v.to_string()])?;
        }
        w.write_record(["class", "precision", "recall", "f1", "support"])?;
        for (c, m) in self.per_class.iter().enumerate() {
            w.write_record([
                c.to_string(),
                m.precision.to_string(),
                m.recall.to_string(),
                m.f1.to_string(),
                m.support.to_string(),
            ])?;
        }
        w.flush().map_err(io_err(path))?;
        Ok(())
    }
}

pub fn evaluate(model: &HarModel, images: &[SegmentImage]) -> Result<EvalReport> {
    if images.is_empty() {
        return Err(HarError::EmptyEvaluation);
    }
    let pred = model.predict(images)?.labels();
    let truth: Vec<usize> = images.iter().map(|i| i.label).collect();
    EvalReport::from_labels(&truth, &pred, model.arch().num_classes)
}

/// Divides each nonzero row by its sum.
pub fn confusion_normalize(confusion: &[Vec<u64>]) -> Vec<Vec<f64>> {
    confusion
        .iter()
        .map(|r| {
            let total: u64 = r.iter().sum();
            r.iter().map(|&v| ratio(v, total)).collect()
        })
        .collect()
}

pub fn write_confusion_csv(confusion: &[Vec<u64>], path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for row in confusion {
        w.write_record(row.iter().map(u64::to_string))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_history_csv(history: &TrainHistory, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "loss"])?;
    for (e, l) in history.epoch_loss.iter().enumerate() {
        w.write_record([e.to_string(), l.to_string()])?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

/// Builds a fresh model for a fold from the dataset description and the
/// `(C, K)` image shape.
pub type ModelBuilder = dyn Fn(&DatasetMeta, (usize, usize)) -> Result<HarModel> + Sync;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldReport {
    pub test_subject: u32,
    pub train_subjects: Vec<u32>,
    pub train_segments: usize,
    pub test_segments: usize,
    pub history: TrainHistory,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LosoAggregate {
    pub mean_accuracy: f64,
    pub mean_macro_precision: f64,
    pub mean_macro_recall: f64,
    pub mean_macro_f1: f64,
    /// Metrics of the confusion matrix summed over folds.
    pub pooled: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LosoReport {
    pub folds: Vec<FoldReport>,
    pub aggregate: LosoAggregate,
}

/// Windows and encodes a subset of recordings.
pub fn subset_images(
    dataset: &Dataset,
    rep: &Representation,
    keep: impl Fn(u32) -> bool,
) -> Result<Vec<SegmentImage>> {
    let mut enc = ImageEncoder::new();
    let mut out = Vec::new();
    for rec in dataset.recordings.iter().filter(|r| keep(r.subject_id)) {
        out.extend(recording_images(&mut enc, rec, rep, &dataset.meta.modality_spans)?);
    }
    Ok(out)
}

/// One fold per subject: train on the others, test on the held-out one.
/// Folds run on a pool of `jobs` threads; each fold is seeded identically
/// and independently, so results do not depend on `jobs`.
pub fn loso_cv(
    dataset: &Dataset,
    rep: &Representation,
    cfg: &TrainConfig,
    builder: &ModelBuilder,
    jobs: usize,
) -> Result<LosoReport> {
    cfg.validate()?;
    rep.windowing.validate()?;
    let subjects = dataset.subjects();
    for id in 0..dataset.meta.num_subjects as u32 {
        if !subjects.contains(&id) {
            return Err(HarError::EmptySubject(id));
        }
    }
    if subjects.len() < 2 {
        return Err(HarError::Data(format!(
            "leave-one-subject-out needs at least 2 subjects, found {}",
            subjects.len()
        )));
    }
    let image_shape = rep.image_shape(dataset.meta.num_channels);
    let run_fold = |&test: &u32| -> Result<FoldReport> {
        let train_set = subset_images(dataset, rep, |s| s != test)?;
        let test_set = subset_images(dataset, rep, |s| s == test)?;
        let train_subjects: BTreeSet<u32> = train_set.iter().map(|i| i.subject_id).collect();
        debug_assert!(!train_subjects.contains(&test));
        let mut model = builder(&dataset.meta, image_shape)?;
        let history = train(&mut model, &train_set, cfg)?;
        let report = evaluate(&model, &test_set)?;
        log::info!("fold subject {test}: accuracy {:.4}", report.accuracy);
        Ok(FoldReport {
            test_subject: test,
            train_subjects: train_subjects.into_iter().collect(),
            train_segments: train_set.len(),
            test_segments: test_set.len(),
            history,
            report,
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarError::Config(format!("thread pool: {e}")))?;
    let folds: Vec<FoldReport> = pool.install(|| {
        subjects
            .par_iter()
            .map(run_fold)
            .collect::<Result<Vec<_>>>()
    })?;
    let aggregate = aggregate_folds(&folds)?;
    Ok(LosoReport { folds, aggregate })
}

pub fn aggregate_folds(folds: &[FoldReport]) -> Result<LosoAggregate> {
    let first = folds.first().ok_or(HarError::EmptyEvaluation)?;
    let m = first.report.num_classes();
    let mut pooled = vec![vec![0u64; m]; m];
    for f in folds {
        for (p, r) in pooled.iter_mut().zip(&f.report.confusion) {
            for (a, b) in p.iter_mut().zip(r) {
                *a += b;
            }
        }
    }
    let k = folds.len() as f64;
    let mean = |f: fn(&EvalReport) -> f64| folds.iter().map(|x| f(&x.report)).sum::<f64>() / k;
    Ok(LosoAggregate {
        mean_accuracy: mean(|r| r.accuracy),
        mean_macro_precision: mean(|r| r.macro_precision),
        mean_macro_recall: mean(|r| r.macro_recall),
        mean_macro_f1: mean(|r| r.macro_f1),
        pooled: EvalReport::from_confusion(pooled)?,
    })
}
