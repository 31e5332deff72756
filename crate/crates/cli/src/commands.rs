use std::fs;
use std::path::{Path, PathBuf};

use attnhar::data::{write_csv_dataset, synth_generate, Dataset};
use attnhar::model::{build_model, HarModel};
use attnhar::nn::Checkpoint;
use attnhar::signal::{dataset_images, SegmentImage};
use attnhar::train::{
    evaluate, loso_cv, subset_images, train, write_confusion_csv, write_history_csv, write_json,
    LosoReport,
};
use attnhar::viz::{attention_summary, cam, confusion_image, render_heatmap, write_matrix_csv};
use attnhar::{HarError, ImageKind, ModelVariant, Representation, Result, WindowingConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, SynthConfig};

/// Flags shared by every command, already merged into the config.
#[derive(Debug, Clone, Serialize)]
pub struct RunInfo {
    pub command: String,
    pub jobs: usize,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> HarError + '_ {
    move |source| HarError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io(dir))
}

fn write_run_json(cfg: &ExperimentConfig, info: &RunInfo, extra: Value) -> Result<()> {
    let run = json!({
        "command": info.command,
        "library": "attnhar",
        "version": attnhar::VERSION,
        "seed": cfg.train.seed,
        "model_seed": cfg.model.seed,
        "deterministic": cfg.train.deterministic,
        "jobs": info.jobs,
        "config": cfg,
        "result": extra,
    });
    write_json(&run, &cfg.output_dir.join("run.json"))
}

fn builder(cfg: &ExperimentConfig, variant: ModelVariant) -> impl Fn(&attnhar::DatasetMeta, (usize, usize)) -> Result<HarModel> + Sync {
    let model_cfg = cfg.model.clone();
    move |meta, shape| build_model(variant, meta, shape, &model_cfg)
}

/// Held-out split for `train`: the highest subject id when there are at
/// least two subjects, otherwise a seeded 20% of segments.
fn holdout(ds: &Dataset, rep: &Representation, seed: u64) -> Result<(Vec<SegmentImage>, Vec<SegmentImage>, String)> {
    let subjects = ds.subjects();
    if subjects.len() >= 2 {
        let test = *subjects.last().expect("non-empty");
        Ok((
            subset_images(ds, rep, |s| s != test)?,
            subset_images(ds, rep, |s| s == test)?,
            format!("subject {test}"),
        ))
    } else {
        let mut all = dataset_images(ds, rep)?;
        all.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test = (all.len() / 5).max(1);
        let train = all.split_off(n_test);
        Ok((train, all, "random 20% of segments".into()))
    }
}

pub fn cmd_train(cfg: &ExperimentConfig, info: &RunInfo) -> Result<Value> {
    prepare_out(&cfg.output_dir)?;
    let ds = cfg.load_dataset()?;
    let rep = cfg.representation();
    let (train_set, test_set, split) = holdout(&ds, &rep, cfg.train.seed)?;
    let mut model = build_model(
        cfg.variant,
        &ds.meta,
        rep.image_shape(ds.meta.num_channels),
        &cfg.model,
    )?;
    let history = train(&mut model, &train_set, &cfg.train)?;
    let report = evaluate(&model, &test_set)?;
    let out = &cfg.output_dir;
    model.to_checkpoint()?.save(&out.join("checkpoint.json"))?;
    write_history_csv(&history, &out.join("history.csv"))?;
    report.write_json(&out.join("report.json"))?;
    report.write_csv(&out.join("report.csv"))?;
    write_confusion_csv(&report.confusion, &out.join("confusion.csv"))?;
    let summary = json!({
        "held_out": split,
        "train_segments": train_set.len(),
        "test_segments": test_set.len(),
        "final_loss": history.epoch_loss.last(),
        "accuracy": report.accuracy,
        "macro_precision": report.macro_precision,
        "macro_recall": report.macro_recall,
        "macro_f1": report.macro_f1,
    });
    write_run_json(cfg, info, summary.clone())?;
    Ok(summary)
}

fn write_loso(report: &LosoReport, dir: &Path) -> Result<()> {
    prepare_out(dir)?;
    for f in &report.folds {
        let stem = format!("fold_subject{}", f.test_subject);
        f.report.write_json(&dir.join(format!("{stem}_report.json")))?;
        f.report.write_csv(&dir.join(format!("{stem}_report.csv")))?;
        write_history_csv(&f.history, &dir.join(format!("{stem}_history.csv")))?;
    }
    write_json(&report.aggregate, &dir.join("aggregate.json"))?;
    write_confusion_csv(&report.aggregate.pooled.confusion, &dir.join("pooled_confusion.csv"))?;
    let path = dir.join("folds.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["test_subject", "accuracy", "macro_precision", "macro_recall", "macro_f1"])?;
    for f in &report.folds {
        let r = &f.report;
        w.write_record([
            f.test_subject.to_string(),
            r.accuracy.to_string(),
            r.macro_precision.to_string(),
            r.macro_recall.to_string(),
            r.macro_f1.to_string(),
        ])?;
    }
    w.flush().map_err(io(&path))?;
    Ok(())
}

fn loso_summary(r: &LosoReport) -> Value {
    json!({
        "folds": r.folds.len(),
        "mean_accuracy": r.aggregate.mean_accuracy,
        "mean_macro_precision": r.aggregate.mean_macro_precision,
        "mean_macro_recall": r.aggregate.mean_macro_recall,
        "mean_macro_f1": r.aggregate.mean_macro_f1,
        "pooled_accuracy": r.aggregate.pooled.accuracy,
    })
}

pub fn cmd_loso(cfg: &ExperimentConfig, info: &RunInfo) -> Result<Value> {
    prepare_out(&cfg.output_dir)?;
    let ds = cfg.load_dataset()?;
    let build = builder(cfg, cfg.variant);
    let report = loso_cv(&ds, &cfg.representation(), &cfg.train, &build, info.jobs)?;
    write_loso(&report, &cfg.output_dir)?;
    let summary = loso_summary(&report);
    write_run_json(cfg, info, summary.clone())?;
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationAxis {
    Representation,
    Segment,
    Fusion,
}

/// Segment-length grid as `(T, stride)`; `None` means the whole recording.
pub const SEGMENT_GRID: [(Option<usize>, Option<usize>); 7] = [
    (Some(32), Some(8)),
    (Some(32), Some(16)),
    (Some(32), Some(24)),
    (Some(64), Some(16)),
    (Some(64), Some(32)),
    (Some(96), Some(24)),
    (None, None),
];

struct AblationRow {
    label: String,
    window: Option<WindowingConfig>,
    status: String,
    report: Option<LosoReport>,
}

/// Sweeps one axis with LOSO evaluation, holding everything else fixed.
pub fn cmd_ablate(cfg: &ExperimentConfig, axis: AblationAxis, info: &RunInfo) -> Result<Value> {
    prepare_out(&cfg.output_dir)?;
    let ds = cfg.load_dataset()?;
    let frames = ds.recordings.iter().map(|r| r.frames()).min().ok_or_else(|| {
        HarError::Data("dataset has no recordings".into())
    })?;
    let run = |rep: &Representation, variant: ModelVariant| -> Result<LosoReport> {
        let build = builder(cfg, variant);
        loso_cv(&ds, rep, &cfg.train, &build, info.jobs)
    };
    let mut rows = Vec::new();
    match axis {
        AblationAxis::Representation => {
            for kind in ImageKind::ALL {
                let rep = Representation { windowing: cfg.windowing, kind };
                rows.push(AblationRow {
                    label: kind.label().into(),
                    window: Some(cfg.windowing),
                    status: "ok".into(),
                    report: Some(run(&rep, cfg.variant)?),
                });
            }
        }
        AblationAxis::Segment => {
            for (t, dt) in SEGMENT_GRID {
                let label = format!(
                    "({},{})",
                    t.unwrap_or(frames),
                    dt.map_or("-".into(), |v| v.to_string())
                );
                // The whole-recording row uses the longest window the image
                // kind accepts (DFT needs an even length).
                let length = t.unwrap_or(if cfg.representation == ImageKind::Dft {
                    frames - frames % 2
                } else {
                    frames
                });
                let window = WindowingConfig { length, stride: dt.unwrap_or(length) };
                if length > frames || length == 0 {
                    rows.push(AblationRow {
                        label,
                        window: Some(window),
                        status: format!("skipped: window longer than {frames} frames"),
                        report: None,
                    });
                    continue;
                }
                let rep = Representation { windowing: window, kind: cfg.representation };
                rows.push(AblationRow {
                    label,
                    window: Some(window),
                    status: "ok".into(),
                    report: Some(run(&rep, cfg.variant)?),
                });
            }
        }
        AblationAxis::Fusion => {
            for variant in [ModelVariant::Early, ModelVariant::Late, ModelVariant::Attention] {
                rows.push(AblationRow {
                    label: variant.name().into(),
                    window: Some(cfg.windowing),
                    status: "ok".into(),
                    report: Some(run(&cfg.representation(), variant)?),
                });
            }
        }
    }

    let axis_name = format!("{axis:?}").to_lowercase();
    let path = cfg.output_dir.join(format!("ablation_{axis_name}.csv"));
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "row", "window", "stride", "status", "accuracy", "precision", "recall", "f1",
    ])?;
    let mut table = Vec::new();
    for row in &rows {
        let (len, stride) = row
            .window
            .map_or((String::new(), String::new()), |w| (w.length.to_string(), w.stride.to_string()));
        let metrics = row.report.as_ref().map(|r| {
            [
                r.aggregate.mean_accuracy,
                r.aggregate.mean_macro_precision,
                r.aggregate.mean_macro_recall,
                r.aggregate.mean_macro_f1,
            ]
        });
        let cells: Vec<String> = match metrics {
            Some(m) => m.iter().map(f64::to_string).collect(),
            None => vec![String::new(); 4],
        };
        w.write_record(
            [row.label.clone(), len, stride, row.status.clone()]
                .into_iter()
                .chain(cells),
        )?;
        if let Some(r) = &row.report {
            let dir = cfg.output_dir.join(format!("ablation_{axis_name}")).join(sanitize(&row.label));
            write_loso(r, &dir)?;
        }
        table.push(json!({
            "row": row.label,
            "status": row.status,
            "metrics": row.report.as_ref().map(loso_summary),
        }));
    }
    w.flush().map_err(io(&path))?;
    let summary = json!({ "axis": axis_name, "table": path, "rows": table });
    write_run_json(cfg, info, summary.clone())?;
    Ok(summary)
}

fn sanitize(s: &str) -> String {
    let out: String = s
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect();
    out.trim_matches('_').to_string()
}

/// Attention heatmaps, class activation maps and a confusion image for a
/// trained checkpoint over every segment of the configured dataset.
pub fn cmd_viz(cfg: &ExperimentConfig, checkpoint: &Path, info: &RunInfo) -> Result<Value> {
    prepare_out(&cfg.output_dir)?;
    let ds = cfg.load_dataset()?;
    let model = HarModel::from_checkpoint(&Checkpoint::load(checkpoint)?, Some(&ds.meta))?;
    let rep = cfg.representation();
    let (c, k) = rep.image_shape(ds.meta.num_channels);
    if (model.arch().num_channels, model.arch().image_width) != (c, k) {
        return Err(HarError::Model(format!(
            "checkpoint expects {}x{} images, config produces {c}x{k}",
            model.arch().num_channels,
            model.arch().image_width
        )));
    }
    let images = dataset_images(&ds, &rep)?;
    let out = &cfg.output_dir;
    let prefix = format!("{}_all", cfg.dataset_name());
    let mut artifacts: Vec<PathBuf> = Vec::new();

    let attention = match model.variant() {
        ModelVariant::Attention | ModelVariant::NoAttention => {
            let summary = attention_summary(&model, &images)?;
            let (csv, png) = render_heatmap(&summary.per_activity, &out.join(format!("{prefix}_attention_mean")))?;
            artifacts.extend([csv, png]);
            let seg = out.join(format!("{prefix}_attention_segments.csv"));
            let rows: Vec<Vec<f64>> = summary
                .per_segment
                .iter()
                .zip(&summary.labels)
                .map(|(a, &l)| std::iter::once(l as f64).chain(a.iter().copied()).collect())
                .collect();
            write_matrix_csv(&attnhar::Matrix::from_rows(&rows), &seg)?;
            artifacts.push(seg);
            json!({ "per_activity": summary.per_activity, "counts": summary.counts })
        }
        v => json!(format!("{} fusion has no sensor attention", v.name())),
    };

    let mut cams = 0;
    for class in 0..ds.meta.num_classes {
        let Some(img) = images.iter().find(|i| i.label == class) else {
            continue;
        };
        let map = cam(&model, img, class)?;
        let activity = sanitize(&ds.meta.class_names[class]);
        for (s, m) in map.sensors.iter().enumerate() {
            let sensor = sanitize(&ds.meta.sensor_names[s]);
            let (csv, png) = render_heatmap(m, &out.join(format!("{prefix}_cam_{activity}_{sensor}")))?;
            artifacts.extend([csv, png]);
            cams += 1;
        }
    }

    let report = evaluate(&model, &images)?;
    let (csv, png) = render_heatmap(&confusion_image(&report.confusion), &out.join(format!("{prefix}_confusion")))?;
    artifacts.extend([csv, png]);

    let summary = json!({
        "segments": images.len(),
        "accuracy": report.accuracy,
        "attention": attention,
        "cam_maps": cams,
        "artifacts": artifacts,
    });
    write_run_json(cfg, info, summary.clone())?;
    Ok(summary)
}

/// Writes a synthetic dataset as per-recording CSV files plus a manifest.
pub fn cmd_synth(spec: &SynthConfig, seed: u64, out: &Path) -> Result<Value> {
    prepare_out(out)?;
    let ds = synth_generate(&spec.to_spec()?, seed)?;
    let manifest = write_csv_dataset(&ds, out)?;
    let summary = json!({
        "manifest": manifest,
        "recordings": ds.recordings.len(),
        "seed": seed,
    });
    let run = json!({
        "command": "synth",
        "library": "attnhar",
        "version": attnhar::VERSION,
        "seed": seed,
        "spec": spec,
        "result": summary,
    });
    write_json(&run, &out.join("run.json"))?;
    Ok(summary)
}
