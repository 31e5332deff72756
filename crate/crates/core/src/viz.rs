//! Attention heatmaps, gradient-weighted class activation maps and
//! confusion-matrix images, emitted as CSV (exact values) and PNG.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use attnhar_nn::{Graph, Mode, NodeId, Tensor};
use serde::Serialize;

use crate::error::{io_err, HarError, Result};
use crate::matrix::Matrix;
use crate::model::{images_to_tensor, HarModel, ModelVariant, SensorMaps};
use crate::signal::SegmentImage;

/// Mean sensor attention per true activity, plus every per-segment vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttentionSummary {
    /// `M x S`; rows of activities without segments are zero.
    pub per_activity: Matrix,
    pub counts: Vec<usize>,
    pub per_segment: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

/// Averages the model's attention vectors by true label. Only fused
/// variants carry attention; `no-attention` yields the uniform vector.
pub fn attention_summary(model: &HarModel, images: &[SegmentImage]) -> Result<AttentionSummary> {
    if images.is_empty() {
        return Err(HarError::EmptyEvaluation);
    }
    if matches!(model.variant(), ModelVariant::Early | ModelVariant::Late) {
        return Err(HarError::Model(format!(
            "{} fusion has no sensor attention",
            model.variant().name()
        )));
    }
    let pred = model.predict(images)?;
    let per_segment = pred.attention.expect("fused models report attention");
    let (m, s) = (model.arch().num_classes, model.arch().num_sensors);
    let mut sums = Matrix::zeros(m, s);
    let mut counts = vec![0usize; m];
    let labels: Vec<usize> = images.iter().map(|i| i.label).collect();
    for (&label, att) in labels.iter().zip(&per_segment) {
        if label >= m {
            return Err(HarError::Data(format!("label {label} out of range for {m} classes")));
        }
        counts[label] += 1;
        for (acc, &a) in sums.row_mut(label).iter_mut().zip(att) {
            *acc += a;
        }
    }
    for (c, &n) in counts.iter().enumerate() {
        if n > 0 {
            sums.row_mut(c).iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    Ok(AttentionSummary {
        per_activity: sums,
        counts,
        per_segment,
        labels,
    })
}

/// Per-sensor `C x K` importance grids in `[0, 1]` for one class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CamMap {
    pub target_class: usize,
    pub sensors: Vec<Matrix>,
}

/// Gradient-weighted activation map at the sensor-block output.
///
/// Channel weights are the spatial means of the target logit's gradient
/// with respect to the concatenated branch maps; the map is
/// `relu(sum_f weight_f * A_f)`, resized to the image grid and min-max
/// rescaled (a constant map becomes all zeros). Late fusion uses each
/// sensor network's own logits; early fusion has one joint map, which is
/// reported for every sensor.
pub fn cam(model: &HarModel, image: &SegmentImage, target_class: usize) -> Result<CamMap> {
    let arch = model.arch();
    if target_class >= arch.num_classes {
        return Err(HarError::Model(format!(
            "class {target_class} out of range for {} classes",
            arch.num_classes
        )));
    }
    let (c, k) = image.shape();
    let batch = images_to_tensor(&[image])?;
    let mut g = Graph::new();
    let out = model.forward(&mut g, &batch, Mode::Infer)?;
    let s = arch.num_sensors;

    let grad_cam = |g: &Graph, logits: NodeId, maps: NodeId| -> Vec<Matrix> {
        let mut seed = Tensor::zeros(g.value(logits).shape());
        seed.data_mut()[target_class] = 1.0;
        let grads = g.backward_with_seed(logits, seed);
        let a = g.value(maps);
        let zeros;
        let da = match grads.get(maps) {
            Some(t) => t,
            None => {
                zeros = Tensor::zeros(a.shape());
                &zeros
            }
        };
        let sh = a.shape();
        let (n, f, h, w) = (sh[0], sh[1], sh[2], sh[3]);
        (0..n)
            .map(|i| {
                let mut acc = vec![0.0; h * w];
                for ch in 0..f {
                    let off = (i * f + ch) * h * w;
                    let grid = &a.data()[off..off + h * w];
                    let weight = da.data()[off..off + h * w].iter().sum::<f64>() / (h * w) as f64;
                    for (o, &v) in acc.iter_mut().zip(grid) {
                        *o += weight * v;
                    }
                }
                let raw = Matrix::from_vec(h, w, acc.into_iter().map(|v| v.max(0.0)).collect());
                min_max_rescale(&bilinear_resize(&raw, c, k))
            })
            .collect()
    };

    let sensors = match out.sensor_maps {
        SensorMaps::Batched { node, .. } => grad_cam(&g, out.logits[0], node),
        SensorMaps::PerSensor(maps) => maps
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                let logits = if out.logits.len() == s { out.logits[i] } else { out.logits[0] };
                grad_cam(&g, logits, m).remove(0)
            })
            .collect(),
        SensorMaps::Joint(node) => {
            let map = grad_cam(&g, out.logits[0], node).remove(0);
            vec![map; s]
        }
    };
    Ok(CamMap {
        target_class,
        sensors,
    })
}

/// Bilinear resampling with aligned corners.
pub fn bilinear_resize(m: &Matrix, rows: usize, cols: usize) -> Matrix {
    if (m.rows(), m.cols()) == (rows, cols) {
        return m.clone();
    }
    let coord = |i: usize, out: usize, inp: usize| -> (usize, usize, f64) {
        if out <= 1 || inp <= 1 {
            return (0, 0, 0.0);
        }
        let x = i as f64 * (inp - 1) as f64 / (out - 1) as f64;
        let lo = (x.floor() as usize).min(inp - 1);
        let hi = (lo + 1).min(inp - 1);
        (lo, hi, x - lo as f64)
    };
    let mut out = Matrix::zeros(rows, cols);
    for r in 0..rows {
        let (r0, r1, fr) = coord(r, rows, m.rows());
        for c in 0..cols {
            let (c0, c1, fc) = coord(c, cols, m.cols());
            let top = m.get(r0, c0) * (1.0 - fc) + m.get(r0, c1) * fc;
            let bot = m.get(r1, c0) * (1.0 - fc) + m.get(r1, c1) * fc;
            out.set(r, c, top * (1.0 - fr) + bot * fr);
        }
    }
    out
}

pub fn min_max_rescale(m: &Matrix) -> Matrix {
    let (lo, hi) = m.min_max();
    if hi - lo <= 0.0 || !(hi - lo).is_finite() {
        return Matrix::zeros(m.rows(), m.cols());
    }
    m.map(|v| (v - lo) / (hi - lo))
}

/// Row-stochastic copy of a confusion matrix; zero rows stay zero.
pub fn confusion_image(confusion: &[Vec<u64>]) -> Matrix {
    let rows: Vec<Vec<f64>> = confusion
        .iter()
        .map(|r| {
            let total: u64 = r.iter().sum();
            r.iter()
                .map(|&v| if total == 0 { 0.0 } else { v as f64 / total as f64 })
                .collect()
        })
        .collect();
    Matrix::from_rows(&rows)
}

/// Blue (low) through white to red (high), `t` in `[0, 1]`.
pub fn blue_red(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.5 };
    let ch = |v: f64| (v * 255.0).round() as u8;
    if t < 0.5 {
        let u = t * 2.0;
        [ch(u), ch(u), 255]
    } else {
        let u = (1.0 - t) * 2.0;
        [255, ch(u), ch(u)]
    }
}

/// Writes `<stem>.csv` with exact values and `<stem>.png` rendered from
/// them. Colors span the matrix's own min..max; each cell is drawn as a
/// square block. Returns both paths.
pub fn render_heatmap(m: &Matrix, stem: &Path) -> Result<(PathBuf, PathBuf)> {
    let csv_path = stem.with_extension("csv");
    let png_path = stem.with_extension("png");
    write_matrix_csv(m, &csv_path)?;
    // Colors come from what was written, so the two artifacts cannot drift.
    let values = read_matrix_csv(&csv_path)?;
    let (lo, hi) = values.min_max();
    let span = hi - lo;
    let cell = (256 / values.rows().max(values.cols()).max(1)).clamp(1, 32);
    let (w, h) = (values.cols() * cell, values.rows() * cell);
    let mut pixels = Vec::with_capacity(w * h * 3);
    for r in 0..values.rows() {
        let mut line = Vec::with_capacity(w * 3);
        for c in 0..values.cols() {
            let t = if span > 0.0 { (values.get(r, c) - lo) / span } else { 0.5 };
            let rgb = blue_red(t);
            for _ in 0..cell {
                line.extend_from_slice(&rgb);
            }
        }
        for _ in 0..cell {
            pixels.extend_from_slice(&line);
        }
    }
    write_png(&png_path, w as u32, h as u32, png::ColorType::Rgb, &pixels)?;
    Ok((csv_path, png_path))
}

/// Headerless CSV; `f64` Display is round-trip exact.
pub fn write_matrix_csv(m: &Matrix, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    for r in 0..m.rows() {
        w.write_record(m.row(r).iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.trim().parse::<f64>().map_err(|e| HarError::MalformedRow {
                    path: path.to_path_buf(),
                    row: i + 1,
                    message: format!("{f:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.windows(2).any(|p| p[0].len() != p[1].len()) {
        return Err(HarError::Data(format!("{}: ragged matrix", path.display())));
    }
    Ok(Matrix::from_rows(&rows))
}

pub fn write_png(path: &Path, width: u32, height: u32, color: png::ColorType, data: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width, height);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header()?;
    w.write_image_data(data)?;
    w.finish()?;
    Ok(())
}
