//! Sliding windows, modality-wise normalization and image encodings.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Recording};
use crate::error::{io_err, HarError, Result};
use crate::matrix::Matrix;

/// Floor added to DFT magnitudes before the log.
pub const LOG_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowingConfig {
    pub length: usize,
    pub stride: usize,
}

impl Default for WindowingConfig {
    fn default() -> Self {
        Self {
            length: 32,
            stride: 8,
        }
    }
}

impl WindowingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 || self.stride == 0 || self.stride > self.length {
            return Err(HarError::Config(format!(
                "windowing needs 1 <= stride <= length, got length {} stride {}",
                self.length, self.stride
            )));
        }
        Ok(())
    }

    /// `floor((frames - length) / stride) + 1`, or 0 if the window does not fit.
    pub fn count(&self, frames: usize) -> usize {
        if self.length > frames {
            0
        } else {
            (frames - self.length) / self.stride + 1
        }
    }
}

/// A `T`-frame window cut from every sensor of a recording at the same offset.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub sensors: Vec<Matrix>,
    pub label: usize,
    pub subject_id: u32,
    pub start: usize,
    pub modality_spans: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageKind {
    Raw,
    Dct,
    Dft,
}

impl ImageKind {
    pub const ALL: [ImageKind; 3] = [ImageKind::Raw, ImageKind::Dct, ImageKind::Dft];

    /// Image width for a window of `length` frames.
    pub fn width(self, length: usize) -> usize {
        match self {
            ImageKind::Raw | ImageKind::Dct => length,
            ImageKind::Dft => length / 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ImageKind::Raw => "I^RS",
            ImageKind::Dct => "I^DCT",
            ImageKind::Dft => "I^DFT",
        }
    }
}

/// Per-sensor `C x K` images of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentImage {
    pub images: Vec<Matrix>,
    pub kind: ImageKind,
    pub label: usize,
    pub subject_id: u32,
}

impl SegmentImage {
    pub fn num_sensors(&self) -> usize {
        self.images.len()
    }

    /// `(C, K)` of the per-sensor images.
    pub fn shape(&self) -> (usize, usize) {
        self.images
            .first()
            .map_or((0, 0), |m| (m.rows(), m.cols()))
    }
}

pub fn slide_windows(
    recording: &Recording,
    cfg: &WindowingConfig,
    modality_spans: &[(usize, usize)],
) -> Result<Vec<Segment>> {
    cfg.validate()?;
    let frames = recording.frames();
    if cfg.length > frames {
        return Err(HarError::WindowTooLong {
            window: cfg.length,
            frames,
        });
    }
    Ok((0..cfg.count(frames))
        .map(|i| {
            let start = i * cfg.stride;
            Segment {
                sensors: recording
                    .sensors
                    .iter()
                    .map(|m| m.col_window(start, cfg.length))
                    .collect(),
                label: recording.activity_label,
                subject_id: recording.subject_id,
                start,
                modality_spans: modality_spans.to_vec(),
            }
        })
        .collect())
}

/// Min-max scales each (sensor, modality span) block of the segment to
/// `[0, 1]` using that block's own extrema. Constant blocks become 0.5.
pub fn normalize_modality(segment: &Segment) -> Segment {
    let mut out = segment.clone();
    for m in &mut out.sensors {
        for &(lo, hi) in &segment.modality_spans {
            let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
            for c in lo..hi {
                for &v in m.row(c) {
                    min = min.min(v);
                    max = max.max(v);
                }
            }
            let range = max - min;
            for c in lo..hi {
                for v in m.row_mut(c) {
                    *v = if range > 0.0 { (*v - min) / range } else { 0.5 };
                }
            }
        }
    }
    out
}

/// Caches FFT plans across segments of the same length.
pub struct ImageEncoder {
    planner: FftPlanner<f64>,
}

impl Default for ImageEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl ImageEncoder {
    pub fn new() -> Self {
        Self {
            planner: FftPlanner::new(),
        }
    }

    fn plan(&mut self, len: usize) -> Arc<dyn Fft<f64>> {
        self.planner.plan_fft_forward(len)
    }

    pub fn encode(&mut self, segment: &Segment, kind: ImageKind) -> Result<SegmentImage> {
        match kind {
            ImageKind::Raw => Ok(raw_image(segment)),
            ImageKind::Dct => Ok(self.dct(segment)),
            ImageKind::Dft => self.dft(segment),
        }
    }

    /// Log magnitude of the DFT along time, bins `0..T/2` per channel.
    pub fn dft(&mut self, segment: &Segment) -> Result<SegmentImage> {
        let t = segment.sensors.first().map_or(0, Matrix::cols);
        if t == 0 || !t.is_multiple_of(2) {
            return Err(HarError::OddWindow(t));
        }
        let fft = self.plan(t);
        let k = t / 2;
        let mut buf = vec![Complex::new(0.0, 0.0); t];
        let images = segment
            .sensors
            .iter()
            .map(|m| {
                let mut img = Matrix::zeros(m.rows(), k);
                for c in 0..m.rows() {
                    for (b, &v) in buf.iter_mut().zip(m.row(c)) {
                        *b = Complex::new(v, 0.0);
                    }
                    fft.process(&mut buf);
                    for (o, b) in img.row_mut(c).iter_mut().zip(&buf[..k]) {
                        *o = (b.norm() + LOG_EPS).ln();
                    }
                }
                img
            })
            .collect();
        Ok(SegmentImage {
            images,
            kind: ImageKind::Dft,
            label: segment.label,
            subject_id: segment.subject_id,
        })
    }

    /// Unnormalized DCT-II along time, all `T` coefficients, computed from a
    /// length-`2T` FFT of the mirrored row.
    pub fn dct(&mut self, segment: &Segment) -> SegmentImage {
        let t = segment.sensors.first().map_or(0, Matrix::cols);
        let fft = self.plan(2 * t);
        let mut buf = vec![Complex::new(0.0, 0.0); 2 * t];
        let twiddle: Vec<Complex<f64>> = (0..t)
            .map(|k| Complex::from_polar(0.5, -std::f64::consts::PI * k as f64 / (2 * t) as f64))
            .collect();
        let images = segment
            .sensors
            .iter()
            .map(|m| {
                let mut img = Matrix::zeros(m.rows(), t);
                for c in 0..m.rows() {
                    let row = m.row(c);
                    for (n, &v) in row.iter().enumerate() {
                        buf[n] = Complex::new(v, 0.0);
                        buf[2 * t - 1 - n] = Complex::new(v, 0.0);
                    }
                    fft.process(&mut buf);
                    for (k, o) in img.row_mut(c).iter_mut().enumerate() {
                        *o = (twiddle[k] * buf[k]).re;
                    }
                }
                img
            })
            .collect();
        SegmentImage {
            images,
            kind: ImageKind::Dct,
            label: segment.label,
            subject_id: segment.subject_id,
        }
    }
}

pub fn dft_image(segment: &Segment) -> Result<SegmentImage> {
    ImageEncoder::new().dft(segment)
}

pub fn dct_image(segment: &Segment) -> SegmentImage {
    ImageEncoder::new().dct(segment)
}

pub fn raw_image(segment: &Segment) -> SegmentImage {
    SegmentImage {
        images: segment.sensors.clone(),
        kind: ImageKind::Raw,
        label: segment.label,
        subject_id: segment.subject_id,
    }
}

/// Windowing plus image encoding choices applied to every recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Representation {
    pub windowing: WindowingConfig,
    pub kind: ImageKind,
}

impl Representation {
    /// `(C, K)` of the images produced for recordings with `channels` channels.
    pub fn image_shape(&self, channels: usize) -> (usize, usize) {
        (channels, self.kind.width(self.windowing.length))
    }
}

/// Window → normalize → encode for one recording.
pub fn recording_images(
    encoder: &mut ImageEncoder,
    recording: &Recording,
    rep: &Representation,
    modality_spans: &[(usize, usize)],
) -> Result<Vec<SegmentImage>> {
    slide_windows(recording, &rep.windowing, modality_spans)?
        .iter()
        .map(|s| encoder.encode(&normalize_modality(s), rep.kind))
        .collect()
}

/// Images of every recording in dataset order.
pub fn dataset_images(dataset: &Dataset, rep: &Representation) -> Result<Vec<SegmentImage>> {
    let mut enc = ImageEncoder::new();
    let mut out = Vec::new();
    for r in &dataset.recordings {
        out.extend(recording_images(
            &mut enc,
            r,
            rep,
            &dataset.meta.modality_spans,
        )?);
    }
    Ok(out)
}

/// Writes one CSV and one 8-bit grayscale PNG per sensor:
/// `<dir>/<prefix>_s<sensor>.{csv,png}`.
pub fn dump_segment_image(image: &SegmentImage, dir: &Path, prefix: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (s, m) in image.images.iter().enumerate() {
        let stem = dir.join(format!("{prefix}_s{s}"));
        crate::viz::write_matrix_csv(m, &stem.with_extension("csv"))?;
        let (lo, hi) = m.min_max();
        let pixels: Vec<u8> = m
            .data()
            .iter()
            .map(|&v| {
                let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
                (t * 255.0).round() as u8
            })
            .collect();
        crate::viz::write_png(
            &stem.with_extension("png"),
            m.cols() as u32,
            m.rows() as u32,
            png::ColorType::Grayscale,
            &pixels,
        )?;
    }
    Ok(())
}
