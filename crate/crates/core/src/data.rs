//! Recordings, dataset loaders and the synthetic generator.
//!
//! # Daily and Sports Activities layout
//!
//! ```text
//! <root>/a01 .. a19/        activity (1-based, label = NN - 1)
//!          p1 .. p8/        subject  (1-based, subject id = K - 1)
//!            s01 .. s60.txt 5-second segment, 125 rows x 45 columns
//! ```
//!
//! Each row is one frame at 25 Hz, comma separated. Columns come in five
//! 9-wide blocks for torso, right arm, left arm, right leg and left leg; inside
//! a block the order is acc x,y,z; gyro x,y,z; mag x,y,z. Sensor `s` channel
//! `c` of a recording is therefore column `9 * s + c` of the file.
//!
//! # Generic manifest
//!
//! ```text
//! S=2,C=3,rate=50,M=4
//! walk_01.csv,0,1
//! walk_02.csv,1,1
//! ```
//!
//! File paths are relative to the manifest and subject ids are 0-based. Each data file has `S * C`
//! comma-separated columns (sensor-major) and one frame per row, no header.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, HarError, Result};
use crate::matrix::Matrix;

/// One subject's continuous multi-sensor time series for one activity.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject_id: u32,
    pub activity_label: usize,
    /// One `C x T_total` matrix per sensor.
    pub sensors: Vec<Matrix>,
    pub sample_rate_hz: u32,
}

impl Recording {
    pub fn frames(&self) -> usize {
        self.sensors.first().map_or(0, Matrix::cols)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub num_sensors: usize,
    pub num_channels: usize,
    pub num_classes: usize,
    pub num_subjects: usize,
    pub sample_rate_hz: u32,
    pub class_names: Vec<String>,
    pub sensor_names: Vec<String>,
    /// Half-open channel ranges of each modality; they partition `[0, C)`.
    pub modality_spans: Vec<(usize, usize)>,
}

impl DatasetMeta {
    /// Meta with generic class/sensor names and default modality spans.
    pub fn generic(
        num_sensors: usize,
        num_channels: usize,
        num_classes: usize,
        num_subjects: usize,
        sample_rate_hz: u32,
    ) -> Self {
        Self {
            num_sensors,
            num_channels,
            num_classes,
            num_subjects,
            sample_rate_hz,
            class_names: (0..num_classes).map(|m| format!("class{m}")).collect(),
            sensor_names: (0..num_sensors).map(|s| format!("sensor{s}")).collect(),
            modality_spans: default_modality_spans(num_channels),
        }
    }
}

/// Triaxial modalities when the channel count is a multiple of three,
/// otherwise one span covering every channel.
pub fn default_modality_spans(channels: usize) -> Vec<(usize, usize)> {
    if channels >= 3 && channels.is_multiple_of(3) {
        (0..channels / 3).map(|i| (3 * i, 3 * i + 3)).collect()
    } else {
        vec![(0, channels)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub recordings: Vec<Recording>,
}

impl Dataset {
    /// Checks every recording against the meta.
    pub fn validate(&self) -> Result<()> {
        let m = &self.meta;
        if m.num_sensors == 0 || m.num_channels == 0 || m.num_classes == 0 {
            return Err(HarError::Data("S, C and M must be positive".into()));
        }
        let spans_ok = m.modality_spans.first().is_some_and(|s| s.0 == 0)
            && m.modality_spans.last().is_some_and(|s| s.1 == m.num_channels)
            && m.modality_spans.windows(2).all(|w| w[0].1 == w[1].0)
            && m.modality_spans.iter().all(|s| s.0 < s.1);
        if !spans_ok {
            return Err(HarError::Data(format!(
                "modality spans {:?} do not partition 0..{}",
                m.modality_spans, m.num_channels
            )));
        }
        for (i, r) in self.recordings.iter().enumerate() {
            if r.sensors.len() != m.num_sensors {
                return Err(HarError::Data(format!(
                    "recording {i}: {} sensors, expected {}",
                    r.sensors.len(),
                    m.num_sensors
                )));
            }
            let t = r.frames();
            if t == 0 {
                return Err(HarError::Data(format!("recording {i} is empty")));
            }
            for s in &r.sensors {
                if s.rows() != m.num_channels || s.cols() != t {
                    return Err(HarError::Data(format!(
                        "recording {i}: sensor matrix {}x{}, expected {}x{t}",
                        s.rows(),
                        s.cols(),
                        m.num_channels
                    )));
                }
            }
            if r.activity_label >= m.num_classes {
                return Err(HarError::Data(format!(
                    "recording {i}: label {} outside 0..{}",
                    r.activity_label, m.num_classes
                )));
            }
            if r.subject_id as usize >= m.num_subjects {
                return Err(HarError::Data(format!(
                    "recording {i}: subject {} outside 0..{}",
                    r.subject_id, m.num_subjects
                )));
            }
        }
        Ok(())
    }

    /// Sorted distinct subject ids.
    pub fn subjects(&self) -> Vec<u32> {
        let mut s: Vec<u32> = self.recordings.iter().map(|r| r.subject_id).collect();
        s.sort_unstable();
        s.dedup();
        s
    }
}

pub const DAILY_CLASSES: [&str; 19] = [
    "sitting",
    "standing",
    "lying on back",
    "lying on right side",
    "ascending stairs",
    "descending stairs",
    "standing in elevator",
    "moving in elevator",
    "walking in parking lot",
    "treadmill 4 km/h flat",
    "treadmill 4 km/h inclined",
    "treadmill running 8 km/h",
    "stepper",
    "cross trainer",
    "cycling horizontal",
    "cycling vertical",
    "rowing",
    "jumping",
    "basketball",
];

pub const DAILY_SENSORS: [&str; 5] = ["torso", "right_arm", "left_arm", "right_leg", "left_leg"];

/// Directory-tree dimensions of the Daily dataset. [`Default`] is the
/// published dataset; smaller layouts are handy for tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DailyLayout {
    pub activities: usize,
    pub subjects: usize,
    pub segments: usize,
    pub frames: usize,
}

impl Default for DailyLayout {
    fn default() -> Self {
        Self {
            activities: 19,
            subjects: 8,
            segments: 60,
            frames: 125,
        }
    }
}

pub const DAILY_RATE_HZ: u32 = 25;
const DAILY_SENSOR_COUNT: usize = 5;
const DAILY_CHANNELS: usize = 9;

pub fn load_daily_dataset(root: &Path) -> Result<Dataset> {
    load_daily_with_layout(root, &DailyLayout::default())
}

pub fn load_daily_with_layout(root: &Path, layout: &DailyLayout) -> Result<Dataset> {
    let activity_dirs: Vec<String> = (1..=layout.activities).map(|a| format!("a{a:02}")).collect();
    let subject_dirs: Vec<String> = (1..=layout.subjects).map(|p| format!("p{p}")).collect();
    let files: Vec<String> = (1..=layout.segments).map(|s| format!("s{s:02}.txt")).collect();

    expect_exact_entries(root, &activity_dirs)?;
    let mut recordings = Vec::with_capacity(layout.activities * layout.subjects * layout.segments);
    for (label, a) in activity_dirs.iter().enumerate() {
        let adir = root.join(a);
        expect_exact_entries(&adir, &subject_dirs)?;
        for (subject, p) in subject_dirs.iter().enumerate() {
            let pdir = adir.join(p);
            expect_exact_entries(&pdir, &files)?;
            for f in &files {
                let sensors = read_daily_file(&pdir.join(f), layout.frames)?;
                recordings.push(Recording {
                    subject_id: subject as u32,
                    activity_label: label,
                    sensors,
                    sample_rate_hz: DAILY_RATE_HZ,
                });
            }
        }
    }
    let class_names = (0..layout.activities)
        .map(|a| {
            DAILY_CLASSES
                .get(a)
                .map_or_else(|| format!("a{:02}", a + 1), |s| s.to_string())
        })
        .collect();
    let meta = DatasetMeta {
        num_sensors: DAILY_SENSOR_COUNT,
        num_channels: DAILY_CHANNELS,
        num_classes: layout.activities,
        num_subjects: layout.subjects,
        sample_rate_hz: DAILY_RATE_HZ,
        class_names,
        sensor_names: DAILY_SENSORS.iter().map(|s| s.to_string()).collect(),
        modality_spans: vec![(0, 3), (3, 6), (6, 9)],
    };
    Ok(Dataset { meta, recordings })
}

/// Errors on the first expected entry that is missing, then on the first
/// entry that is not expected. Dot-files are ignored.
fn expect_exact_entries(dir: &Path, expected: &[String]) -> Result<()> {
    for name in expected {
        let p = dir.join(name);
        if !p.exists() {
            return Err(HarError::MissingPath(p));
        }
    }
    let wanted: HashSet<&str> = expected.iter().map(String::as_str).collect();
    let mut extra: Vec<PathBuf> = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if !name.starts_with('.') && !wanted.contains(name.as_str()) {
            extra.push(entry.path());
        }
    }
    extra.sort();
    match extra.into_iter().next() {
        Some(p) => Err(HarError::UnexpectedPath(p)),
        None => Ok(()),
    }
}

fn read_daily_file(path: &Path, frames: usize) -> Result<Vec<Matrix>> {
    let rows = read_numeric_rows(path, DAILY_SENSOR_COUNT * DAILY_CHANNELS)?;
    if rows.len() != frames {
        return Err(HarError::MalformedRow {
            path: path.to_path_buf(),
            row: rows.len() + 1,
            message: format!("expected {frames} rows, found {}", rows.len()),
        });
    }
    Ok(split_sensor_major(&rows, DAILY_SENSOR_COUNT, DAILY_CHANNELS))
}

/// Reads a headerless comma-separated file of exactly `width` numeric
/// columns per row. Row numbers in errors are 1-based.
fn read_numeric_rows(path: &Path, width: usize) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| HarError::MalformedRow {
                path: path.to_path_buf(),
                row: i + 1,
                message: format!("not a number ({e})"),
            })?;
        if row.len() != width {
            return Err(HarError::MalformedRow {
                path: path.to_path_buf(),
                row: i + 1,
                message: format!("expected {width} columns, found {}", row.len()),
            });
        }
        if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
            return Err(HarError::MalformedRow {
                path: path.to_path_buf(),
                row: i + 1,
                message: format!("non-finite value {bad}"),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

fn split_sensor_major(rows: &[Vec<f64>], sensors: usize, channels: usize) -> Vec<Matrix> {
    let t = rows.len();
    (0..sensors)
        .map(|s| {
            let mut m = Matrix::zeros(channels, t);
            for (ti, row) in rows.iter().enumerate() {
                for c in 0..channels {
                    m.set(c, ti, row[s * channels + c]);
                }
            }
            m
        })
        .collect()
}

struct ManifestHeader {
    sensors: usize,
    channels: usize,
    rate: u32,
    classes: usize,
}

fn parse_manifest_header(path: &Path, line: &str) -> Result<ManifestHeader> {
    let err = |message: String| HarError::Manifest {
        path: path.to_path_buf(),
        line: 1,
        message,
    };
    let (mut s, mut c, mut rate, mut m) = (None, None, None, None);
    for field in line.split(',') {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| err(format!("expected key=value, found {field:?}")))?;
        let value: u64 = value
            .trim()
            .parse()
            .map_err(|_| err(format!("{}: not a positive integer", key.trim())))?;
        if value == 0 {
            return Err(err(format!("{} must be positive", key.trim())));
        }
        match key.trim() {
            "S" => s = Some(value as usize),
            "C" => c = Some(value as usize),
            "rate" => rate = Some(value as u32),
            "M" => m = Some(value as usize),
            other => return Err(err(format!("unknown header key {other:?}"))),
        }
    }
    match (s, c, rate, m) {
        (Some(sensors), Some(channels), Some(rate), Some(classes)) => Ok(ManifestHeader {
            sensors,
            channels,
            rate,
            classes,
        }),
        _ => Err(err("header must define S, C, rate and M".into())),
    }
}

/// Loads a dataset described by a generic manifest (see module docs).
pub fn load_csv_dataset(manifest: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(manifest).map_err(io_err(manifest))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header_line) = lines.next().ok_or_else(|| HarError::Manifest {
        path: manifest.to_path_buf(),
        line: 1,
        message: "missing header".into(),
    })?;
    let header = parse_manifest_header(manifest, header_line.trim())?;

    let mut seen = HashSet::new();
    let mut recordings = Vec::new();
    for (i, line) in lines {
        let err = |message: String| HarError::Manifest {
            path: manifest.to_path_buf(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [file, subject, label] = fields[..] else {
            return Err(err(format!(
                "expected file,subject,label; found {} fields",
                fields.len()
            )));
        };
        let subject: u32 = subject
            .parse()
            .map_err(|_| err(format!("bad subject {subject:?}")))?;
        let label: usize = label
            .parse()
            .map_err(|_| err(format!("bad label {label:?}")))?;
        if label >= header.classes {
            return Err(err(format!("label {label} outside 0..{}", header.classes)));
        }
        if !seen.insert(file.to_string()) {
            return Err(err(format!("duplicate file entry {file:?}")));
        }
        let path = base.join(file);
        let rows = read_numeric_rows(&path, header.sensors * header.channels)?;
        if rows.is_empty() {
            return Err(HarError::MalformedRow {
                path,
                row: 1,
                message: "no frames".into(),
            });
        }
        recordings.push(Recording {
            subject_id: subject,
            activity_label: label,
            sensors: split_sensor_major(&rows, header.sensors, header.channels),
            sample_rate_hz: header.rate,
        });
    }
    // Subject ids are 0-based indices, so a gap is a subject with no
    // recordings rather than a renumbering.
    let num_subjects = recordings.iter().map(|r| r.subject_id as usize + 1).max().unwrap_or(0);
    let meta = DatasetMeta::generic(
        header.sensors,
        header.channels,
        header.classes,
        num_subjects,
        header.rate,
    );
    Ok(Dataset { meta, recordings })
}

/// Writes `dataset` in the generic manifest format and returns the manifest
/// path. Values are printed with shortest round-trip formatting.
pub fn write_csv_dataset(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let m = &dataset.meta;
    let mut manifest = format!(
        "S={},C={},rate={},M={}\n",
        m.num_sensors, m.num_channels, m.sample_rate_hz, m.num_classes
    );
    for (i, r) in dataset.recordings.iter().enumerate() {
        let name = format!("rec_{i:05}.csv");
        let mut body = String::new();
        for t in 0..r.frames() {
            let mut first = true;
            for s in &r.sensors {
                for c in 0..s.rows() {
                    if !first {
                        body.push(',');
                    }
                    first = false;
                    body.push_str(&format!("{}", s.get(c, t)));
                }
            }
            body.push('\n');
        }
        let path = dir.join(&name);
        fs::write(&path, body).map_err(io_err(&path))?;
        manifest.push_str(&format!("{name},{},{}\n", r.subject_id, r.activity_label));
    }
    let path = dir.join("manifest.csv");
    fs::write(&path, manifest).map_err(io_err(&path))?;
    Ok(path)
}

/// A sinusoid planted at one (sensor, channel) slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub sensor: usize,
    pub channel: usize,
    pub freq_hz: f64,
    pub amplitude: f64,
}

/// Description of a synthetic dataset with known class structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_sensors: usize,
    pub num_channels: usize,
    pub num_classes: usize,
    pub num_subjects: usize,
    pub recordings_per_class: usize,
    /// Frames per recording (`T_total`).
    pub frames: usize,
    pub sample_rate_hz: u32,
    /// `signatures[m]` lists the tones of class `m`.
    pub signatures: Vec<Vec<Tone>>,
    pub noise_std: f64,
    /// When set, every tone of class `m` is placed on sensor
    /// `relevant_sensor_map[m]` regardless of its own `sensor` field, so
    /// that the other sensors carry noise only.
    #[serde(default)]
    pub relevant_sensor_map: Option<Vec<usize>>,
}

impl SynthSpec {
    /// Class `m` gets one tone on channel `m % C` of every sensor, at a
    /// frequency that lands on its own DFT bin for 32-frame windows.
    #[allow(clippy::too_many_arguments)]
    pub fn distinct_frequencies(
        num_sensors: usize,
        num_channels: usize,
        num_classes: usize,
        num_subjects: usize,
        recordings_per_class: usize,
        frames: usize,
        sample_rate_hz: u32,
        noise_std: f64,
    ) -> Self {
        let bin_hz = f64::from(sample_rate_hz) / 32.0;
        let spacing = if 2 * num_classes < 16 { 2.0 } else { 1.0 };
        let signatures = (0..num_classes)
            .map(|m| {
                (0..num_sensors)
                    .map(|s| Tone {
                        sensor: s,
                        channel: m % num_channels,
                        freq_hz: spacing * (m as f64 + 1.0) * bin_hz,
                        amplitude: 1.0,
                    })
                    .collect()
            })
            .collect();
        Self {
            num_sensors,
            num_channels,
            num_classes,
            num_subjects,
            recordings_per_class,
            frames,
            sample_rate_hz,
            signatures,
            noise_std,
            relevant_sensor_map: None,
        }
    }

    /// Like [`SynthSpec::distinct_frequencies`] but class `m` only carries
    /// signal on sensor `m % S`.
    #[allow(clippy::too_many_arguments)]
    pub fn planted_relevance(
        num_sensors: usize,
        num_channels: usize,
        num_classes: usize,
        num_subjects: usize,
        recordings_per_class: usize,
        frames: usize,
        sample_rate_hz: u32,
        noise_std: f64,
    ) -> Self {
        let mut spec = Self::distinct_frequencies(
            num_sensors,
            num_channels,
            num_classes,
            num_subjects,
            recordings_per_class,
            frames,
            sample_rate_hz,
            noise_std,
        );
        for sig in &mut spec.signatures {
            sig.truncate(1);
        }
        spec.relevant_sensor_map = Some((0..num_classes).map(|m| m % num_sensors).collect());
        spec
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarError::Config(m));
        if self.num_sensors == 0
            || self.num_channels == 0
            || self.num_classes == 0
            || self.num_subjects == 0
            || self.frames == 0
            || self.sample_rate_hz == 0
        {
            return bad("synth: S, C, M, subjects, frames and rate must be positive".into());
        }
        if self.signatures.len() != self.num_classes {
            return bad(format!(
                "synth: {} signatures for {} classes",
                self.signatures.len(),
                self.num_classes
            ));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("synth: noise_std must be a finite non-negative number".into());
        }
        let nyquist = f64::from(self.sample_rate_hz) / 2.0;
        for (m, sig) in self.signatures.iter().enumerate() {
            for t in sig {
                if t.sensor >= self.num_sensors || t.channel >= self.num_channels {
                    return bad(format!("synth: class {m} tone slot out of range"));
                }
                if !(t.freq_hz >= 0.0 && t.freq_hz < nyquist) {
                    return bad(format!(
                        "synth: class {m} frequency {} not below {nyquist} Hz",
                        t.freq_hz
                    ));
                }
                if t.amplitude.is_nan() || t.amplitude <= 0.0 {
                    return bad(format!("synth: class {m} amplitude must be positive"));
                }
            }
        }
        if let Some(map) = &self.relevant_sensor_map {
            if map.len() != self.num_classes || map.iter().any(|&s| s >= self.num_sensors) {
                return bad("synth: relevant_sensor_map must give a valid sensor per class".into());
            }
        }
        Ok(())
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta::generic(
            self.num_sensors,
            self.num_channels,
            self.num_classes,
            self.num_subjects,
            self.sample_rate_hz,
        )
    }
}

/// Deterministic synthetic dataset: recordings are ordered class-major and
/// recording `r` of a class belongs to subject `r % num_subjects`.
pub fn synth_generate(spec: &SynthSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spec.noise_std)
        .map_err(|e| HarError::Config(format!("synth: {e}")))?;
    let rate = f64::from(spec.sample_rate_hz);
    let mut recordings = Vec::with_capacity(spec.num_classes * spec.recordings_per_class);
    for (m, sig) in spec.signatures.iter().enumerate() {
        for r in 0..spec.recordings_per_class {
            let mut sensors = vec![Matrix::zeros(spec.num_channels, spec.frames); spec.num_sensors];
            for tone in sig {
                let s = spec
                    .relevant_sensor_map
                    .as_ref()
                    .map_or(tone.sensor, |map| map[m]);
                let row = sensors[s].row_mut(tone.channel);
                for (t, v) in row.iter_mut().enumerate() {
                    *v += tone.amplitude
                        * (2.0 * std::f64::consts::PI * tone.freq_hz * t as f64 / rate).sin();
                }
            }
            if spec.noise_std > 0.0 {
                for s in &mut sensors {
                    for c in 0..spec.num_channels {
                        for v in s.row_mut(c) {
                            *v += noise.sample(&mut rng);
                        }
                    }
                }
            }
            recordings.push(Recording {
                subject_id: (r % spec.num_subjects) as u32,
                activity_label: m,
                sensors,
                sample_rate_hz: spec.sample_rate_hz,
            });
        }
    }
    Ok(Dataset {
        meta: spec.meta(),
        recordings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_tone_spec(noise: f64) -> SynthSpec {
        SynthSpec {
            num_sensors: 2,
            num_channels: 3,
            num_classes: 1,
            num_subjects: 1,
            recordings_per_class: 2,
            frames: 128,
            sample_rate_hz: 32,
            signatures: vec![vec![Tone {
                sensor: 0,
                channel: 0,
                freq_hz: 4.0,
                amplitude: 1.0,
            }]],
            noise_std: noise,
            relevant_sensor_map: None,
        }
    }

    #[test]
    fn noiseless_tone() {
        let ds = synth_generate(&one_tone_spec(0.0), 1).unwrap();
        let r = &ds.recordings[0];
        for t in 0..128 {
            let expect = (2.0 * std::f64::consts::PI * 4.0 * t as f64 / 32.0).sin();
            assert_eq!(r.sensors[0].get(0, t), expect);
            assert_eq!(r.sensors[0].get(1, t), 0.0);
            assert_eq!(r.sensors[1].get(0, t), 0.0);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = one_tone_spec(0.3);
        assert_eq!(synth_generate(&spec, 5).unwrap(), synth_generate(&spec, 5).unwrap());
        assert_ne!(synth_generate(&spec, 5).unwrap(), synth_generate(&spec, 6).unwrap());
    }

    #[test]
    fn noise_channel_mean_near_zero() {
        let mut spec = one_tone_spec(0.1);
        spec.recordings_per_class = 1000;
        spec.frames = 4;
        let ds = synth_generate(&spec, 3).unwrap();
        let vals: Vec<f64> = ds
            .recordings
            .iter()
            .flat_map(|r| r.sensors[1].row(2).to_vec())
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn validation_catches_nyquist_and_amplitude() {
        let mut spec = one_tone_spec(0.0);
        spec.signatures[0][0].freq_hz = 16.0;
        assert!(synth_generate(&spec, 0).is_err());
        let mut spec = one_tone_spec(0.0);
        spec.signatures[0][0].amplitude = 0.0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn planted_relevance_moves_signal() {
        let spec = SynthSpec::planted_relevance(3, 3, 3, 2, 2, 64, 32, 0.0);
        let ds = synth_generate(&spec, 0).unwrap();
        for r in &ds.recordings {
            let k = r.activity_label % 3;
            for (s, m) in r.sensors.iter().enumerate() {
                let energy: f64 = m.data().iter().map(|v| v * v).sum();
                assert_eq!(energy > 0.0, s == k);
            }
        }
    }

    #[test]
    fn modality_spans() {
        assert_eq!(default_modality_spans(9), vec![(0, 3), (3, 6), (6, 9)]);
        assert_eq!(default_modality_spans(2), vec![(0, 2)]);
        assert_eq!(default_modality_spans(3), vec![(0, 3)]);
    }
}
