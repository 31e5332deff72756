//! The attention-fusion network and its baselines.
//!
//! Fused variants (`attention`, `no-attention`):
//!
//! ```text
//! S images C x K ─ sensor block ─> F [S, L] ─ attention ─> F̂ [S, L]
//!   ─ inter-sensor block (F̂ as a 1-channel S x L image) ─> flatten
//!   ─ dense(hidden, relu) ─ dense(M) ─ softmax
//! ```
//!
//! A sensor block runs parallel conv branches (each conv → batch norm →
//! relu, SAME padding), concatenates them on the channel axis, max-pools 2x2
//! and flattens. `early` stacks the S images as input channels of a single
//! block; `late` averages the softmax outputs of S independent networks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use attnhar_nn::init::kaiming_uniform;
use attnhar_nn::{
    Activation, BatchNormParams, Checkpoint, Graph, Mode, NodeId, Padding, ParamId, ParamKind,
    ParamStore, Tensor,
};

use crate::data::DatasetMeta;
use crate::error::{HarError, Result};
use crate::signal::SegmentImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelVariant {
    Attention,
    NoAttention,
    Early,
    Late,
}

impl ModelVariant {
    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Attention => "attention",
            ModelVariant::NoAttention => "no-attention",
            ModelVariant::Early => "early",
            ModelVariant::Late => "late",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorBlockConfig {
    /// `(rows, cols)` of each branch kernel; rows span channels.
    pub kernel_sizes: Vec<(usize, usize)>,
    pub filters_per_kernel: usize,
    /// Adds 7x7 and 9x9 branches.
    pub use_larger_kernels: bool,
}

impl Default for SensorBlockConfig {
    fn default() -> Self {
        Self {
            kernel_sizes: vec![(1, 3), (3, 3), (5, 5)],
            filters_per_kernel: 8,
            use_larger_kernels: false,
        }
    }
}

impl SensorBlockConfig {
    pub fn kernels(&self) -> Vec<(usize, usize)> {
        let mut k = self.kernel_sizes.clone();
        if self.use_larger_kernels {
            k.extend([(7, 7), (9, 9)]);
        }
        k
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_sizes.is_empty() {
            return Err(HarError::Config("sensor block needs at least one kernel".into()));
        }
        if self.filters_per_kernel == 0 || self.kernel_sizes.iter().any(|&(p, q)| p == 0 || q == 0) {
            return Err(HarError::Config(
                "kernel sizes and filter counts must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub block: SensorBlockConfig,
    pub share_sensor_weights: bool,
    pub hidden_units: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            block: SensorBlockConfig::default(),
            share_sensor_weights: true,
            hidden_units: 128,
            seed: 0,
        }
    }
}

/// Everything needed to rebuild a model's parameter layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub variant: ModelVariant,
    pub num_sensors: usize,
    pub num_channels: usize,
    pub image_width: usize,
    pub num_classes: usize,
    pub model: ModelConfig,
}

#[derive(Debug, Clone)]
struct Branch {
    kernel: ParamId,
    bias: ParamId,
    bn: BatchNormParams,
    pad: Padding,
}

/// Multi-kernel conv block: parallel branches, channel concat, 2x2 max pool.
#[derive(Debug, Clone)]
struct ConvBlock {
    branches: Vec<Branch>,
    filters: usize,
}

fn pool_window(h: usize, w: usize) -> (usize, usize) {
    (h.min(2), w.min(2))
}

impl ConvBlock {
    fn register(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        in_channels: usize,
        cfg: &SensorBlockConfig,
    ) -> Self {
        let f = cfg.filters_per_kernel;
        let branches = cfg
            .kernels()
            .into_iter()
            .enumerate()
            .map(|(i, (p, q))| {
                let name = format!("{prefix}.b{i}");
                Branch {
                    kernel: store.add(
                        format!("{name}.kernel"),
                        ParamKind::Weight,
                        kaiming_uniform(rng, &[f, in_channels, p, q], in_channels * p * q),
                    ),
                    bias: store.add(format!("{name}.bias"), ParamKind::Bias, Tensor::zeros(&[f])),
                    bn: BatchNormParams::register(store, &format!("{name}.bn"), f),
                    pad: Padding::same(p, q),
                }
            })
            .collect();
        Self { branches, filters: f }
    }

    fn out_channels(&self) -> usize {
        self.branches.len() * self.filters
    }

    fn output_len(&self, h: usize, w: usize) -> usize {
        let (ph, pw) = pool_window(h, w);
        self.out_channels() * (h / ph) * (w / pw)
    }

    /// Returns the concatenated pre-pool maps `[N, F, H, W]` and the pooled,
    /// flattened features `[N, L]`.
    fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: NodeId,
        mode: Mode,
    ) -> Result<(NodeId, NodeId)> {
        let mut outs = Vec::with_capacity(self.branches.len());
        for b in &self.branches {
            let k = g.param(store, b.kernel);
            let bias = g.param(store, b.bias);
            let y = g.conv2d(x, k, bias, b.pad)?;
            let y = g.batch_norm(store, y, &b.bn, mode)?;
            outs.push(g.relu(y));
        }
        let maps = g.concat_channels(&outs)?;
        let s = g.value(maps).shape().to_vec();
        let (ph, pw) = pool_window(s[2], s[3]);
        let pooled = g.max_pool2d(maps, ph, pw)?;
        let n = s[0];
        let len = g.value(pooled).len() / n;
        let flat = g.reshape(pooled, &[n, len])?;
        Ok((maps, flat))
    }
}

#[derive(Debug, Clone)]
struct Classifier {
    hidden_w: ParamId,
    hidden_b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
}

impl Classifier {
    fn register(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        inputs: usize,
        hidden: usize,
        classes: usize,
    ) -> Self {
        Self {
            hidden_w: store.add(
                format!("{prefix}.hidden.weight"),
                ParamKind::Weight,
                kaiming_uniform(rng, &[hidden, inputs], inputs),
            ),
            hidden_b: store.add(
                format!("{prefix}.hidden.bias"),
                ParamKind::Bias,
                Tensor::zeros(&[hidden]),
            ),
            out_w: store.add(
                format!("{prefix}.out.weight"),
                ParamKind::Weight,
                kaiming_uniform(rng, &[classes, hidden], hidden),
            ),
            out_b: store.add(
                format!("{prefix}.out.bias"),
                ParamKind::Bias,
                Tensor::zeros(&[classes]),
            ),
        }
    }

    /// Pre-softmax class scores.
    fn logits(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let (w, b) = (g.param(store, self.hidden_w), g.param(store, self.hidden_b));
        let h = g.dense(x, w, b, Activation::Relu)?;
        let (w, b) = (g.param(store, self.out_w), g.param(store, self.out_b));
        Ok(g.dense(h, w, b, Activation::None)?)
    }
}

/// Sensor attention weights: `w [L]`, `W [S, S]`, `b [S]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionParams {
    pub w: ParamId,
    pub w_mix: ParamId,
    pub b: ParamId,
}

impl AttentionParams {
    pub fn register(store: &mut ParamStore, rng: &mut ChaCha8Rng, sensors: usize, len: usize) -> Self {
        Self {
            w: store.add(
                "attention.w",
                ParamKind::Weight,
                kaiming_uniform(rng, &[len], len),
            ),
            // Zero so attention starts uniform with tanh in its linear range;
            // a random start saturates tanh and freezes the attention.
            w_mix: store.add(
                "attention.W",
                ParamKind::Weight,
                Tensor::zeros(&[sensors, sensors]),
            ),
            b: store.add("attention.b", ParamKind::Bias, Tensor::zeros(&[sensors])),
        }
    }
}

/// `softmax(tanh(W (F w) + b))` for sensor features `F [N, S, L]`; returns
/// `[N, S]`.
pub fn attention_scores(
    g: &mut Graph,
    store: &ParamStore,
    features: NodeId,
    p: &AttentionParams,
) -> Result<NodeId> {
    let w = g.param(store, p.w);
    let a = g.row_dot(features, w)?;
    let (wm, b) = (g.param(store, p.w_mix), g.param(store, p.b));
    let a_hat = g.dense(a, wm, b, Activation::Tanh)?;
    Ok(g.softmax(a_hat))
}

/// Row `s` of every sample's `F` scaled by its attention weight.
pub fn apply_attention(g: &mut Graph, features: NodeId, scores: NodeId) -> Result<NodeId> {
    Ok(g.scale_rows(features, scores)?)
}

#[derive(Debug, Clone)]
enum SensorBlocks {
    Shared(ConvBlock),
    PerSensor(Vec<ConvBlock>),
}

#[derive(Debug, Clone)]
enum Layout {
    Fused {
        blocks: SensorBlocks,
        attention: Option<AttentionParams>,
        inter: Option<ConvBlock>,
        classifier: Classifier,
    },
    Early {
        block: ConvBlock,
        classifier: Classifier,
    },
    Late {
        nets: Vec<(ConvBlock, Classifier)>,
    },
}

/// Where the per-sensor feature maps of a forward pass live.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SensorMaps {
    /// One node `[N*S, F, C, K]`, sample-major then sensor.
    Batched { node: NodeId, sensors: usize },
    /// One node `[N, F, C, K]` per sensor.
    PerSensor(Vec<NodeId>),
    /// A single `[N, F, C, K]` node covering all sensors at once.
    Joint(NodeId),
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `[N, M]` class probabilities.
    pub probs: NodeId,
    /// Pre-softmax scores `[N, M]`; one node per sensor network for `late`.
    pub logits: Vec<NodeId>,
    /// `[N, S]` sensor attention (uniform for `no-attention`).
    pub attention: Option<NodeId>,
    /// `[N, S, L]` sensor vectors before attention.
    pub sensor_features: Option<NodeId>,
    pub sensor_maps: SensorMaps,
}

#[derive(Debug, Clone)]
pub struct HarModel {
    arch: ArchConfig,
    params: ParamStore,
    layout: Layout,
}

/// Class probabilities (and attention when available) for a set of images.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Vec<Vec<f64>>,
    pub attention: Option<Vec<Vec<f64>>>,
}

impl Prediction {
    pub fn labels(&self) -> Vec<usize> {
        self.probs
            .iter()
            .map(|p| {
                p.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
                    .0
            })
            .collect()
    }
}

const PREDICT_CHUNK: usize = 256;

impl HarModel {
    pub fn build(arch: ArchConfig) -> Result<Self> {
        arch.model.block.validate()?;
        let (s, c, k, m) = (
            arch.num_sensors,
            arch.num_channels,
            arch.image_width,
            arch.num_classes,
        );
        if s == 0 || c == 0 || k == 0 || m == 0 || arch.model.hidden_units == 0 {
            return Err(HarError::Config(format!(
                "model dimensions must be positive: S={s} C={c} K={k} M={m} hidden={}",
                arch.model.hidden_units
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(arch.model.seed);
        let mut store = ParamStore::new();
        let cfg = &arch.model;
        let hidden = cfg.hidden_units;
        let layout = match arch.variant {
            ModelVariant::Attention | ModelVariant::NoAttention => {
                let blocks = if cfg.share_sensor_weights {
                    SensorBlocks::Shared(ConvBlock::register(
                        &mut store,
                        &mut rng,
                        "sensor_block",
                        1,
                        &cfg.block,
                    ))
                } else {
                    SensorBlocks::PerSensor(
                        (0..s)
                            .map(|i| {
                                ConvBlock::register(
                                    &mut store,
                                    &mut rng,
                                    &format!("sensor_block{i}"),
                                    1,
                                    &cfg.block,
                                )
                            })
                            .collect(),
                    )
                };
                let first = match &blocks {
                    SensorBlocks::Shared(b) => b,
                    SensorBlocks::PerSensor(v) => &v[0],
                };
                let l = first.output_len(c, k);
                let attention = (arch.variant == ModelVariant::Attention)
                    .then(|| AttentionParams::register(&mut store, &mut rng, s, l));
                let (inter, fused_len) = if s >= 2 {
                    let b = ConvBlock::register(&mut store, &mut rng, "inter_block", 1, &cfg.block);
                    let len = b.output_len(s, l);
                    (Some(b), len)
                } else {
                    (None, l)
                };
                let classifier =
                    Classifier::register(&mut store, &mut rng, "classifier", fused_len, hidden, m);
                Layout::Fused {
                    blocks,
                    attention,
                    inter,
                    classifier,
                }
            }
            ModelVariant::Early => {
                let block = ConvBlock::register(&mut store, &mut rng, "early_block", s, &cfg.block);
                let len = block.output_len(c, k);
                let classifier =
                    Classifier::register(&mut store, &mut rng, "classifier", len, hidden, m);
                Layout::Early { block, classifier }
            }
            ModelVariant::Late => Layout::Late {
                nets: (0..s)
                    .map(|i| {
                        let block = ConvBlock::register(
                            &mut store,
                            &mut rng,
                            &format!("sensor{i}.block"),
                            1,
                            &cfg.block,
                        );
                        let len = block.output_len(c, k);
                        let classifier = Classifier::register(
                            &mut store,
                            &mut rng,
                            &format!("sensor{i}.classifier"),
                            len,
                            hidden,
                            m,
                        );
                        (block, classifier)
                    })
                    .collect(),
            },
        };
        Ok(Self {
            arch,
            params: store,
            layout,
        })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn variant(&self) -> ModelVariant {
        self.arch.variant
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Length `L` of one sensor vector (fused variants only).
    pub fn sensor_vector_len(&self) -> Option<usize> {
        match &self.layout {
            Layout::Fused { blocks, .. } => {
                let b = match blocks {
                    SensorBlocks::Shared(b) => b,
                    SensorBlocks::PerSensor(v) => &v[0],
                };
                Some(b.output_len(self.arch.num_channels, self.arch.image_width))
            }
            _ => None,
        }
    }

    /// Length `L'` of the fused features fed to the classifier (fused variants only).
    pub fn fused_len(&self) -> Option<usize> {
        let l = self.sensor_vector_len()?;
        match &self.layout {
            Layout::Fused { inter: Some(b), .. } => Some(b.output_len(self.arch.num_sensors, l)),
            _ => Some(l),
        }
    }

    pub fn attention_params(&self) -> Option<AttentionParams> {
        match &self.layout {
            Layout::Fused { attention, .. } => *attention,
            _ => None,
        }
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize> {
        let a = &self.arch;
        let want = [a.num_sensors, a.num_channels, a.image_width];
        let s = batch.shape();
        if s.len() != 4 || s[1..] != want {
            return Err(HarError::Model(format!(
                "input batch {s:?} does not match [N, {}, {}, {}]",
                want[0], want[1], want[2]
            )));
        }
        Ok(s[0])
    }

    /// Records the full forward pass of `batch [N, S, C, K]` on `g`.
    pub fn forward(&self, g: &mut Graph, batch: &Tensor, mode: Mode) -> Result<ForwardOutput> {
        self.forward_with(&self.params, g, batch, mode)
    }

    /// Forward pass reading parameter values from `store`, which must share
    /// this model's layout (a perturbed clone of [`HarModel::params`], say).
    pub fn forward_with(
        &self,
        store: &ParamStore,
        g: &mut Graph,
        batch: &Tensor,
        mode: Mode,
    ) -> Result<ForwardOutput> {
        if store.len() != self.params.len() {
            return Err(HarError::Model(format!(
                "parameter store has {} entries, model expects {}",
                store.len(),
                self.params.len()
            )));
        }
        let n = self.check_batch(batch)?;
        let (s, c, k) = (
            self.arch.num_sensors,
            self.arch.num_channels,
            self.arch.image_width,
        );
        match &self.layout {
            Layout::Fused {
                blocks,
                attention,
                inter,
                classifier,
            } => {
                let (features, sensor_maps) = match blocks {
                    SensorBlocks::Shared(b) => {
                        let x = g.input(batch.clone().reshape(&[n * s, 1, c, k])?);
                        let (maps, flat) = b.forward(g, store, x, mode)?;
                        let l = g.value(flat).shape()[1];
                        let f = g.reshape(flat, &[n, s, l])?;
                        (f, SensorMaps::Batched { node: maps, sensors: s })
                    }
                    SensorBlocks::PerSensor(bs) => {
                        let mut flats = Vec::with_capacity(s);
                        let mut maps = Vec::with_capacity(s);
                        for (i, b) in bs.iter().enumerate() {
                            let x = g.input(sensor_slice(batch, i));
                            let (m, f) = b.forward(g, store, x, mode)?;
                            maps.push(m);
                            flats.push(f);
                        }
                        (g.stack(&flats)?, SensorMaps::PerSensor(maps))
                    }
                };
                let scores = match attention {
                    Some(p) => attention_scores(g, store, features, p)?,
                    None => g.input(Tensor::full(&[n, s], 1.0 / s as f64)),
                };
                let attended = apply_attention(g, features, scores)?;
                let fused = match inter {
                    Some(b) => {
                        let l = g.value(attended).shape()[2];
                        let img = g.reshape(attended, &[n, 1, s, l])?;
                        b.forward(g, store, img, mode)?.1
                    }
                    None => {
                        let l = g.value(attended).len() / n;
                        g.reshape(attended, &[n, l])?
                    }
                };
                let logits = classifier.logits(g, store, fused)?;
                let probs = g.softmax(logits);
                Ok(ForwardOutput {
                    probs,
                    logits: vec![logits],
                    attention: Some(scores),
                    sensor_features: Some(features),
                    sensor_maps,
                })
            }
            Layout::Early { block, classifier } => {
                let x = g.input(batch.clone());
                let (maps, flat) = block.forward(g, store, x, mode)?;
                let logits = classifier.logits(g, store, flat)?;
                let probs = g.softmax(logits);
                Ok(ForwardOutput {
                    probs,
                    logits: vec![logits],
                    attention: None,
                    sensor_features: None,
                    sensor_maps: SensorMaps::Joint(maps),
                })
            }
            Layout::Late { nets } => {
                let mut probs = Vec::with_capacity(s);
                let mut logits = Vec::with_capacity(s);
                let mut maps = Vec::with_capacity(s);
                for (i, (block, classifier)) in nets.iter().enumerate() {
                    let x = g.input(sensor_slice(batch, i));
                    let (m, flat) = block.forward(g, store, x, mode)?;
                    let lg = classifier.logits(g, store, flat)?;
                    probs.push(g.softmax(lg));
                    logits.push(lg);
                    maps.push(m);
                }
                let probs = g.mean(&probs)?;
                Ok(ForwardOutput {
                    probs,
                    logits,
                    attention: None,
                    sensor_features: None,
                    sensor_maps: SensorMaps::PerSensor(maps),
                })
            }
        }
    }

    /// Inference-mode probabilities for every image, in chunks.
    pub fn predict(&self, images: &[SegmentImage]) -> Result<Prediction> {
        let mut probs = Vec::with_capacity(images.len());
        let mut attention = Vec::new();
        let mut has_attention = false;
        for chunk in images.chunks(PREDICT_CHUNK) {
            let refs: Vec<&SegmentImage> = chunk.iter().collect();
            let batch = images_to_tensor(&refs)?;
            let mut g = Graph::new();
            let out = self.forward(&mut g, &batch, Mode::Infer)?;
            let m = self.arch.num_classes;
            probs.extend(g.value(out.probs).data().chunks(m).map(<[f64]>::to_vec));
            if let Some(a) = out.attention {
                has_attention = true;
                let s = self.arch.num_sensors;
                attention.extend(g.value(a).data().chunks(s).map(<[f64]>::to_vec));
            }
        }
        Ok(Prediction {
            probs,
            attention: has_attention.then_some(attention),
        })
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let header = serde_json::json!({
            "model": "attnhar",
            "arch": serde_json::to_value(&self.arch)?,
        });
        Ok(Checkpoint::from_store(header, &self.params))
    }

    /// Rebuilds a model from a checkpoint, optionally checking that it fits
    /// a dataset's sensor, channel and class counts.
    pub fn from_checkpoint(ck: &Checkpoint, meta: Option<&DatasetMeta>) -> Result<Self> {
        let arch: ArchConfig = serde_json::from_value(
            ck.header
                .get("arch")
                .cloned()
                .ok_or_else(|| HarError::Model("checkpoint header lacks \"arch\"".into()))?,
        )?;
        if let Some(meta) = meta {
            let got = (arch.num_sensors, arch.num_channels, arch.num_classes);
            let want = (meta.num_sensors, meta.num_channels, meta.num_classes);
            if got != want {
                return Err(HarError::Model(format!(
                    "checkpoint (S, C, M) = {got:?} does not match dataset {want:?}"
                )));
            }
        }
        let mut model = Self::build(arch)?;
        ck.apply_to(&mut model.params)?;
        Ok(model)
    }
}

/// `[N, 1, C, K]` copy of sensor `s` from `[N, S, C, K]`.
fn sensor_slice(batch: &Tensor, s: usize) -> Tensor {
    let sh = batch.shape();
    let (n, ns, inner) = (sh[0], sh[1], sh[2] * sh[3]);
    let mut out = Vec::with_capacity(n * inner);
    for i in 0..n {
        out.extend_from_slice(&batch.data()[(i * ns + s) * inner..][..inner]);
    }
    Tensor::new(vec![n, 1, sh[2], sh[3]], out).expect("slice shape")
}

/// Packs images into a `[N, S, C, K]` tensor.
pub fn images_to_tensor(images: &[&SegmentImage]) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| HarError::Model("empty batch".into()))?;
    let s = first.num_sensors();
    let (c, k) = first.shape();
    let mut data = Vec::with_capacity(images.len() * s * c * k);
    for img in images {
        if img.num_sensors() != s || img.images.iter().any(|m| (m.rows(), m.cols()) != (c, k)) {
            return Err(HarError::Model(format!(
                "inconsistent image shapes in batch, expected {s} x {c} x {k}"
            )));
        }
        for m in &img.images {
            data.extend_from_slice(m.data());
        }
    }
    Ok(Tensor::new(vec![images.len(), s, c, k], data)?)
}

/// Builders mirroring the four compared architectures. `image_shape` is the
/// `(C, K)` of one sensor image.
pub fn build_model(
    variant: ModelVariant,
    meta: &DatasetMeta,
    image_shape: (usize, usize),
    cfg: &ModelConfig,
) -> Result<HarModel> {
    if image_shape.0 != meta.num_channels {
        return Err(HarError::Config(format!(
            "image has {} rows but the dataset has {} channels",
            image_shape.0, meta.num_channels
        )));
    }
    HarModel::build(ArchConfig {
        variant,
        num_sensors: meta.num_sensors,
        num_channels: meta.num_channels,
        image_width: image_shape.1,
        num_classes: meta.num_classes,
        model: cfg.clone(),
    })
}

pub fn build_attention_model(
    meta: &DatasetMeta,
    image_shape: (usize, usize),
    cfg: &ModelConfig,
) -> Result<HarModel> {
    build_model(ModelVariant::Attention, meta, image_shape, cfg)
}

pub fn build_no_attention_model(
    meta: &DatasetMeta,
    image_shape: (usize, usize),
    cfg: &ModelConfig,
) -> Result<HarModel> {
    build_model(ModelVariant::NoAttention, meta, image_shape, cfg)
}

pub fn build_early_fusion_model(
    meta: &DatasetMeta,
    image_shape: (usize, usize),
    cfg: &ModelConfig,
) -> Result<HarModel> {
    build_model(ModelVariant::Early, meta, image_shape, cfg)
}

pub fn build_late_fusion_model(
    meta: &DatasetMeta,
    image_shape: (usize, usize),
    cfg: &ModelConfig,
) -> Result<HarModel> {
    build_model(ModelVariant::Late, meta, image_shape, cfg)
}
