//! Attention-based fusion of body-worn IMU sensors for activity recognition.
//!
//! Pipeline: [`data`] loads recordings, [`signal`] windows them and encodes
//! per-sensor images, [`model`] defines the network and its baselines,
//! [`train`] fits and scores models (including leave-one-subject-out), and
//! [`viz`] renders attention and activation maps.

pub mod data;
pub mod error;
pub mod matrix;
pub mod model;
pub mod signal;
pub mod train;
pub mod viz;

pub use attnhar_nn as nn;

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use data::{Dataset, DatasetMeta, Recording, SynthSpec};
pub use error::{HarError, Result};
pub use matrix::Matrix;
pub use model::{ArchConfig, HarModel, ModelConfig, ModelVariant, SensorBlockConfig};
pub use signal::{ImageKind, Representation, SegmentImage, WindowingConfig};
pub use train::{evaluate, loso_cv, train, EvalReport, LosoReport, TrainConfig};
