//! Residual convolutional patch classifier.
//!
//! Layout: 3×3 stem convolution → rectifier, then one stage per entry of
//! `widths`. Every stage after the first opens with 2×2 average pooling and
//! a 3×3 transition convolution → rectifier. Each stage holds
//! `blocks_per_stage` residual blocks computing
//! `relu(conv2(relu(conv1(x))) + x)`. The head is global average pooling →
//! one fully connected layer → softmax over the four classes.
//!
//! Weights are drawn from a zero-mean normal with standard deviation
//! `sqrt(2 / fan_in)`; biases start at zero.

mod layers;
mod network;
mod optim;
mod params_io;
mod predict;
mod train;

use serde::{Deserialize, Serialize};

use crate::dataset::{derive_seed, XorShift64Star, NUM_CLASSES};
use crate::error::{Error, Result};

pub use layers::{softmax, FeatureMap};
pub use network::{forward, forward_logits, loss_and_gradients, prepare_input, Network};
pub use optim::{sgd_nesterov_step, sgd_step, Velocity};
pub use params_io::{load_params, read_params, save_params, write_params};
pub use predict::{
    argmax, load_predictions, predict, read_predictions, save_predictions, write_predictions,
    PredictionRecord, PREDICTION_HEADER,
};
pub use train::{accuracy_of, cross_entropy, train, EpochMetrics, Sample, TrainOutcome};

/// Lower bound applied to the true-class probability inside the loss.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Side length patches are bilinearly resampled to before the network.
    pub input_size: usize,
    pub widths: Vec<usize>,
    pub blocks_per_stage: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub nesterov: bool,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_size: 64,
            widths: vec![8, 16],
            blocks_per_stage: 1,
            learning_rate: 1e-4,
            momentum: 0.9,
            nesterov: true,
            batch_size: 32,
            max_epochs: 100,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.input_size == 0 {
            return bad("input size must be at least 1".into());
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return bad(format!("invalid stage widths {:?}", self.widths));
        }
        let min_side = 1usize << (self.widths.len() - 1);
        if self.input_size < min_side {
            return bad(format!(
                "input size {} too small for {} pooled stages",
                self.input_size,
                self.widths.len()
            ));
        }
        Ok(())
    }
}

/// Named dense tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            name: name.into(),
            shape,
            data: vec![0.0; n],
        }
    }
}

/// Ordered network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub tensors: Vec<Tensor>,
}

impl Params {
    /// Zero tensors with the names and shapes implied by `config`.
    pub fn zeros(config: &ModelConfig) -> Self {
        let mut tensors = Vec::new();
        let mut conv = |name: String, out: usize, inp: usize| {
            tensors.push(Tensor::zeros(format!("{name}.weight"), vec![out, inp, 3, 3]));
            tensors.push(Tensor::zeros(format!("{name}.bias"), vec![out]));
        };
        conv("stem".into(), config.widths[0], 3);
        for (s, &w) in config.widths.iter().enumerate() {
            if s > 0 {
                conv(format!("stage{s}.transition"), w, config.widths[s - 1]);
            }
            for b in 0..config.blocks_per_stage {
                conv(format!("stage{s}.block{b}.conv1"), w, w);
                conv(format!("stage{s}.block{b}.conv2"), w, w);
            }
        }
        let last = *config.widths.last().expect("validated widths");
        tensors.push(Tensor::zeros("fc.weight", vec![NUM_CLASSES, last]));
        tensors.push(Tensor::zeros("fc.bias", vec![NUM_CLASSES]));
        Self { tensors }
    }

    /// He-normal initialization driven by `derive_seed(config.seed, 0)`.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = Self::zeros(config);
        let mut rng = XorShift64Star::new(derive_seed(config.seed, 0));
        for t in &mut params.tensors {
            if t.name.ends_with(".bias") {
                continue;
            }
            let fan_in: usize = t.shape[1..].iter().product();
            let std = (2.0 / fan_in as f64).sqrt();
            for v in &mut t.data {
                *v = std * rng.next_gaussian();
            }
        }
        Ok(params)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.name.clone(), t.shape.clone()))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Fails unless names and shapes equal those of `other`.
    pub fn check_layout(&self, other: &Params) -> Result<()> {
        if self.tensors.len() != other.tensors.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} tensors vs {}",
                self.tensors.len(),
                other.tensors.len()
            )));
        }
        for (a, b) in self.tensors.iter().zip(&other.tensors) {
            if a.name != b.name || a.shape != b.shape || a.data.len() != b.data.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} {:?} vs {} {:?}",
                    a.name, a.shape, b.name, b.shape
                )));
            }
        }
        Ok(())
    }

    /// Iterates over every scalar in tensor order.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.tensors.iter().flat_map(|t| t.data.iter().copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.tensors.iter_mut().flat_map(|t| t.data.iter_mut())
    }

    /// `self += other * scale`, element-wise.
    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += b * scale;
        }
    }
}
