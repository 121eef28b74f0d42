//! The Y-Net segmentation network.

mod config;
pub(crate) mod model;
pub mod train;

use std::path::Path;

pub use config::YNetConfig;
pub use model::{build_ynet, image_to_tensor, ynet_forward, ForwardCache, FusionShapes, YNetModel};
pub use train::{train_ynet, SegSample, TrainHyper, TrainOutcome, TrainRecord};

use crate::checkpoint::{self, CheckpointError, Container, YNET_MAGIC};
use crate::nn::{gradcheck::Differentiable, NnError, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum YNetError {
    #[error("invalid Y-Net config: {0}")]
    Config(String),
    #[error("input must be 1x{expected}x{expected}, got {got:?} (channels, height, width)")]
    InputSize {
        expected: usize,
        got: (usize, usize, usize),
    },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

pub fn save_checkpoint(model: &YNetModel<f32>, path: &Path) -> Result<(), YNetError> {
    checkpoint::write_file(&to_container(model), path)?;
    Ok(())
}

pub fn to_container(model: &YNetModel<f32>) -> Container {
    Container {
        magic: YNET_MAGIC,
        config_json: serde_json::to_string(model.config()).expect("config serialises"),
        params: model.params().clone(),
    }
}

pub fn from_container(c: Container) -> Result<YNetModel<f32>, YNetError> {
    let config: YNetConfig = serde_json::from_str(&c.config_json)
        .map_err(|e| CheckpointError::Malformed(format!("config JSON: {e}")))?;
    let mut model = YNetModel::build(&config)?;
    model
        .set_params(c.params)
        .map_err(|e| CheckpointError::ShapeAudit(e.to_string()))?;
    Ok(model)
}

/// Loads a checkpoint, rebuilding the architecture from the embedded config
/// and auditing every parameter shape against it.
pub fn load_checkpoint(path: &Path) -> Result<YNetModel<f32>, YNetError> {
    from_container(checkpoint::read_file(path, YNET_MAGIC)?)
}

/// Whole-network probe for the gradient checker: inputs are the image
/// batch followed by every parameter, output is the probability map.
pub struct YNetProbe {
    pub model: YNetModel<f64>,
}

impl YNetProbe {
    fn with_inputs(&self, inputs: &[Tensor<f64>]) -> Result<YNetModel<f64>, NnError> {
        let mut m = self.model.clone();
        for (i, t) in inputs[1..].iter().enumerate() {
            *m.params_mut().tensor_mut(i) = t.clone();
        }
        Ok(m)
    }

    pub fn inputs(&self, image: Tensor<f64>) -> Vec<Tensor<f64>> {
        let mut v = vec![image];
        v.extend(self.model.params().iter().map(|(_, t)| t.clone()));
        v
    }
}

impl Differentiable for YNetProbe {
    fn name(&self) -> &str {
        "ynet"
    }

    fn forward(&self, inputs: &[Tensor<f64>]) -> Result<Tensor<f64>, NnError> {
        let m = self.with_inputs(inputs)?;
        m.forward(&inputs[0])
            .map_err(|e| NnError::Shape(e.to_string()))
    }

    fn backward(
        &self,
        inputs: &[Tensor<f64>],
        grad_out: &Tensor<f64>,
    ) -> Result<Vec<Tensor<f64>>, NnError> {
        let m = self.with_inputs(inputs)?;
        let cache = m
            .forward_cached(&inputs[0])
            .map_err(|e| NnError::Shape(e.to_string()))?;
        let grad_logits = cache.prob.zip_map(grad_out, |p, g| g * p * (1.0 - p))?;
        let (grads, g_in) = m
            .backward(&cache, &grad_logits)
            .map_err(|e| NnError::Shape(e.to_string()))?;
        let mut out = vec![g_in];
        out.extend(grads.iter().map(|(_, t)| t.clone()));
        Ok(out)
    }

    fn regime(&self, inputs: &[Tensor<f64>]) -> Result<Option<u64>, NnError> {
        let m = self.with_inputs(inputs)?;
        let cache = m
            .forward_cached(&inputs[0])
            .map_err(|e| NnError::Shape(e.to_string()))?;
        Ok(Some(cache.regime()))
    }

    fn sample_inputs(&self, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<Tensor<f64>> {
        use rand::Rng;
        let s = self.model.config().input_size;
        let mut inputs = self.inputs(Tensor::from_fn(&[1, 1, s, s], |_| {
            rng.random_range(0.0..1.0)
        }));
        // zero biases put dead units exactly on the ReLU kink
        for (slot, (name, _)) in self.model.params().iter().enumerate() {
            if name.ends_with(".bias") {
                inputs[slot + 1]
                    .data_mut()
                    .iter_mut()
                    .for_each(|b| *b = rng.random_range(0.02..0.1));
            }
        }
        inputs
    }
}
