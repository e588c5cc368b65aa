//! Direct regression from a modality embedding to pixels, with no latent
//! generative structure.
//!
//! `dense(d_y, 16*7*14) -> reshape(16, 7, 14) -> up -> conv 8@3x3 -> up ->
//! conv 8@3x3 -> conv c@3x3 -> sigmoid`, ReLU after every hidden layer.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cmem;
use crate::datasets::{ImageGeometry, ImageSet};
use crate::error::{Error, IoContext, Result};
use crate::mapping::AlignedRows;
use crate::nn::{bce, derive_seed, seeded_rng, LayerSpec, ModelParams, Network};
use crate::tensor::Tensor;
use crate::training::{run_minibatches, StepOutput, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct DirectRegressor {
    input_dim: usize,
    geometry: ImageGeometry,
    seed: u64,
    network: Network,
    params: ModelParams,
}

impl DirectRegressor {
    pub fn build(input_dim: usize, geometry: ImageGeometry, seed: u64) -> Result<Self> {
        if !geometry.height.is_multiple_of(4) || !geometry.width.is_multiple_of(4) || input_dim == 0
        {
            return Err(Error::InvalidInput(format!(
                "direct regressor needs spatial dims divisible by 4, got {:?}",
                geometry.shape()
            )));
        }
        let (h, w) = (geometry.height / 4, geometry.width / 4);
        let network = Network::new(
            "direct",
            vec![
                LayerSpec::dense(input_dim, 16 * h * w),
                LayerSpec::Relu,
                LayerSpec::reshape(&[16, h, w]),
                LayerSpec::Upsample2x2,
                LayerSpec::conv(16, 8, 3),
                LayerSpec::Relu,
                LayerSpec::Upsample2x2,
                LayerSpec::conv(8, 8, 3),
                LayerSpec::Relu,
                LayerSpec::conv(8, geometry.channels, 3),
                LayerSpec::Sigmoid,
            ],
        )?;
        let mut params = ModelParams::new();
        network.init(
            &mut params,
            &mut seeded_rng(derive_seed(seed, "direct-init")),
        );
        Ok(Self {
            input_dim,
            geometry,
            seed,
            network,
            params,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn geometry(&self) -> ImageGeometry {
        self.geometry
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    fn check_input(&self, y: &Tensor) -> Result<()> {
        if y.shape().len() != 2 || y.sample_len() != self.input_dim {
            return Err(Error::ShapeMismatch {
                left: y.shape().to_vec(),
                right: vec![y.shape()[0], self.input_dim],
                context: "direct regressor input width",
            });
        }
        Ok(())
    }

    /// Mean per-pixel BCE and its gradients.
    pub fn loss_with(
        &self,
        params: &ModelParams,
        y: &Tensor,
        images: &Tensor,
    ) -> Result<(f64, ModelParams)> {
        self.check_input(y)?;
        let (pred, tape) = self.network.forward(params, y)?;
        let loss = bce(&pred, images)?;
        let mut grads = params.zeros_like();
        self.network
            .backward(params, &tape, &loss.grad, &mut grads)?;
        Ok((loss.value, grads))
    }

    pub fn sidecar(&self, loss_history: Vec<f64>, config_hash: Option<String>) -> DirectSidecar {
        DirectSidecar {
            input_dim: self.input_dim,
            geometry: self.geometry,
            seed: self.seed,
            network: self.network.clone(),
            loss_history,
            config_hash,
        }
    }

    pub fn save(&self, stem: &Path, sidecar: &DirectSidecar) -> Result<()> {
        cmem::save_params(&stem.with_extension("cmem"), &self.params)?;
        let path = stem.with_extension("json");
        fs::write(&path, serde_json::to_string_pretty(sidecar)?).at(&path)
    }

    pub fn load(stem: &Path) -> Result<(Self, DirectSidecar)> {
        let path = stem.with_extension("json");
        if !path.is_file() {
            return Err(Error::NotFound(format!(
                "direct regressor {}",
                path.display()
            )));
        }
        let sidecar: DirectSidecar = serde_json::from_str(&fs::read_to_string(&path).at(&path)?)?;
        let mut model = Self::build(sidecar.input_dim, sidecar.geometry, sidecar.seed)?;
        let params = cmem::load_params(&stem.with_extension("cmem"))?;
        if params.len() != model.params.len() {
            return Err(Error::Format(
                "weight file does not match the architecture".into(),
            ));
        }
        for (name, t) in model.params.iter() {
            params.get(name)?.expect_same_shape(t, "stored parameter")?;
        }
        model.params = params;
        Ok((model, sidecar))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectSidecar {
    pub input_dim: usize,
    pub geometry: ImageGeometry,
    pub seed: u64,
    pub network: Network,
    pub loss_history: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// Trains on `(targets[i], images[i])` pairs with BCE; returns per-epoch
/// mean loss.
pub fn train_direct(
    model: &mut DirectRegressor,
    targets: &AlignedRows,
    images: &ImageSet,
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    if targets.len() != images.len() {
        return Err(Error::InvalidInput(format!(
            "{} embeddings vs {} images",
            targets.len(),
            images.len()
        )));
    }
    if images.geometry != model.geometry {
        return Err(Error::InvalidInput(format!(
            "images are {:?}, regressor emits {:?}",
            images.geometry.shape(),
            model.geometry.shape()
        )));
    }
    let mut params = std::mem::take(&mut model.params);
    let frozen: &DirectRegressor = model;
    let history = run_minibatches(
        "train direct",
        &mut params,
        images.len(),
        config,
        |p, batch, _| {
            let (loss, grads) =
                frozen.loss_with(p, &targets.gather(batch), &images.tensor(batch))?;
            Ok(StepOutput {
                terms: vec![loss],
                grads,
            })
        },
    );
    model.params = params;
    Ok(history?.into_iter().map(|h| h[0]).collect())
}

/// One forward pass: `[n, d_y]` embeddings to `[n, c, h, w]` images.
pub fn predict_direct(model: &DirectRegressor, y: &Tensor) -> Result<Tensor> {
    model.check_input(y)?;
    model.network.predict(&model.params, y)
}
