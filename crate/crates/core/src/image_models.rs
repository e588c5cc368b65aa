//! The four image auto-encoders that define the 100-dimensional image
//! embedding space and its generator.
//!
//! | kind     | encoder                                                     | decoder |
//! |----------|-------------------------------------------------------------|---------|
//! | conv-vae | conv 8@5x5, pool, dense 256, {mu, log_var} 100              | dense 3136, conv 8@5x5, up, conv c@5x5, sigmoid |
//! | mlp-vae  | dense 256, {mu, log_var} 100                                | dense 256, dense 1568c, sigmoid |
//! | conv-ae  | conv 16@3x3, pool, conv 8@3x3, pool, dense 100             | dense 784, conv 8@3x3, up, conv 16@3x3, up, conv c@5x5, sigmoid |
//! | mlp-ae   | dense 256, dense 100                                        | dense 256, dense 1568c, sigmoid |
//!
//! All hidden layers use ReLU. For the conv-ae the 784-wide decoder input is
//! the encoder's pooled `8 x 7 x 14` map of a 28x56 image.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cmem;
use crate::datasets::{ImageGeometry, ImageSet};
use crate::error::{Error, IoContext, Result};
use crate::nn::{
    bce, derive_seed, kl_diag_gaussian, reparameterize, reparameterize_backward, seeded_rng,
    LayerSpec, ModelParams, Network,
};
use crate::tensor::Tensor;
use crate::training::{run_minibatches, StepOutput, TrainConfig};

pub const EMBEDDING_DIM: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageModelKind {
    ConvVae,
    MlpVae,
    ConvAe,
    MlpAe,
}

impl ImageModelKind {
    pub const ALL: [ImageModelKind; 4] = [
        ImageModelKind::ConvVae,
        ImageModelKind::MlpVae,
        ImageModelKind::ConvAe,
        ImageModelKind::MlpAe,
    ];

    pub fn is_variational(self) -> bool {
        matches!(self, Self::ConvVae | Self::MlpVae)
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::ConvVae => "conv-vae",
            Self::MlpVae => "mlp-vae",
            Self::ConvAe => "conv-ae",
            Self::MlpAe => "mlp-ae",
        }
    }
}

impl fmt::Display for ImageModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ImageModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.label() == s || k.label().replace('-', "_") == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown image model `{s}`")))
    }
}

/// Layer stacks for one kind: `(encoder, decoder)`. VAE heads are added
/// separately.
fn architecture(kind: ImageModelKind, geometry: ImageGeometry) -> (Vec<LayerSpec>, Vec<LayerSpec>) {
    use LayerSpec::*;
    let c = geometry.channels;
    let pixels = geometry.len();
    let mlp_decoder = vec![
        LayerSpec::dense(EMBEDDING_DIM, 256),
        Relu,
        LayerSpec::dense(256, pixels),
        Sigmoid,
        LayerSpec::reshape(&geometry.shape()),
    ];
    match kind {
        ImageModelKind::ConvVae => (
            vec![
                LayerSpec::conv(c, 8, 5),
                Relu,
                Maxpool2x2,
                LayerSpec::dense(3136, 256),
                Relu,
            ],
            vec![
                LayerSpec::dense(EMBEDDING_DIM, 3136),
                Relu,
                LayerSpec::reshape(&[8, 14, 28]),
                LayerSpec::conv(8, 8, 5),
                Relu,
                Upsample2x2,
                LayerSpec::conv(8, c, 5),
                Sigmoid,
            ],
        ),
        ImageModelKind::MlpVae => (vec![LayerSpec::dense(pixels, 256), Relu], mlp_decoder),
        ImageModelKind::ConvAe => (
            vec![
                LayerSpec::conv(c, 16, 3),
                Relu,
                Maxpool2x2,
                LayerSpec::conv(16, 8, 3),
                Relu,
                Maxpool2x2,
                LayerSpec::dense(784, EMBEDDING_DIM),
                Relu,
            ],
            vec![
                LayerSpec::dense(EMBEDDING_DIM, 784),
                Relu,
                LayerSpec::reshape(&[8, 7, 14]),
                LayerSpec::conv(8, 8, 3),
                Relu,
                Upsample2x2,
                LayerSpec::conv(8, 16, 3),
                Relu,
                Upsample2x2,
                LayerSpec::conv(16, c, 5),
                Sigmoid,
            ],
        ),
        ImageModelKind::MlpAe => (
            vec![
                LayerSpec::dense(pixels, 256),
                Relu,
                LayerSpec::dense(256, EMBEDDING_DIM),
                Relu,
            ],
            mlp_decoder,
        ),
    }
}

/// Per-sample tensor shapes after each layer, input first.
pub type ShapeTrace = Vec<Vec<usize>>;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageAutoencoder {
    kind: ImageModelKind,
    geometry: ImageGeometry,
    seed: u64,
    encoder: Network,
    /// `(mu, log_var)` heads of the variational kinds.
    heads: Option<(Network, Network)>,
    decoder: Network,
    params: ModelParams,
}

/// Loss value and gradients of one reconstruction step.
#[derive(Debug, Clone)]
pub struct ReconstructionLoss {
    /// Per-sample summed BCE plus KL (variational kinds), batch-averaged.
    pub total: f64,
    pub bce_mean: f64,
    pub kl: f64,
    pub grads: ModelParams,
}

impl ImageAutoencoder {
    pub fn build(kind: ImageModelKind, geometry: ImageGeometry, seed: u64) -> Result<Self> {
        if geometry != ImageGeometry::GRAY && geometry != ImageGeometry::RGB {
            return Err(Error::InvalidInput(format!(
                "unsupported geometry {:?}; expected 1x28x56 or 3x28x56",
                geometry.shape()
            )));
        }
        let (enc, dec) = architecture(kind, geometry);
        let encoder = Network::new("enc", enc)?;
        let decoder = Network::new("dec", dec)?;
        let heads = if kind.is_variational() {
            Some((
                Network::new("enc_mu", vec![LayerSpec::dense(256, EMBEDDING_DIM)])?,
                Network::new("enc_log_var", vec![LayerSpec::dense(256, EMBEDDING_DIM)])?,
            ))
        } else {
            None
        };
        let mut params = ModelParams::new();
        let mut rng = seeded_rng(derive_seed(seed, "image-model-init"));
        encoder.init(&mut params, &mut rng);
        if let Some((mu, lv)) = &heads {
            mu.init(&mut params, &mut rng);
            lv.init(&mut params, &mut rng);
        }
        decoder.init(&mut params, &mut rng);
        Ok(Self {
            kind,
            geometry,
            seed,
            encoder,
            heads,
            decoder,
            params,
        })
    }

    pub fn kind(&self) -> ImageModelKind {
        self.kind
    }

    pub fn geometry(&self) -> ImageGeometry {
        self.geometry
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub fn networks(&self) -> Vec<&Network> {
        let mut nets = vec![&self.encoder];
        if let Some((mu, lv)) = &self.heads {
            nets.push(mu);
            nets.push(lv);
        }
        nets.push(&self.decoder);
        nets
    }

    /// Per-sample shapes through encoder (up to the embedding) and decoder.
    pub fn shape_trace(&self) -> Result<(ShapeTrace, ShapeTrace)> {
        let mut enc = self.encoder.trace_shapes(&self.geometry.shape())?;
        if let Some((mu, _)) = &self.heads {
            let head = mu.trace_shapes(enc.last().expect("non-empty"))?;
            enc.extend(head.into_iter().skip(1));
        }
        let dec = self.decoder.trace_shapes(&[EMBEDDING_DIM])?;
        Ok((enc, dec))
    }

    fn check_images(&self, images: &Tensor) -> Result<()> {
        if images.shape().len() != 4 || images.shape()[1..] != self.geometry.shape() {
            return Err(Error::ShapeMismatch {
                left: images.shape().to_vec(),
                right: self.geometry.batch_shape(0).to_vec(),
                context: "images vs model geometry",
            });
        }
        Ok(())
    }

    /// `[n, c, h, w]` images to `[n, 100]` embeddings (posterior mean for the
    /// variational kinds).
    pub fn encode(&self, images: &Tensor) -> Result<Tensor> {
        self.check_images(images)?;
        let h = self.encoder.predict(&self.params, images)?;
        match &self.heads {
            Some((mu, _)) => mu.predict(&self.params, &h),
            None => Ok(h),
        }
    }

    /// `[n, 100]` embeddings to `[n, c, h, w]` images in (0, 1).
    pub fn decode(&self, embeddings: &Tensor) -> Result<Tensor> {
        if embeddings.shape().len() != 2 || embeddings.shape()[1] != EMBEDDING_DIM {
            return Err(Error::ShapeMismatch {
                left: embeddings.shape().to_vec(),
                right: vec![embeddings.shape()[0], EMBEDDING_DIM],
                context: "decode expects 100-dim embeddings",
            });
        }
        self.decoder.predict(&self.params, embeddings)
    }

    /// Encodes a whole image set in chunks.
    pub fn encode_set(&self, set: &ImageSet) -> Result<Tensor> {
        let mut rows = Vec::with_capacity(set.len() * EMBEDDING_DIM);
        let all: Vec<usize> = (0..set.len()).collect();
        for chunk in all.chunks(256) {
            rows.extend_from_slice(self.encode(&set.tensor(chunk))?.data());
        }
        Tensor::new(vec![set.len(), EMBEDDING_DIM], rows)
    }

    /// Mean per-pixel BCE of `decode(encode(x))` against `x`.
    pub fn reconstruction_bce(&self, images: &Tensor) -> Result<f64> {
        let rec = self.decode(&self.encode(images)?)?;
        Ok(bce(&rec, images)?.value)
    }

    /// Reconstruction objective and its gradients. `eps` holds the standard
    /// normal draws used by the variational kinds (`[n, 100]`) and is ignored
    /// otherwise.
    pub fn loss_and_grads(
        &self,
        images: &Tensor,
        eps: Option<&Tensor>,
    ) -> Result<ReconstructionLoss> {
        self.loss_with(&self.params, images, eps)
    }

    /// [`Self::loss_and_grads`] evaluated at arbitrary parameters.
    pub fn loss_with(
        &self,
        params: &ModelParams,
        images: &Tensor,
        eps: Option<&Tensor>,
    ) -> Result<ReconstructionLoss> {
        self.check_images(images)?;
        let pixels = self.geometry.len() as f64;
        let mut grads = params.zeros_like();
        let (h, enc_tape) = self.encoder.forward(params, images)?;
        match &self.heads {
            None => {
                let (rec, dec_tape) = self.decoder.forward(params, &h)?;
                let mut loss = bce(&rec, images)?;
                loss.grad.scale(pixels);
                let gz = self
                    .decoder
                    .backward(params, &dec_tape, &loss.grad, &mut grads)?;
                self.encoder.backward(params, &enc_tape, &gz, &mut grads)?;
                Ok(ReconstructionLoss {
                    total: loss.value * pixels,
                    bce_mean: loss.value,
                    kl: 0.0,
                    grads,
                })
            }
            Some((mu_net, lv_net)) => {
                let eps = eps.ok_or_else(|| {
                    Error::InvalidInput("variational models need noise draws".into())
                })?;
                let (mu, mu_tape) = mu_net.forward(params, &h)?;
                let (lv, lv_tape) = lv_net.forward(params, &h)?;
                let z = reparameterize(&mu, &lv, eps)?;
                let (rec, dec_tape) = self.decoder.forward(params, &z)?;
                let mut loss = bce(&rec, images)?;
                loss.grad.scale(pixels);
                let kl = kl_diag_gaussian(&mu, &lv)?;
                let gz = self
                    .decoder
                    .backward(params, &dec_tape, &loss.grad, &mut grads)?;
                let (mut g_mu, mut g_lv) = reparameterize_backward(&lv, eps, &gz);
                g_mu.add_assign(&kl.grad_mu)?;
                g_lv.add_assign(&kl.grad_log_var)?;
                let mut gh = mu_net.backward(params, &mu_tape, &g_mu, &mut grads)?;
                gh.add_assign(&lv_net.backward(params, &lv_tape, &g_lv, &mut grads)?)?;
                self.encoder.backward(params, &enc_tape, &gh, &mut grads)?;
                Ok(ReconstructionLoss {
                    total: loss.value * pixels + kl.value,
                    bce_mean: loss.value,
                    kl: kl.value,
                    grads,
                })
            }
        }
    }

    /// Persists weights (`<stem>.cmem`) and a JSON sidecar (`<stem>.json`).
    pub fn save(&self, stem: &Path, sidecar: &ImageModelSidecar) -> Result<()> {
        cmem::save_params(&stem.with_extension("cmem"), &self.params)?;
        let path = stem.with_extension("json");
        fs::write(&path, serde_json::to_string_pretty(sidecar)?).at(&path)
    }

    pub fn sidecar(
        &self,
        loss_history: Vec<f64>,
        config_hash: Option<String>,
    ) -> ImageModelSidecar {
        ImageModelSidecar {
            kind: self.kind,
            geometry: self.geometry,
            seed: self.seed,
            embedding_dim: EMBEDDING_DIM,
            networks: self.networks().into_iter().cloned().collect(),
            loss_history,
            config_hash,
        }
    }

    pub fn load(stem: &Path) -> Result<(Self, ImageModelSidecar)> {
        let path = stem.with_extension("json");
        if !path.is_file() {
            return Err(Error::NotFound(format!("image model {}", path.display())));
        }
        let sidecar: ImageModelSidecar =
            serde_json::from_str(&fs::read_to_string(&path).at(&path)?)?;
        let mut model = Self::build(sidecar.kind, sidecar.geometry, sidecar.seed)?;
        let params = cmem::load_params(&stem.with_extension("cmem"))?;
        for (name, t) in model.params.iter() {
            let stored = params.get(name)?;
            stored.expect_same_shape(t, "stored parameter")?;
        }
        if params.len() != model.params.len() {
            return Err(Error::Format("weight file has extra tensors".into()));
        }
        model.params = params;
        Ok((model, sidecar))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageModelSidecar {
    pub kind: ImageModelKind,
    pub geometry: ImageGeometry,
    pub seed: u64,
    pub embedding_dim: usize,
    pub networks: Vec<Network>,
    pub loss_history: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// Trains with Adam on minibatches; returns the per-epoch mean objective.
pub fn train_image_model(
    model: &mut ImageAutoencoder,
    images: &ImageSet,
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    if images.geometry != model.geometry {
        return Err(Error::InvalidInput(format!(
            "images are {:?}, model expects {:?}",
            images.geometry.shape(),
            model.geometry.shape()
        )));
    }
    let mut params = std::mem::take(&mut model.params);
    let label = format!("train {}", model.kind);
    let frozen: &ImageAutoencoder = model;
    let result = run_minibatches(
        &label,
        &mut params,
        images.len(),
        config,
        |p, batch, rng| {
            let x = images.tensor(batch);
            let eps = frozen.kind.is_variational().then(|| {
                let data = (0..batch.len() * EMBEDDING_DIM)
                    .map(|_| StandardNormal.sample(rng))
                    .collect();
                Tensor::new(vec![batch.len(), EMBEDDING_DIM], data).expect("shape")
            });
            let loss = frozen.loss_with(p, &x, eps.as_ref())?;
            Ok(StepOutput {
                terms: vec![loss.total, loss.bce_mean, loss.kl],
                grads: loss.grads,
            })
        },
    );
    model.params = params;
    Ok(result?.into_iter().map(|terms| terms[0]).collect())
}
