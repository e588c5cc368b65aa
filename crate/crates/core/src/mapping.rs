//! Paired latent auto-encoders tied by an equality constraint, and
//! cross-modal inference by latent swap.
//!
//! The image side maps an image embedding `x_z` to a latent `l_x = f_x(x_z)`
//! and back with `f'_x`; the modality side does the same for `y_z` with `f_y`
//! and `f'_y`. Training minimizes
//!
//! ```text
//! w1 * |l_x - l_y|^2 + w2 * |x_z - f'_x(l_x)|^2 + w3 * |y_z - f'_y(l_y)|^2
//! ```
//!
//! (each term a mean squared error). In the default
//! [`MappingVariant::Normalization`] variant `f_x` is a fixed z-score over the
//! training embeddings, so only the modality networks learn and the second
//! term is identically zero.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cmem::{self, NamedTensor};
use crate::datasets::ComboClass;
use crate::embeddings::{ClassEmbeddings, Modality};
use crate::error::{Error, IoContext, Result};
use crate::image_models::ImageAutoencoder;
use crate::nn::{derive_seed, mse, seeded_rng, LayerSpec, ModelParams, Network};
use crate::tensor::Tensor;
use crate::training::{run_minibatches, StepOutput, TrainConfig};

pub const LATENT_DIM: usize = 100;
pub const STD_FLOOR: f64 = 1e-6;

/// Per-dimension z-score fitted on training image embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Normalization {
    /// Population mean and standard deviation of the rows of `x` (`[n, d]`),
    /// with the deviation floored at [`STD_FLOOR`].
    pub fn fit(x: &Tensor) -> Result<Self> {
        if x.shape().len() != 2 || x.batch() < 2 {
            return Err(Error::InvalidInput(format!(
                "normalization needs at least two embedding rows, got shape {:?}",
                x.shape()
            )));
        }
        let (n, d) = (x.batch(), x.sample_len());
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(x.sample(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for i in 0..n {
            for ((s, v), m) in var.iter_mut().zip(x.sample(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| (s / n as f64).sqrt().max(STD_FLOOR))
            .collect();
        Ok(Self { mean, std })
    }

    pub fn from_parts(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() || std.iter().any(|s| s.is_nan() || *s <= 0.0) {
            return Err(Error::InvalidInput(
                "normalization needs equal-length mean and positive std".into(),
            ));
        }
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    fn apply(&self, x: &Tensor, f: impl Fn(f64, f64, f64) -> f64) -> Result<Tensor> {
        if x.shape().len() != 2 || x.sample_len() != self.dim() {
            return Err(Error::ShapeMismatch {
                left: x.shape().to_vec(),
                right: vec![x.shape()[0], self.dim()],
                context: "normalization width",
            });
        }
        let d = self.dim();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| f(v, self.mean[i % d], self.std[i % d]))
            .collect();
        Tensor::new(x.shape().to_vec(), data)
    }

    /// `(x - mean) / std`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.apply(x, |v, m, s| (v - m) / s)
    }

    /// `l * std + mean`.
    pub fn inverse(&self, l: &Tensor) -> Result<Tensor> {
        self.apply(l, |v, m, s| v * s + m)
    }
}

pub fn fit_normalization(x: &Tensor) -> Result<Normalization> {
    Normalization::fit(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MappingVariant {
    /// Fixed z-score image side; only the modality networks train.
    #[default]
    Normalization,
    /// Dense `100 -> 256 -> 100` networks on the image side as well.
    Trainable,
}

impl std::str::FromStr for MappingVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalization" => Ok(Self::Normalization),
            "trainable" => Ok(Self::Trainable),
            other => Err(Error::InvalidInput(format!(
                "unknown mapping variant `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub latent: f64,
    pub image: f64,
    pub modality: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            latent: 1.0,
            image: 1.0,
            modality: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MappingConfig {
    #[serde(default)]
    pub variant: MappingVariant,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    pub train: TrainConfig,
}

fn default_hidden() -> usize {
    256
}

impl Default for MappingConfig {
    fn default() -> Self {
        Self {
            variant: MappingVariant::default(),
            weights: LossWeights::default(),
            hidden: default_hidden(),
            train: TrainConfig {
                epochs: 30,
                ..TrainConfig::default()
            },
        }
    }
}

/// Modality targets aligned with a list of samples: sample `i` pairs with
/// row `index[i]` of `table`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedRows {
    table: Tensor,
    index: Vec<usize>,
}

impl AlignedRows {
    pub fn new(table: Tensor, index: Vec<usize>) -> Result<Self> {
        if table.shape().len() != 2 {
            return Err(Error::InvalidInput("modality table must be 2-D".into()));
        }
        if let Some(bad) = index.iter().find(|&&i| i >= table.batch()) {
            return Err(Error::InvalidInput(format!(
                "row {bad} outside a {}-row table",
                table.batch()
            )));
        }
        Ok(Self { table, index })
    }

    /// One row per sample.
    pub fn dense(rows: Tensor) -> Result<Self> {
        let n = rows.batch();
        Self::new(rows, (0..n).collect())
    }

    /// Every sample paired with its class's fixed embedding.
    pub fn for_classes(embeddings: &ClassEmbeddings, classes: &[ComboClass]) -> Result<Self> {
        let index = classes
            .iter()
            .map(|c| {
                embeddings.position(c).ok_or_else(|| {
                    Error::NotFound(format!("{} embedding for `{c}`", embeddings.modality))
                })
            })
            .collect::<Result<_>>()?;
        Self::new(embeddings.table(), index)
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.table.sample_len()
    }

    /// Rows for the given sample positions.
    pub fn gather(&self, samples: &[usize]) -> Tensor {
        let rows: Vec<usize> = samples.iter().map(|&s| self.index[s]).collect();
        self.table.select(&rows)
    }
}

/// The three loss terms and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub latent: f64,
    pub image: f64,
    pub modality: f64,
}

/// Per-epoch training means plus full-set values before and after training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingTraces {
    pub total: Vec<f64>,
    pub latent: Vec<f64>,
    pub image: Vec<f64>,
    pub modality: Vec<f64>,
    pub initial: LossTerms,
    #[serde(rename = "final")]
    pub last: LossTerms,
}

#[derive(Debug, Clone)]
pub struct MappingLoss {
    pub terms: LossTerms,
    pub grads: ModelParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingModel {
    variant: MappingVariant,
    weights: LossWeights,
    image_dim: usize,
    modality_dim: usize,
    seed: u64,
    normalization: Option<Normalization>,
    /// `(f_x, f'_x)` of the trainable variant.
    image_nets: Option<(Network, Network)>,
    modality_enc: Network,
    modality_dec: Network,
    params: ModelParams,
}

fn mlp(name: &str, inputs: usize, hidden: usize, outputs: usize) -> Result<Network> {
    Network::new(
        name,
        vec![
            LayerSpec::dense(inputs, hidden),
            LayerSpec::Relu,
            LayerSpec::dense(hidden, outputs),
        ],
    )
}

impl MappingModel {
    /// Builds an untrained model. `normalization` is required by (and only
    /// used in) the normalization variant.
    pub fn new(
        config: &MappingConfig,
        image_dim: usize,
        modality_dim: usize,
        normalization: Option<Normalization>,
        seed: u64,
    ) -> Result<Self> {
        let hidden = config.hidden;
        let (normalization, image_nets) = match config.variant {
            MappingVariant::Normalization => {
                let norm = normalization.ok_or_else(|| {
                    Error::InvalidInput("normalization variant needs fitted statistics".into())
                })?;
                if image_dim != LATENT_DIM || norm.dim() != LATENT_DIM {
                    return Err(Error::InvalidInput(format!(
                        "normalization variant needs {LATENT_DIM}-dim image embeddings, got {image_dim}"
                    )));
                }
                (Some(norm), None)
            }
            MappingVariant::Trainable => (
                None,
                Some((
                    mlp("fx", image_dim, hidden, LATENT_DIM)?,
                    mlp("fx_inv", LATENT_DIM, hidden, image_dim)?,
                )),
            ),
        };
        let modality_enc = mlp("fy", modality_dim, hidden, LATENT_DIM)?;
        let modality_dec = mlp("fy_inv", LATENT_DIM, hidden, modality_dim)?;
        let mut params = ModelParams::new();
        let mut rng = seeded_rng(derive_seed(seed, "mapping-init"));
        if let Some((fx, fx_inv)) = &image_nets {
            fx.init(&mut params, &mut rng);
            fx_inv.init(&mut params, &mut rng);
        }
        modality_enc.init(&mut params, &mut rng);
        modality_dec.init(&mut params, &mut rng);
        Ok(Self {
            variant: config.variant,
            weights: config.weights,
            image_dim,
            modality_dim,
            seed,
            normalization,
            image_nets,
            modality_enc,
            modality_dec,
            params,
        })
    }

    pub fn variant(&self) -> MappingVariant {
        self.variant
    }

    pub fn weights(&self) -> LossWeights {
        self.weights
    }

    pub fn image_dim(&self) -> usize {
        self.image_dim
    }

    pub fn modality_dim(&self) -> usize {
        self.modality_dim
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub fn networks(&self) -> Vec<&Network> {
        let mut nets = Vec::new();
        if let Some((a, b)) = &self.image_nets {
            nets.push(a);
            nets.push(b);
        }
        nets.push(&self.modality_enc);
        nets.push(&self.modality_dec);
        nets
    }

    fn check_width(t: &Tensor, width: usize, context: &'static str) -> Result<()> {
        if t.shape().len() != 2 || t.sample_len() != width {
            return Err(Error::ShapeMismatch {
                left: t.shape().to_vec(),
                right: vec![t.shape()[0], width],
                context,
            });
        }
        Ok(())
    }

    /// `l_x = f_x(x_z)`.
    pub fn image_to_latent(&self, x: &Tensor) -> Result<Tensor> {
        Self::check_width(x, self.image_dim, "image embedding width")?;
        match (&self.normalization, &self.image_nets) {
            (Some(norm), _) => norm.forward(x),
            (None, Some((fx, _))) => fx.predict(&self.params, x),
            _ => unreachable!("one image side is always present"),
        }
    }

    /// `x̃_z = f'_x(l)`.
    pub fn latent_to_image(&self, l: &Tensor) -> Result<Tensor> {
        Self::check_width(l, LATENT_DIM, "latent width")?;
        match (&self.normalization, &self.image_nets) {
            (Some(norm), _) => norm.inverse(l),
            (None, Some((_, fx_inv))) => fx_inv.predict(&self.params, l),
            _ => unreachable!("one image side is always present"),
        }
    }

    /// `l_y = f_y(y_z)`.
    pub fn modality_to_latent(&self, y: &Tensor) -> Result<Tensor> {
        Self::check_width(y, self.modality_dim, "modality embedding width")?;
        self.modality_enc.predict(&self.params, y)
    }

    /// `ỹ_z = f'_y(l)`.
    pub fn latent_to_modality(&self, l: &Tensor) -> Result<Tensor> {
        Self::check_width(l, LATENT_DIM, "latent width")?;
        self.modality_dec.predict(&self.params, l)
    }

    /// `f'_x(f_y(y_z))`: the image embedding implied by a modality embedding.
    pub fn translate_embedding_to_image(&self, y: &Tensor) -> Result<Tensor> {
        self.latent_to_image(&self.modality_to_latent(y)?)
    }

    /// `f'_y(f_x(x_z))`: the modality embedding implied by an image embedding.
    pub fn translate_embedding_to_modality(&self, x: &Tensor) -> Result<Tensor> {
        self.latent_to_modality(&self.image_to_latent(x)?)
    }

    /// The weighted objective on one batch and its gradients.
    pub fn loss_with(&self, params: &ModelParams, x: &Tensor, y: &Tensor) -> Result<MappingLoss> {
        Self::check_width(x, self.image_dim, "image embedding width")?;
        Self::check_width(y, self.modality_dim, "modality embedding width")?;
        if x.batch() != y.batch() {
            return Err(Error::ShapeMismatch {
                left: x.shape().to_vec(),
                right: y.shape().to_vec(),
                context: "paired batch sizes",
            });
        }
        let w = self.weights;
        let mut grads = params.zeros_like();

        let (l_y, enc_tape) = self.modality_enc.forward(params, y)?;
        let (y_rec, dec_tape) = self.modality_dec.forward(params, &l_y)?;
        let mut modality = mse(&y_rec, y)?;
        modality.grad.scale(w.modality);
        let mut g_ly = self
            .modality_dec
            .backward(params, &dec_tape, &modality.grad, &mut grads)?;

        let (latent, image) = match (&self.normalization, &self.image_nets) {
            (Some(norm), _) => {
                let l_x = norm.forward(x)?;
                let mut latent = mse(&l_y, &l_x)?;
                latent.grad.scale(w.latent);
                g_ly.add_assign(&latent.grad)?;
                // f'_x inverts f_x exactly, so this term vanishes.
                (latent.value, 0.0)
            }
            (None, Some((fx, fx_inv))) => {
                let (l_x, fx_tape) = fx.forward(params, x)?;
                let (x_rec, inv_tape) = fx_inv.forward(params, &l_x)?;
                let mut image = mse(&x_rec, x)?;
                image.grad.scale(w.image);
                let mut g_lx = fx_inv.backward(params, &inv_tape, &image.grad, &mut grads)?;
                let mut latent = mse(&l_y, &l_x)?;
                latent.grad.scale(w.latent);
                g_ly.add_assign(&latent.grad)?;
                latent.grad.scale(-1.0);
                g_lx.add_assign(&latent.grad)?;
                fx.backward(params, &fx_tape, &g_lx, &mut grads)?;
                (latent.value, image.value)
            }
            _ => unreachable!("one image side is always present"),
        };
        self.modality_enc
            .backward(params, &enc_tape, &g_ly, &mut grads)?;
        let total = w.latent * latent + w.image * image + w.modality * modality.value;
        Ok(MappingLoss {
            terms: LossTerms {
                total,
                latent,
                image,
                modality: modality.value,
            },
            grads,
        })
    }

    /// Loss terms over a whole paired set, without gradients.
    pub fn evaluate(&self, x: &Tensor, targets: &AlignedRows) -> Result<LossTerms> {
        if x.batch() != targets.len() {
            return Err(Error::InvalidInput(format!(
                "{} image embeddings vs {} modality rows",
                x.batch(),
                targets.len()
            )));
        }
        let n = x.batch();
        let mut acc = [0.0; 4];
        let all: Vec<usize> = (0..n).collect();
        for chunk in all.chunks(1024) {
            let t = self
                .loss_with(&self.params, &x.select(chunk), &targets.gather(chunk))?
                .terms;
            for (a, v) in acc.iter_mut().zip([t.total, t.latent, t.image, t.modality]) {
                *a += v * chunk.len() as f64;
            }
        }
        let [total, latent, image, modality] = acc.map(|a| a / n as f64);
        Ok(LossTerms {
            total,
            latent,
            image,
            modality,
        })
    }

    pub fn sidecar(
        &self,
        traces: Option<MappingTraces>,
        modality: Option<Modality>,
        config_hash: Option<String>,
    ) -> MappingSidecar {
        MappingSidecar {
            variant: self.variant,
            modality,
            weights: self.weights,
            image_dim: self.image_dim,
            modality_dim: self.modality_dim,
            latent_dim: LATENT_DIM,
            seed: self.seed,
            networks: self.networks().into_iter().cloned().collect(),
            traces,
            config_hash,
        }
    }

    /// Weights and statistics to `<stem>.cmem`, sidecar to `<stem>.json`.
    pub fn save(&self, stem: &Path, sidecar: &MappingSidecar) -> Result<()> {
        let mut tensors: Vec<NamedTensor> = self
            .params
            .iter()
            .map(|(n, t)| NamedTensor::from_tensor(n, t))
            .collect();
        if let Some(norm) = &self.normalization {
            let d = norm.dim();
            tensors.push(NamedTensor::from_tensor(
                "norm.mean",
                &Tensor::new(vec![d], norm.mean.clone())?,
            ));
            tensors.push(NamedTensor::from_tensor(
                "norm.std",
                &Tensor::new(vec![d], norm.std.clone())?,
            ));
        }
        cmem::write_file(&stem.with_extension("cmem"), &tensors)?;
        let path = stem.with_extension("json");
        fs::write(&path, serde_json::to_string_pretty(sidecar)?).at(&path)
    }

    pub fn load(stem: &Path) -> Result<(Self, MappingSidecar)> {
        let path = stem.with_extension("json");
        if !path.is_file() {
            return Err(Error::NotFound(format!("mapping model {}", path.display())));
        }
        let sidecar: MappingSidecar = serde_json::from_str(&fs::read_to_string(&path).at(&path)?)?;
        let tensors = cmem::read_file(&stem.with_extension("cmem"))?;
        let mut stored = ModelParams::new();
        let (mut mean, mut std) = (None, None);
        for t in &tensors {
            match t.name.as_str() {
                "norm.mean" => mean = Some(t.values.to_f64()),
                "norm.std" => std = Some(t.values.to_f64()),
                _ => stored.insert(t.name.clone(), t.to_tensor()?),
            }
        }
        let normalization = match (mean, std) {
            (Some(m), Some(s)) => Some(Normalization::from_parts(m, s)?),
            _ => None,
        };
        let config = MappingConfig {
            variant: sidecar.variant,
            weights: sidecar.weights,
            hidden: sidecar
                .networks
                .last()
                .and_then(|n| match n.layers().first() {
                    Some(LayerSpec::Dense { outputs, .. }) => Some(*outputs),
                    _ => None,
                })
                .unwrap_or_else(default_hidden),
            train: TrainConfig::default(),
        };
        let mut model = Self::new(
            &config,
            sidecar.image_dim,
            sidecar.modality_dim,
            normalization,
            sidecar.seed,
        )?;
        if stored.len() != model.params.len() {
            return Err(Error::Format(format!(
                "{} holds {} weight tensors, expected {}",
                stem.with_extension("cmem").display(),
                stored.len(),
                model.params.len()
            )));
        }
        for (name, t) in model.params.iter() {
            stored.get(name)?.expect_same_shape(t, "stored parameter")?;
        }
        model.params = stored;
        Ok((model, sidecar))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingSidecar {
    pub variant: MappingVariant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modality: Option<Modality>,
    pub weights: LossWeights,
    pub image_dim: usize,
    pub modality_dim: usize,
    pub latent_dim: usize,
    pub seed: u64,
    pub networks: Vec<Network>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traces: Option<MappingTraces>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// Fits (for the normalization variant) and trains a mapping between paired
/// image and modality embeddings.
pub fn train_mapping(
    image_embeddings: &Tensor,
    targets: &AlignedRows,
    config: &MappingConfig,
) -> Result<(MappingModel, MappingTraces)> {
    if image_embeddings.shape().len() != 2 || image_embeddings.batch() != targets.len() {
        return Err(Error::InvalidInput(format!(
            "{:?} image embeddings vs {} modality rows",
            image_embeddings.shape(),
            targets.len()
        )));
    }
    image_embeddings.ensure_finite("image embeddings")?;
    let normalization = match config.variant {
        MappingVariant::Normalization => Some(Normalization::fit(image_embeddings)?),
        MappingVariant::Trainable => None,
    };
    let mut model = MappingModel::new(
        config,
        image_embeddings.sample_len(),
        targets.dim(),
        normalization,
        config.train.seed,
    )?;
    let initial = model.evaluate(image_embeddings, targets)?;
    let mut params = std::mem::take(&mut model.params);
    let frozen = &model;
    let history = run_minibatches(
        "train mapping",
        &mut params,
        targets.len(),
        &config.train,
        |p, batch, _rng| {
            let loss =
                frozen.loss_with(p, &image_embeddings.select(batch), &targets.gather(batch))?;
            let t = loss.terms;
            Ok(StepOutput {
                terms: vec![t.total, t.latent, t.image, t.modality],
                grads: loss.grads,
            })
        },
    );
    model.params = params;
    let history = history?;
    let column = |k: usize| history.iter().map(|h| h[k]).collect::<Vec<_>>();
    let traces = MappingTraces {
        total: column(0),
        latent: column(1),
        image: column(2),
        modality: column(3),
        initial,
        last: model.evaluate(image_embeddings, targets)?,
    };
    Ok((model, traces))
}

/// Generates images from modality embeddings `y_z` (`[n, d_y]`) as
/// `decode(f'_x(f_y(y_z)))`. No image is read on this path.
pub fn translate_to_image(
    y: &Tensor,
    mapping: &MappingModel,
    image_model: &ImageAutoencoder,
) -> Result<Tensor> {
    image_model.decode(&mapping.translate_embedding_to_image(y)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedClass {
    pub class: ComboClass,
    pub distance: f64,
}

/// Ranks the classes of `index` by Euclidean distance to a predicted
/// modality embedding (ascending; ties keep index order).
pub fn rank_classes(predicted: &[f64], index: &ClassEmbeddings) -> Result<Vec<RankedClass>> {
    if index.is_empty() {
        return Err(Error::InvalidInput("empty class index".into()));
    }
    if predicted.len() != index.dim() {
        return Err(Error::ShapeMismatch {
            left: vec![predicted.len()],
            right: vec![index.dim()],
            context: "predicted embedding vs class index",
        });
    }
    let mut ranked: Vec<RankedClass> = index
        .classes()
        .iter()
        .map(|c| {
            let v = index.get(c).expect("own class");
            let d2: f64 = v
                .iter()
                .zip(predicted)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            RankedClass {
                class: *c,
                distance: d2.sqrt(),
            }
        })
        .collect();
    ranked.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    Ok(ranked)
}

/// For each image, `f'_y(f_x(encode(image)))` matched against the class index.
pub fn translate_to_modality(
    images: &Tensor,
    mapping: &MappingModel,
    image_model: &ImageAutoencoder,
    index: &ClassEmbeddings,
) -> Result<Vec<Vec<RankedClass>>> {
    let predicted = mapping.translate_embedding_to_modality(&image_model.encode(images)?)?;
    (0..predicted.batch())
        .map(|i| rank_classes(predicted.sample(i), index))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn random(shape: &[usize], seed: u64, scale: f64, offset: f64) -> Tensor {
        let mut rng = seeded_rng(seed);
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                offset + scale * z
            })
            .collect::<Vec<f64>>();
        Tensor::new(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn constant_dimension_is_floored() {
        let mut x = random(&[50, 100], 1, 2.0, 3.0);
        for i in 0..50 {
            x.data_mut()[i * 100 + 7] = 4.0;
        }
        let norm = Normalization::fit(&x).unwrap();
        assert_eq!(norm.std()[7], STD_FLOOR);
        let l = norm.forward(&x).unwrap();
        assert!((0..50).all(|i| l.sample(i)[7] == 0.0));
    }

    #[test]
    fn normalized_statistics_are_standard() {
        let x = random(&[300, 100], 2, 5.0, -1.0);
        let norm = Normalization::fit(&x).unwrap();
        let again = Normalization::fit(&norm.forward(&x).unwrap()).unwrap();
        assert!(again.mean().iter().all(|m| m.abs() < 1e-6));
        assert!(again.std().iter().all(|s| (s - 1.0).abs() < 1e-6));
        assert!(Normalization::fit(&random(&[1, 100], 0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn normalization_total_omits_image_term() {
        let x = random(&[40, 100], 3, 1.0, 0.0);
        let y = random(&[40, 26], 4, 1.0, 0.0);
        let config = MappingConfig::default();
        let model =
            MappingModel::new(&config, 100, 26, Some(Normalization::fit(&x).unwrap()), 9).unwrap();
        let t = model.loss_with(model.params(), &x, &y).unwrap().terms;
        assert_eq!(t.image, 0.0);
        assert_eq!(t.total, t.latent + t.modality);
    }

    #[test]
    fn decoupled_latent_weight_still_trains_reconstruction() {
        let x = random(&[256, 100], 5, 1.0, 0.0);
        let y = random(&[256, 26], 6, 1.0, 0.0);
        let mut config = MappingConfig::default();
        config.weights.latent = 0.0;
        config.train.epochs = 20;
        let (_, traces) = train_mapping(&x, &AlignedRows::dense(y).unwrap(), &config).unwrap();
        assert!(traces.last.modality < 0.5 * traces.initial.modality);
        assert!((traces.last.total - traces.last.modality).abs() < 1e-12);
    }

    #[test]
    fn training_is_deterministic() {
        let x = random(&[64, 100], 7, 1.0, 0.0);
        let y = AlignedRows::dense(random(&[64, 13], 8, 1.0, 0.0)).unwrap();
        let mut config = MappingConfig::default();
        config.train.epochs = 3;
        config.variant = MappingVariant::Trainable;
        let (a, ta) = train_mapping(&x, &y, &config).unwrap();
        let (b, tb) = train_mapping(&x, &y, &config).unwrap();
        assert_eq!(ta, tb);
        assert_eq!(a, b);
        assert_eq!(ta.total.len(), 3);
    }

    #[test]
    fn ranking_is_sorted_and_single_entry_wins() {
        let classes = [
            ComboClass::plain(1, 2),
            ComboClass::plain(3, 4),
            ComboClass::plain(5, 6),
        ];
        let mut k = 0.0;
        let idx = ClassEmbeddings::build(Modality::Text, &classes, |_| {
            k += 1.0;
            Ok(vec![k, 0.0])
        })
        .unwrap();
        let ranked = rank_classes(&[2.9, 0.0], &idx).unwrap();
        assert_eq!(ranked[0].class, ComboClass::plain(5, 6));
        assert!(ranked.windows(2).all(|w| w[0].distance <= w[1].distance));
        assert!(ranked.iter().all(|r| r.distance >= 0.0));

        let one =
            ClassEmbeddings::build(Modality::Text, &classes[..1], |_| Ok(vec![9.0, 9.0])).unwrap();
        assert_eq!(
            rank_classes(&[0.0, 0.0], &one).unwrap()[0].class,
            classes[0]
        );
    }

    #[test]
    fn save_load_round_trip() {
        let x = random(&[20, 100], 9, 1.0, 0.0);
        for variant in [MappingVariant::Normalization, MappingVariant::Trainable] {
            let config = MappingConfig {
                variant,
                ..MappingConfig::default()
            };
            let model =
                MappingModel::new(&config, 100, 52, Some(Normalization::fit(&x).unwrap()), 1)
                    .unwrap();
            let dir = tempfile::tempdir().unwrap();
            let stem = dir.path().join("map");
            model
                .save(&stem, &model.sidecar(None, Some(Modality::Speech), None))
                .unwrap();
            let (back, sidecar) = MappingModel::load(&stem).unwrap();
            assert_eq!(sidecar.modality, Some(Modality::Speech));
            if variant == MappingVariant::Trainable {
                assert!(back.normalization().is_none());
            }
            assert_eq!(back.params(), model.params());
            assert_eq!(back.normalization(), model.normalization());
        }
    }
}
