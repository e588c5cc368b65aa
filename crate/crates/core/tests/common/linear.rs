//! Synthetic-linear mapping oracle: modality embeddings are an exact linear
//! function of image embeddings plus small noise.

use cmem::datasets::ComboClass;
use cmem::embeddings::{ClassEmbeddings, Modality};
use cmem::mapping::{
    rank_classes, train_mapping, AlignedRows, MappingConfig, MappingModel, MappingTraces,
};
use cmem::nn::seeded_rng;
use cmem::training::TrainConfig;
use cmem::Tensor;
use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal};

pub const IMAGE_DIM: usize = 100;
pub const MODALITY_DIM: usize = 26;
pub const PAIRS: usize = 2000;
pub const NOISE: f64 = 0.01;
pub const ORACLE_EPOCHS: usize = 150;
pub const CLASSES: usize = 10;

pub struct LinearOracle {
    pub model: MappingModel,
    pub traces: MappingTraces,
    /// Residual of `y - A x` with `A` the pseudo-inverse of the mixing matrix.
    pub inverse_residual: f64,
    /// Mean squared error of `f'_x(f_y(y))` against the true `x`.
    pub cross_mse: f64,
    /// Top-1 class retrieval from images through `f'_y(f_x(x))`.
    pub top1: f64,
    pub chance: f64,
}

impl LinearOracle {
    pub fn l1_ratio(&self) -> f64 {
        self.traces.last.latent / self.traces.initial.latent
    }

    /// Means of consecutive 5-epoch blocks of the latent trace.
    pub fn block_means(&self) -> Vec<f64> {
        self.traces
            .latent
            .chunks(5)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    }
}

fn gaussian(rows: usize, cols: usize, sd: f64, rng: &mut impl rand::Rng) -> DMatrix<f64> {
    let normal = Normal::new(0.0, sd).unwrap();
    DMatrix::from_fn(rows, cols, |_, _| normal.sample(rng))
}

/// Column-per-sample matrix to a row-per-sample tensor. Storage is
/// column-major, so each sample is already contiguous.
fn to_tensor(m: &DMatrix<f64>) -> Tensor {
    Tensor::new(vec![m.ncols(), m.nrows()], m.as_slice().to_vec()).unwrap()
}

/// `x = B s`, `y = s + noise`, so `y = A x + noise` with `A = B^+`.
pub fn run(seed: u64, epochs: usize) -> LinearOracle {
    let mut rng = seeded_rng(seed);
    let b = gaussian(
        IMAGE_DIM,
        MODALITY_DIM,
        (1.0 / MODALITY_DIM as f64).sqrt(),
        &mut rng,
    );
    let s = gaussian(MODALITY_DIM, PAIRS, 1.0, &mut rng);
    let x = &b * &s;
    let y = &s + gaussian(MODALITY_DIM, PAIRS, NOISE, &mut rng);

    let a = b.clone().pseudo_inverse(1e-12).unwrap();
    let inverse_residual = (&a * &x - &s).abs().max();

    let config = MappingConfig {
        train: TrainConfig {
            epochs,
            seed,
            ..TrainConfig::default()
        },
        ..MappingConfig::default()
    };
    let (xt, yt) = (to_tensor(&x), to_tensor(&y));
    let (model, traces) =
        train_mapping(&xt, &AlignedRows::dense(yt.clone()).unwrap(), &config).unwrap();

    let x_hat = model.translate_embedding_to_image(&yt).unwrap();
    let cross_mse = x_hat
        .data()
        .iter()
        .zip(xt.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / xt.len() as f64;

    // Well-separated class centres in source space; probes are noisy members.
    let centres = gaussian(MODALITY_DIM, CLASSES, 1.0, &mut rng);
    let classes: Vec<ComboClass> = (0..CLASSES as u8)
        .map(|k| ComboClass::plain(k, 0))
        .collect();
    let index = ClassEmbeddings::build(Modality::Text, &classes, |c| {
        Ok(centres
            .column(c.digits[0] as usize)
            .iter()
            .copied()
            .collect())
    })
    .unwrap();
    let per_class = 20;
    let mut probes = DMatrix::zeros(MODALITY_DIM, CLASSES * per_class);
    for k in 0..CLASSES {
        for j in 0..per_class {
            let jitter = gaussian(MODALITY_DIM, 1, 0.1, &mut rng);
            probes.set_column(k * per_class + j, &(centres.column(k) + jitter.column(0)));
        }
    }
    let predicted = model
        .translate_embedding_to_modality(&to_tensor(&(&b * &probes)))
        .unwrap();
    let hits = (0..CLASSES * per_class)
        .filter(|&i| {
            let ranked = rank_classes(predicted.sample(i), &index).unwrap();
            ranked[0].class.digits[0] as usize == i / per_class
        })
        .count();

    LinearOracle {
        model,
        traces,
        inverse_residual,
        cross_mse,
        top1: hits as f64 / (CLASSES * per_class) as f64,
        chance: 1.0 / CLASSES as f64,
    }
}
