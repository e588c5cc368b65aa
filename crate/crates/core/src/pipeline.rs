//! End-to-end stages over a run directory: synthesize data, train the image
//! auto-encoder, the mappings and the direct baselines, generate, evaluate.
//!
//! Layout under the output directory, per seed `s`:
//!
//! ```text
//! seed-<s>/image_model.{cmem,json}     image auto-encoder + sidecar
//! seed-<s>/image_model.loss.json
//! seed-<s>/mapping-<modality>.{cmem,json,loss.json}
//! seed-<s>/direct-<modality>.{cmem,json,loss.json}
//! seed-<s>/grids/*.png
//! report.json, report.txt
//! ```
//!
//! Datasets live under the data directory in one folder per split spec.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::{predict_direct, train_direct, DirectRegressor};
use crate::datasets::{
    bundled_digits, find_mnist_train, load_dataset, load_mnist_idx, save_dataset, synthesize,
    ComboClass, Dataset, DatasetKind, DigitPool, SplitSpec, HELD_OUT_DEFAULT,
};
use crate::embeddings::{
    synth_token_table, ClassEmbeddings, MfccConfig, Modality, SpeechBank, SpeechSource, TokenTable,
    TOKEN_DIM, VOCAB,
};
use crate::error::{Error, IoContext, Result};
use crate::evaluation::{evaluate_method, render_grid, EvalReport, MethodResult, PsnrOptions};
use crate::image_models::{train_image_model, ImageAutoencoder, ImageModelKind};
use crate::imageio;
use crate::mapping::{train_mapping, translate_to_image, AlignedRows, MappingConfig, MappingModel};
use crate::nn::derive_seed;
use crate::tensor::Tensor;
use crate::training::TrainConfig;

pub const DIRECT_METHOD: &str = "direct";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    /// Split seed; the run seed when absent.
    pub seed: Option<u64>,
    /// Images per digit combination; the full count times `scale` when absent.
    pub per_class_count: Option<usize>,
    pub held_out: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Double,
            seed: None,
            per_class_count: None,
            held_out: HELD_OUT_DEFAULT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageModelConfig {
    pub kind: ImageModelKind,
    pub train: TrainConfig,
}

impl Default for ImageModelConfig {
    fn default() -> Self {
        Self {
            kind: ImageModelKind::ConvVae,
            train: TrainConfig {
                epochs: 10,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub token_dim: usize,
    /// Text table file (`token v1 .. vd` per line); synthetic when absent.
    pub token_table: Option<PathBuf>,
    /// Seed of the synthetic table; derived from the run seed when absent.
    pub token_seed: Option<u64>,
    pub speech: SpeechSource,
    pub sample_rate: u32,
    pub clip_seconds: f64,
    pub mfcc: MfccConfig,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            token_dim: TOKEN_DIM,
            token_table: None,
            token_seed: None,
            speech: SpeechSource::Synthetic,
            sample_rate: 24_000,
            clip_seconds: 0.5,
            mfcc: MfccConfig::default(),
        }
    }
}

/// Everything a run depends on. Read from JSON, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Number of consecutive seeds starting at `seed`.
    pub seeds: usize,
    pub scale: f64,
    pub dataset: DatasetConfig,
    pub image_model: ImageModelConfig,
    pub mapping: MappingConfig,
    pub baseline: TrainConfig,
    pub embeddings: EmbeddingConfig,
    pub modalities: Vec<Modality>,
    pub evaluation: PsnrOptions,
    pub grid_cols: usize,
    /// MNIST IDX directory for the digit pool; the bundled subset when absent.
    pub mnist_dir: Option<PathBuf>,
    /// Root for synthesized datasets; `<output_dir>/data` when absent.
    pub data_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            seeds: 1,
            scale: 1.0,
            dataset: DatasetConfig::default(),
            image_model: ImageModelConfig::default(),
            mapping: MappingConfig::default(),
            baseline: TrainConfig {
                epochs: 10,
                ..TrainConfig::default()
            },
            embeddings: EmbeddingConfig::default(),
            modalities: Modality::ALL.to_vec(),
            evaluation: PsnrOptions::default(),
            grid_cols: 4,
            mnist_dir: None,
            data_dir: None,
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).at(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "scale must be in (0, 1], got {}",
                self.scale
            )));
        }
        if self.seeds == 0 {
            return Err(Error::InvalidInput("at least one seed is required".into()));
        }
        if self.modalities.is_empty() {
            return Err(Error::InvalidInput("no modalities selected".into()));
        }
        Ok(())
    }

    pub fn run_seeds(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.seed + i).collect()
    }

    pub fn per_class_count(&self) -> usize {
        self.dataset.per_class_count.unwrap_or_else(|| {
            ((self.dataset.kind.full_per_class_count() as f64 * self.scale).round() as usize).max(1)
        })
    }

    pub fn split_spec(&self, run_seed: u64) -> Result<SplitSpec> {
        SplitSpec::random(
            self.dataset.kind,
            self.per_class_count(),
            self.dataset.held_out,
            self.dataset.seed.unwrap_or(run_seed),
        )
    }

    pub fn data_root(&self) -> PathBuf {
        self.data_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("data"))
    }

    pub fn dataset_dir(&self, run_seed: u64) -> Result<PathBuf> {
        let spec = self.split_spec(run_seed)?;
        let kind = match spec.kind {
            DatasetKind::Double => "double",
            DatasetKind::ColoredDouble => "colored",
        };
        Ok(self.data_root().join(format!(
            "{kind}-n{}-h{}-s{}",
            spec.per_class_count,
            spec.held_out.len(),
            spec.seed
        )))
    }

    pub fn seed_dir(&self, run_seed: u64) -> PathBuf {
        self.output_dir.join(format!("seed-{run_seed}"))
    }

    /// The configuration with machine-local paths removed.
    pub fn canonical(&self) -> serde_json::Value {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.data_dir = None;
        let mut v = serde_json::to_value(&c).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output_dir");
            obj.remove("data_dir");
        }
        v
    }

    /// Git-style content hash (`sha256("blob <len>\0" + json)`) of the
    /// canonical configuration.
    pub fn config_hash(&self) -> String {
        let body = serde_json::to_string(&self.canonical()).expect("config serializes");
        let mut h = Sha256::new();
        h.update(format!("blob {}\0", body.len()));
        h.update(body.as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn stem(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).at(parent)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").at(path)
}

#[derive(Serialize)]
struct LossTrace<'a> {
    epochs: &'a [f64],
}

fn digit_pool(config: &RunConfig) -> Result<(DigitPool, String)> {
    let dirs = config
        .mnist_dir
        .iter()
        .chain(config.data_dir.iter())
        .cloned()
        .collect::<Vec<_>>();
    for dir in dirs {
        if let Some((images, labels)) = find_mnist_train(&dir) {
            return Ok((
                DigitPool::new(load_mnist_idx(&images, &labels)?)?,
                format!(
                    "mnist-train:{}",
                    images.file_name().unwrap_or_default().to_string_lossy()
                ),
            ));
        }
    }
    if let Some(dir) = &config.mnist_dir {
        return Err(Error::NotFound(format!(
            "MNIST training IDX files in {}",
            dir.display()
        )));
    }
    Ok((
        DigitPool::new(bundled_digits())?,
        "bundled-2000".to_string(),
    ))
}

/// Synthesizes and stores the dataset of every run seed.
pub fn synth_data(config: &RunConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let (pool, source) = digit_pool(config)?;
    config
        .run_seeds()
        .into_iter()
        .map(|s| {
            let dir = config.dataset_dir(s)?;
            let dataset = synthesize(&pool, &config.split_spec(s)?)?;
            save_dataset(&dataset, &source, &dir)?;
            log::info!(
                "dataset {}: {} train / {} test",
                dir.display(),
                dataset.train.len(),
                dataset.test.len()
            );
            Ok(dir)
        })
        .collect()
}

fn load_seed_dataset(config: &RunConfig, seed: u64) -> Result<Dataset> {
    let dir = config.dataset_dir(seed)?;
    let ds = load_dataset(&dir).map_err(|e| missing(e, "dataset", "synth-data"))?;
    if ds.manifest.split != config.split_spec(seed)? {
        return Err(Error::InvalidInput(format!(
            "dataset at {} was built with a different split; rerun synth-data",
            dir.display()
        )));
    }
    Ok(ds)
}

fn load_image_model(config: &RunConfig, seed: u64) -> Result<ImageAutoencoder> {
    let path = stem(&config.seed_dir(seed), "image_model");
    ImageAutoencoder::load(&path)
        .map(|(m, _)| m)
        .map_err(|e| missing(e, "image model", "train-ae"))
}

/// Names the stage that produces an artifact when it is absent.
fn missing(e: Error, what: &'static str, stage: &'static str) -> Error {
    match e {
        Error::NotFound(detail) => Error::MissingArtifact {
            what,
            detail,
            stage,
        },
        other => other,
    }
}

/// Trains and stores the image auto-encoder of every run seed; returns the
/// loss histories.
pub fn train_ae(config: &RunConfig) -> Result<Vec<Vec<f64>>> {
    config.validate()?;
    let hash = config.config_hash();
    config
        .run_seeds()
        .into_iter()
        .map(|s| {
            let ds = load_seed_dataset(config, s)?;
            let mut model = ImageAutoencoder::build(
                config.image_model.kind,
                ds.geometry(),
                derive_seed(s, "image-model"),
            )?;
            let train = TrainConfig {
                seed: derive_seed(s, "image-model-batches"),
                ..config.image_model.train
            };
            let history = train_image_model(&mut model, &ds.train, &train)?;
            let dir = config.seed_dir(s);
            fs::create_dir_all(&dir).at(&dir)?;
            let path = stem(&dir, "image_model");
            model.save(&path, &model.sidecar(history.clone(), Some(hash.clone())))?;
            write_json(
                &dir.join("image_model.loss.json"),
                &LossTrace { epochs: &history },
            )?;
            Ok(history)
        })
        .collect()
}

/// Fixed per-class embeddings of one modality for every class of the
/// dataset kind.
pub struct EmbeddingSources {
    table: Option<TokenTable>,
    speech: Option<SpeechBank>,
    mfcc: MfccConfig,
}

impl EmbeddingSources {
    pub fn load(config: &RunConfig, seed: u64) -> Result<Self> {
        let e = &config.embeddings;
        let table = if config.modalities.contains(&Modality::Text) {
            Some(match &e.token_table {
                Some(path) => TokenTable::load(path)?,
                None => synth_token_table(
                    &VOCAB,
                    e.token_dim,
                    e.token_seed.unwrap_or_else(|| derive_seed(seed, "tokens")),
                ),
            })
        } else {
            None
        };
        let speech = if config.modalities.contains(&Modality::Speech) {
            Some(SpeechBank::load(&e.speech, e.sample_rate, e.clip_seconds)?)
        } else {
            None
        };
        Ok(Self {
            table,
            speech,
            mfcc: e.mfcc,
        })
    }

    pub fn class_embeddings(
        &self,
        modality: Modality,
        kind: DatasetKind,
    ) -> Result<ClassEmbeddings> {
        let classes = match kind {
            DatasetKind::Double => ComboClass::all_plain(),
            DatasetKind::ColoredDouble => ComboClass::all_colored(),
        };
        match modality {
            Modality::Text => ClassEmbeddings::text(
                &classes,
                self.table
                    .as_ref()
                    .ok_or_else(|| Error::InvalidInput("text is not enabled".into()))?,
            ),
            Modality::Speech => ClassEmbeddings::speech(
                &classes,
                self.speech
                    .as_ref()
                    .ok_or_else(|| Error::InvalidInput("speech is not enabled".into()))?,
                &self.mfcc,
            ),
        }
    }
}

/// Trains and stores one mapping per modality and seed.
pub fn train_map(config: &RunConfig) -> Result<()> {
    config.validate()?;
    let hash = config.config_hash();
    for s in config.run_seeds() {
        let image_model = load_image_model(config, s)?;
        let ds = load_seed_dataset(config, s)?;
        let x = image_model.encode_set(&ds.train)?;
        let sources = EmbeddingSources::load(config, s)?;
        for &modality in &config.modalities {
            let emb = sources.class_embeddings(modality, ds.spec().kind)?;
            let targets = AlignedRows::for_classes(&emb, ds.train.classes())?;
            let mut mc = config.mapping;
            mc.train.seed = derive_seed(s, &format!("mapping-{modality}"));
            let (model, traces) = train_mapping(&x, &targets, &mc)?;
            let dir = config.seed_dir(s);
            model.save(
                &stem(&dir, &format!("mapping-{modality}")),
                &model.sidecar(Some(traces.clone()), Some(modality), Some(hash.clone())),
            )?;
            write_json(&dir.join(format!("mapping-{modality}.loss.json")), &traces)?;
        }
    }
    Ok(())
}

/// Trains and stores one direct regressor per modality and seed.
pub fn train_baseline(config: &RunConfig) -> Result<()> {
    config.validate()?;
    let hash = config.config_hash();
    for s in config.run_seeds() {
        let ds = load_seed_dataset(config, s)?;
        let sources = EmbeddingSources::load(config, s)?;
        for &modality in &config.modalities {
            let emb = sources.class_embeddings(modality, ds.spec().kind)?;
            let targets = AlignedRows::for_classes(&emb, ds.train.classes())?;
            let mut model = DirectRegressor::build(
                emb.dim(),
                ds.geometry(),
                derive_seed(s, &format!("direct-{modality}")),
            )?;
            let train = TrainConfig {
                seed: derive_seed(s, &format!("direct-{modality}-batches")),
                ..config.baseline
            };
            let history = train_direct(&mut model, &targets, &ds.train, &train)?;
            let dir = config.seed_dir(s);
            fs::create_dir_all(&dir).at(&dir)?;
            model.save(
                &stem(&dir, &format!("direct-{modality}")),
                &model.sidecar(history.clone(), Some(hash.clone())),
            )?;
            write_json(
                &dir.join(format!("direct-{modality}.loss.json")),
                &LossTrace { epochs: &history },
            )?;
        }
    }
    Ok(())
}

/// Trained generators of one seed.
pub struct Generators {
    pub kind: DatasetKind,
    pub image_model: ImageAutoencoder,
    sources: EmbeddingSources,
    seed_dir: PathBuf,
}

impl Generators {
    pub fn load(config: &RunConfig, seed: u64) -> Result<Self> {
        let image_model = load_image_model(config, seed)?;
        Ok(Self {
            kind: config.dataset.kind,
            image_model,
            sources: EmbeddingSources::load(config, seed)?,
            seed_dir: config.seed_dir(seed),
        })
    }

    pub fn proposed_name(&self) -> String {
        format!("proposed/{}", self.image_model.kind())
    }

    pub fn embeddings(&self, modality: Modality) -> Result<ClassEmbeddings> {
        self.sources.class_embeddings(modality, self.kind)
    }

    fn check_classes(&self, classes: &[ComboClass]) -> Result<()> {
        let colored = self.kind == DatasetKind::ColoredDouble;
        if let Some(bad) = classes.iter().find(|c| c.colors.is_some() != colored) {
            return Err(Error::InvalidInput(format!(
                "class `{bad}` does not belong to the {} dataset",
                self.kind.label()
            )));
        }
        Ok(())
    }

    /// Latent-swap generation: `[n, c, h, w]` images for `classes`.
    pub fn proposed(&self, modality: Modality, classes: &[ComboClass]) -> Result<Tensor> {
        self.check_classes(classes)?;
        let path = stem(&self.seed_dir, &format!("mapping-{modality}"));
        let (mapping, _) =
            MappingModel::load(&path).map_err(|e| missing(e, "mapping", "train-map"))?;
        let y = self.embeddings(modality)?.rows(classes)?;
        translate_to_image(&y, &mapping, &self.image_model)
    }

    pub fn direct(&self, modality: Modality, classes: &[ComboClass]) -> Result<Tensor> {
        self.check_classes(classes)?;
        let path = stem(&self.seed_dir, &format!("direct-{modality}"));
        let (model, _) = DirectRegressor::load(&path)
            .map_err(|e| missing(e, "direct regressor", "train-baseline"))?;
        predict_direct(&model, &self.embeddings(modality)?.rows(classes)?)
    }
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect()
}

fn split_images(images: &Tensor) -> Vec<Tensor> {
    let shape = images.shape()[1..].to_vec();
    (0..images.batch())
        .map(|i| Tensor::new(shape.clone(), images.sample(i).to_vec()).expect("sample shape"))
        .collect()
}

/// Writes one PNG per class plus a grid for the first run seed; returns the
/// written paths.
pub fn generate(
    config: &RunConfig,
    modality: Modality,
    classes: &[ComboClass],
    method: Option<&str>,
) -> Result<Vec<PathBuf>> {
    config.validate()?;
    if classes.is_empty() {
        return Err(Error::InvalidInput("no classes to generate".into()));
    }
    let seed = config.seed;
    let gens = Generators::load(config, seed)?;
    let images = match method {
        Some(DIRECT_METHOD) => gens.direct(modality, classes)?,
        None | Some("proposed") => gens.proposed(modality, classes)?,
        Some(other) => {
            return Err(Error::InvalidInput(format!(
                "unknown method `{other}` (expected proposed or direct)"
            )))
        }
    };
    let tag = method.unwrap_or("proposed");
    let dir = config.seed_dir(seed).join("generated");
    fs::create_dir_all(&dir).at(&dir)?;
    let tiles = split_images(&images);
    let mut written = Vec::new();
    for (class, img) in classes.iter().zip(&tiles) {
        let path = dir.join(format!("{tag}-{modality}-{}.png", slug(&class.to_string())));
        imageio::save_png(img, &path)?;
        written.push(path);
    }
    let grid = dir.join(format!("{tag}-{modality}-grid.png"));
    render_grid(&tiles, config.grid_cols, &grid)?;
    written.push(grid);
    Ok(written)
}

/// Scores every method on the held-out classes of every seed and writes
/// `report.json` and `report.txt`.
pub fn evaluate(config: &RunConfig) -> Result<EvalReport> {
    config.validate()?;
    let mut results: Vec<MethodResult> = Vec::new();
    let mut grids = Vec::new();
    for s in config.run_seeds() {
        let ds = load_seed_dataset(config, s)?;
        let gens = Generators::load(config, s)?;
        let classes = ds.spec().test_classes();
        let grid_dir = config.seed_dir(s).join("grids");
        fs::create_dir_all(&grid_dir).at(&grid_dir)?;
        for &modality in &config.modalities {
            let proposed = gens.proposed_name();
            for method in [proposed.as_str(), DIRECT_METHOD] {
                let mut generated = None;
                let r = evaluate_method(
                    method,
                    modality,
                    s,
                    |cls| {
                        let imgs = if method == DIRECT_METHOD {
                            gens.direct(modality, cls)?
                        } else {
                            gens.proposed(modality, cls)?
                        };
                        generated = Some(imgs.clone());
                        Ok(imgs)
                    },
                    &classes,
                    &ds.test,
                    ds.spec().kind,
                    &config.evaluation,
                )?;
                let name = format!("{}-{modality}.png", slug(method));
                if let Some(imgs) = generated {
                    render_grid(
                        &split_images(&imgs),
                        config.grid_cols,
                        &grid_dir.join(&name),
                    )?;
                }
                grids.push(format!("seed-{s}/grids/{name}"));
                log::info!("seed {s} {method} {modality}: {:.2} dB", r.mean_db);
                results.push(r);
            }
        }
    }
    let report = EvalReport::new(config.canonical(), results, grids);
    fs::create_dir_all(&config.output_dir).at(&config.output_dir)?;
    let json = config.output_dir.join("report.json");
    fs::write(&json, report.to_json()?).at(&json)?;
    let txt = config.output_dir.join("report.txt");
    fs::write(&txt, report.to_table()).at(&txt)?;
    Ok(report)
}

/// All stages in order.
pub fn run_pipeline(config: &RunConfig) -> Result<EvalReport> {
    synth_data(config)?;
    train_ae(config)?;
    train_map(config)?;
    train_baseline(config)?;
    evaluate(config)
}
