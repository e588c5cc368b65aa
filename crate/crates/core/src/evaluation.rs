//! PSNR against the nearest test image, per-method reports and image grids.

use indexmap::IndexMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datasets::{ComboClass, DatasetKind, ImageSet};
use crate::embeddings::Modality;
use crate::error::{Error, Result};
use crate::imageio;
use crate::tensor::Tensor;

pub const PSNR_CAP_DB: f64 = 100.0;
pub const GRID_GAP: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsnrFormula {
    /// `20 log10(maxI / RMSE)` with the RMSE taken per pixel.
    #[default]
    PerPixelRmse,
    /// `20 log10(maxI / ||pred - nearest||_2)` over the whole image.
    LiteralNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidatePool {
    /// Test images of the generated class.
    #[default]
    SameClass,
    /// Every test image.
    AllTest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsnrOptions {
    #[serde(default)]
    pub formula: PsnrFormula,
    #[serde(default)]
    pub pool: CandidatePool,
    #[serde(default = "unit")]
    pub max_intensity: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for PsnrOptions {
    fn default() -> Self {
        Self {
            formula: PsnrFormula::default(),
            pool: CandidatePool::default(),
            max_intensity: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NearestMatch {
    /// Row of the candidate tensor.
    pub index: usize,
    pub distance_sq: f64,
    pub psnr_db: f64,
}

/// Index and squared distance of the candidate closest to `pred`; ties go to
/// the lowest index.
pub fn nearest_index(pred: &[f64], candidates: &Tensor) -> Result<(usize, f64)> {
    if candidates.is_empty() || candidates.shape().len() < 2 {
        return Err(Error::InvalidInput("no candidate images".into()));
    }
    if candidates.sample_len() != pred.len() {
        return Err(Error::ShapeMismatch {
            left: vec![pred.len()],
            right: vec![candidates.sample_len()],
            context: "prediction vs candidate image size",
        });
    }
    let mut best = (0, f64::INFINITY);
    for i in 0..candidates.batch() {
        let d: f64 = candidates
            .sample(i)
            .iter()
            .zip(pred)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(best)
}

/// PSNR in dB for a squared distance over `pixels` values, capped at
/// [`PSNR_CAP_DB`].
pub fn psnr_from_distance(distance_sq: f64, pixels: usize, options: &PsnrOptions) -> f64 {
    let err = match options.formula {
        PsnrFormula::PerPixelRmse => (distance_sq / pixels as f64).sqrt(),
        PsnrFormula::LiteralNorm => distance_sq.sqrt(),
    };
    if err == 0.0 {
        return PSNR_CAP_DB;
    }
    (20.0 * (options.max_intensity / err).log10()).min(PSNR_CAP_DB)
}

/// PSNR of `pred` (one image, any shape) against its nearest row of
/// `candidates` (`[n, ...]`).
pub fn psnr_nearest(
    pred: &Tensor,
    candidates: &Tensor,
    options: &PsnrOptions,
) -> Result<NearestMatch> {
    let (index, distance_sq) = nearest_index(pred.data(), candidates)?;
    Ok(NearestMatch {
        index,
        distance_sq,
        psnr_db: psnr_from_distance(distance_sq, pred.len(), options),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPsnr {
    pub class: ComboClass,
    pub psnr_db: f64,
    /// Index of the matched image in the test set.
    pub nearest: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    pub modality: Modality,
    pub dataset: DatasetKind,
    pub seed: u64,
    pub per_class: Vec<ClassPsnr>,
    pub mean_db: f64,
}

/// Generates one image per class and scores each against the test set.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_method(
    method: &str,
    modality: Modality,
    seed: u64,
    generator: impl FnOnce(&[ComboClass]) -> Result<Tensor>,
    classes: &[ComboClass],
    test: &ImageSet,
    dataset: DatasetKind,
    options: &PsnrOptions,
) -> Result<MethodResult> {
    if classes.is_empty() {
        return Err(Error::InvalidInput("no classes to evaluate".into()));
    }
    let pools: Vec<Vec<usize>> = classes
        .iter()
        .map(|c| match options.pool {
            CandidatePool::SameClass => test.indices_where(|t| t == c),
            CandidatePool::AllTest => (0..test.len()).collect(),
        })
        .collect();
    if let Some((c, _)) = classes.iter().zip(&pools).find(|(_, p)| p.is_empty()) {
        return Err(Error::NotFound(format!("test images of class `{c}`")));
    }
    let images = generator(classes)?;
    if images.batch() != classes.len() {
        return Err(Error::InvalidInput(format!(
            "{method} produced {} images for {} classes",
            images.batch(),
            classes.len()
        )));
    }
    images.ensure_finite(method)?;
    let per_class = classes
        .iter()
        .zip(&pools)
        .enumerate()
        .map(|(i, (c, pool))| {
            let pred = Tensor::new(test.geometry.shape().to_vec(), images.sample(i).to_vec())?;
            let m = psnr_nearest(&pred, &test.tensor(pool), options)?;
            Ok(ClassPsnr {
                class: *c,
                psnr_db: m.psnr_db,
                nearest: pool[m.index],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_db = per_class.iter().map(|c| c.psnr_db).sum::<f64>() / per_class.len() as f64;
    Ok(MethodResult {
        method: method.to_string(),
        modality,
        dataset,
        seed,
        per_class,
        mean_db,
    })
}

/// Mean over pixels of the variance across images (`[n, ...]`).
pub fn pixel_variance(images: &Tensor) -> f64 {
    let n = images.batch() as f64;
    let p = images.sample_len();
    let mut total = 0.0;
    for j in 0..p {
        let col = (0..images.batch()).map(|i| images.sample(i)[j]);
        let mean = col.clone().sum::<f64>() / n;
        total += col.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    }
    total / p as f64
}

/// One (method, modality, dataset) cell averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub method: String,
    pub modality: Modality,
    pub dataset: DatasetKind,
    pub seeds: Vec<u64>,
    pub per_seed_db: Vec<f64>,
    pub mean_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: serde_json::Value,
    pub cells: Vec<ReportCell>,
    pub results: Vec<MethodResult>,
    pub grids: Vec<String>,
}

impl EvalReport {
    pub fn new(config: serde_json::Value, results: Vec<MethodResult>, grids: Vec<String>) -> Self {
        let mut groups: IndexMap<(String, Modality, DatasetKind), Vec<(u64, f64)>> =
            IndexMap::new();
        for r in &results {
            groups
                .entry((r.method.clone(), r.modality, r.dataset))
                .or_default()
                .push((r.seed, r.mean_db));
        }
        let cells = groups
            .into_iter()
            .map(|((method, modality, dataset), runs)| ReportCell {
                method,
                modality,
                dataset,
                seeds: runs.iter().map(|r| r.0).collect(),
                mean_db: runs.iter().map(|r| r.1).sum::<f64>() / runs.len() as f64,
                per_seed_db: runs.into_iter().map(|r| r.1).collect(),
            })
            .collect();
        Self {
            config,
            cells,
            results,
            grids,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Methods as rows, `modality / dataset` as columns, mean dB per cell;
    /// per-seed rows follow when several seeds ran.
    pub fn to_table(&self) -> String {
        let mut columns: Vec<(Modality, DatasetKind)> = self
            .cells
            .iter()
            .map(|c| (c.dataset, c.modality))
            .map(|(d, m)| (m, d))
            .collect();
        columns.sort_by_key(|(m, d)| (d.label(), *m));
        columns.dedup();
        let mut methods: Vec<&str> = Vec::new();
        for c in &self.cells {
            if !methods.contains(&c.method.as_str()) {
                methods.push(&c.method);
            }
        }
        let seeds: Vec<u64> = {
            let mut s: Vec<u64> = self.results.iter().map(|r| r.seed).collect();
            s.sort_unstable();
            s.dedup();
            s
        };
        let header: Vec<String> = std::iter::once("method".to_string())
            .chain(columns.iter().map(|(m, d)| format!("{m} / {}", d.label())))
            .collect();
        let mut rows = vec![header];
        let cell = |method: &str, col: &(Modality, DatasetKind), seed: Option<u64>| -> String {
            let found = match seed {
                None => self
                    .cells
                    .iter()
                    .find(|c| c.method == method && (c.modality, c.dataset) == *col)
                    .map(|c| c.mean_db),
                Some(s) => self
                    .results
                    .iter()
                    .find(|r| r.method == method && (r.modality, r.dataset) == *col && r.seed == s)
                    .map(|r| r.mean_db),
            };
            found.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
        };
        for m in &methods {
            let mut row = vec![m.to_string()];
            row.extend(columns.iter().map(|col| cell(m, col, None)));
            rows.push(row);
        }
        if seeds.len() > 1 {
            for s in &seeds {
                for m in &methods {
                    let mut row = vec![format!("{m} [seed {s}]")];
                    row.extend(columns.iter().map(|col| cell(m, col, Some(*s))));
                    rows.push(row);
                }
            }
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|j| rows.iter().map(|r| r[j].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in rows.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(j, (v, w))| {
                    if j == 0 {
                        format!("{v:<w$}")
                    } else {
                        format!("{v:>w$}")
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
            if i == 0 {
                let _ = writeln!(
                    out,
                    "{}",
                    "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1))
                );
            }
        }
        out
    }
}

/// Tiles `[c, h, w]` images row-major into one image with [`GRID_GAP`]-pixel
/// white separators and border.
pub fn grid_image(images: &[Tensor], cols: usize) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidInput("no images for the grid".into()))?;
    let shape = match first.shape() {
        [c, h, w] => [*c, *h, *w],
        other => {
            return Err(Error::InvalidInput(format!(
                "grid images must be [c, h, w], got {other:?}"
            )))
        }
    };
    if let Some(bad) = images.iter().find(|t| t.shape() != shape) {
        return Err(Error::ShapeMismatch {
            left: bad.shape().to_vec(),
            right: shape.to_vec(),
            context: "grid images must share a shape",
        });
    }
    let [c, h, w] = shape;
    let cols = cols.clamp(1, images.len());
    let rows = images.len().div_ceil(cols);
    let (gh, gw) = (
        rows * (h + GRID_GAP) + GRID_GAP,
        cols * (w + GRID_GAP) + GRID_GAP,
    );
    let mut out = Tensor::full(&[c, gh, gw], 1.0);
    let data = out.data_mut();
    for (k, img) in images.iter().enumerate() {
        let (oy, ox) = (
            GRID_GAP + (k / cols) * (h + GRID_GAP),
            GRID_GAP + (k % cols) * (w + GRID_GAP),
        );
        let src = img.data();
        for ch in 0..c {
            for y in 0..h {
                let s = ch * h * w + y * w;
                let d = ch * gh * gw + (oy + y) * gw + ox;
                data[d..d + w].copy_from_slice(&src[s..s + w]);
            }
        }
    }
    Ok(out)
}

/// Writes [`grid_image`] as an 8-bit PNG.
pub fn render_grid(images: &[Tensor], cols: usize, path: &Path) -> Result<()> {
    imageio::save_png(&grid_image(images, cols)?, path)
}
