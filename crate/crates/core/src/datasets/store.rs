//! On-disk dataset directory: `manifest.json` plus `images.cmem`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::synth::{Dataset, ImageSet, Manifest};
use crate::cmem::{self, NamedTensor, TensorValues};
use crate::error::{Error, IoContext, Result};
use crate::imageio;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const IMAGES_FILE: &str = "images.cmem";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestFile {
    format: String,
    pool_source: String,
    counts: SplitCounts,
    #[serde(flatten)]
    manifest: Manifest,
}

pub fn manifest_json(manifest: &Manifest, pool_source: &str) -> Result<String> {
    let file = ManifestFile {
        format: "cmem-dataset/1".into(),
        pool_source: pool_source.into(),
        counts: SplitCounts {
            train: manifest.train.len(),
            test: manifest.test.len(),
        },
        manifest: manifest.clone(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

fn image_tensor(name: &str, set: &ImageSet) -> NamedTensor {
    let g = set.geometry;
    NamedTensor {
        name: name.into(),
        dims: vec![set.len(), g.channels, g.height, g.width],
        values: TensorValues::U8(set.raw().to_vec()),
    }
}

pub fn save_dataset(dataset: &Dataset, pool_source: &str, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).at(dir)?;
    let manifest = manifest_json(&dataset.manifest, pool_source)?;
    fs::write(dir.join(MANIFEST_FILE), manifest).at(dir.join(MANIFEST_FILE))?;
    cmem::write_file(
        &dir.join(IMAGES_FILE),
        &[
            image_tensor("train.images", &dataset.train),
            image_tensor("test.images", &dataset.test),
        ],
    )
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(Error::NotFound(format!(
            "dataset manifest {}",
            manifest_path.display()
        )));
    }
    let text = fs::read_to_string(&manifest_path).at(&manifest_path)?;
    let file: ManifestFile = serde_json::from_str(&text)?;
    let manifest = file.manifest;
    let geometry = manifest.split.kind.geometry();
    let tensors = cmem::read_file(&dir.join(IMAGES_FILE))?;
    let take = |name: &str, records: &[super::synth::SampleRecord]| -> Result<ImageSet> {
        let t = tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Format(format!("{IMAGES_FILE} lacks `{name}`")))?;
        let TensorValues::U8(bytes) = &t.values else {
            return Err(Error::Format(format!("`{name}` is not u8")));
        };
        ImageSet::from_parts(
            geometry,
            bytes.clone(),
            records.iter().map(|r| r.class).collect(),
        )
    };
    let train = take("train.images", &manifest.train)?;
    let test = take("test.images", &manifest.test)?;
    Ok(Dataset {
        manifest,
        train,
        test,
    })
}

/// Writes one sample of `set` as a PNG.
pub fn export_sample_png(set: &ImageSet, index: usize, path: &Path) -> Result<()> {
    imageio::save_png(&set.image(index), path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{bundled_digits, synthesize, DatasetKind, DigitPool, SplitSpec};

    #[test]
    fn save_load_round_trip() {
        let pool = DigitPool::new(bundled_digits()).unwrap();
        let spec = SplitSpec::random(DatasetKind::ColoredDouble, 3, 16, 2).unwrap();
        let ds = synthesize(&pool, &spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, "bundled", dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back, ds);

        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap())
                .unwrap();
        assert_eq!(json["counts"]["train"], 252);
        assert_eq!(json["counts"]["test"], 48);
        assert_eq!(json["split"]["seed"], 2);

        let png = dir.path().join("s.png");
        export_sample_png(&back.train, 0, &png).unwrap();
        let img = imageio::load_png(&png).unwrap();
        assert_eq!(img.shape(), &[3, 28, 56]);
    }

    #[test]
    fn missing_dataset_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(matches!(err, Error::NotFound(_)));
    }
}
