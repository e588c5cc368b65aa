//! MNIST IDX containers (big-endian headers, unsigned byte payload).

use std::fs;
use std::path::Path;

use crate::error::{Error, IoContext, Result};
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// A single-digit image with raw 8-bit intensities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledImage {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
    pub label: u8,
}

impl LabeledImage {
    /// `[rows, cols]` tensor scaled to [0, 1].
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.rows, self.cols],
            self.pixels.iter().map(|&p| p as f64 / 255.0).collect(),
        )
        .expect("consistent dims")
    }
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Truncated {
            path: path.to_path_buf(),
            detail: format!("header ends at byte {}", bytes.len()),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::WrongMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Parses an image file; returns `(rows, cols, pixels of every image)`.
pub fn parse_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<Vec<u8>>)> {
    check_magic(bytes, IMAGES_MAGIC, path)?;
    let count = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let size = rows * cols;
    let body = &bytes[16..];
    if body.len() < count * size {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            detail: format!(
                "{count} images of {rows}x{cols} need {} bytes, found {}",
                count * size,
                body.len()
            ),
        });
    }
    let images = body[..count * size]
        .chunks_exact(size.max(1))
        .map(<[u8]>::to_vec)
        .collect();
    Ok((rows, cols, images))
}

pub fn parse_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    check_magic(bytes, LABELS_MAGIC, path)?;
    let count = be_u32(bytes, 4, path)? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            detail: format!("{count} labels declared, {} present", body.len()),
        });
    }
    let labels = body[..count].to_vec();
    if let Some(bad) = labels.iter().find(|&&l| l > 9) {
        return Err(Error::Format(format!(
            "{}: label {bad} is not a digit",
            path.display()
        )));
    }
    Ok(labels)
}

fn combine(
    (rows, cols, images): (usize, usize, Vec<Vec<u8>>),
    labels: Vec<u8>,
) -> Result<Vec<LabeledImage>> {
    if images.len() != labels.len() {
        return Err(Error::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    Ok(images
        .into_iter()
        .zip(labels)
        .map(|(pixels, label)| LabeledImage {
            rows,
            cols,
            pixels,
            label,
        })
        .collect())
}

pub fn load_mnist_idx(image_path: &Path, label_path: &Path) -> Result<Vec<LabeledImage>> {
    let image_bytes = fs::read(image_path).at(image_path)?;
    let label_bytes = fs::read(label_path).at(label_path)?;
    combine(
        parse_images(&image_bytes, image_path)?,
        parse_labels(&label_bytes, label_path)?,
    )
}

/// Parses in-memory image and label containers.
pub fn parse_mnist_idx(image_bytes: &[u8], label_bytes: &[u8]) -> Result<Vec<LabeledImage>> {
    combine(
        parse_images(image_bytes, Path::new("<images>"))?,
        parse_labels(label_bytes, Path::new("<labels>"))?,
    )
}

/// Serializes images and labels as an IDX pair.
pub fn encode_mnist_idx(images: &[LabeledImage]) -> Result<(Vec<u8>, Vec<u8>)> {
    let (rows, cols) = images.first().map_or((28, 28), |i| (i.rows, i.cols));
    let mut img = Vec::with_capacity(16 + images.len() * rows * cols);
    img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&(images.len() as u32).to_be_bytes());
    img.extend_from_slice(&(rows as u32).to_be_bytes());
    img.extend_from_slice(&(cols as u32).to_be_bytes());
    let mut lab = Vec::with_capacity(8 + images.len());
    lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(images.len() as u32).to_be_bytes());
    for i in images {
        if i.rows != rows || i.cols != cols || i.pixels.len() != rows * cols {
            return Err(Error::InvalidInput("images differ in size".into()));
        }
        img.extend_from_slice(&i.pixels);
        lab.push(i.label);
    }
    Ok((img, lab))
}

const BUNDLED_IMAGES: &[u8] = include_bytes!("../../assets/digits-sample-images.idx3-ubyte");
const BUNDLED_LABELS: &[u8] = include_bytes!("../../assets/digits-sample-labels.idx1-ubyte");

/// A 2000-image MNIST subset (200 per digit) shipped with the crate, used
/// when no IDX files are configured.
pub fn bundled_digits() -> Vec<LabeledImage> {
    parse_mnist_idx(BUNDLED_IMAGES, BUNDLED_LABELS).expect("bundled IDX files are valid")
}

/// Looks for the standard training files in `dir` (`train-images-idx3-ubyte`
/// and `train-labels-idx1-ubyte`, also with a `.` instead of the `-` before
/// `idx`).
pub fn find_mnist_train(dir: &Path) -> Option<(std::path::PathBuf, std::path::PathBuf)> {
    for (img, lab) in [
        ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
        ("train-images.idx3-ubyte", "train-labels.idx1-ubyte"),
    ] {
        let (i, l) = (dir.join(img), dir.join(lab));
        if i.is_file() && l.is_file() {
            return Some((i, l));
        }
    }
    None
}
