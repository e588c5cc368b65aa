//! PNG conversion for channel-first [0, 1] image tensors.

use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn chw(image: &Tensor) -> Result<(usize, usize, usize)> {
    match image.shape() {
        [c, h, w] if *c == 1 || *c == 3 => Ok((*c, *h, *w)),
        [h, w] => Ok((1, *h, *w)),
        other => Err(Error::InvalidInput(format!(
            "expected a [1|3, h, w] image, got {other:?}"
        ))),
    }
}

/// Converts a `[c, h, w]` (or `[h, w]`) tensor to an 8-bit image.
pub fn to_dynamic(image: &Tensor) -> Result<DynamicImage> {
    let (c, h, w) = chw(image)?;
    let d = image.data();
    let plane = h * w;
    Ok(if c == 1 {
        DynamicImage::ImageLuma8(
            GrayImage::from_raw(w as u32, h as u32, d.iter().map(|&v| to_byte(v)).collect())
                .expect("buffer size"),
        )
    } else {
        let mut buf = Vec::with_capacity(3 * plane);
        for i in 0..plane {
            for ch in 0..3 {
                buf.push(to_byte(d[ch * plane + i]));
            }
        }
        DynamicImage::ImageRgb8(RgbImage::from_raw(w as u32, h as u32, buf).expect("buffer size"))
    })
}

pub fn save_png(image: &Tensor, path: &Path) -> Result<()> {
    to_dynamic(image)?.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Reads a PNG back as a channel-first [0, 1] tensor (1 or 3 channels).
pub fn load_png(path: &Path) -> Result<Tensor> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(g) => Tensor::new(
            vec![1, h, w],
            g.into_raw().iter().map(|&p| p as f64 / 255.0).collect(),
        ),
        other => {
            let rgb = other.to_rgb8().into_raw();
            let plane = h * w;
            let mut data = vec![0.0; 3 * plane];
            for (i, px) in rgb.chunks_exact(3).enumerate() {
                for ch in 0..3 {
                    data[ch * plane + i] = px[ch] as f64 / 255.0;
                }
            }
            Tensor::new(vec![3, h, w], data)
        }
    }
}
