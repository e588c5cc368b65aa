//! Forward and backward kernels for the fixed layer set.
//!
//! Images are laid out `[batch, channels, height, width]`. Convolutions are
//! stride-1 cross-correlations with "same" zero padding, lowered to GEMM via
//! im2col.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `c = a·b + beta·c` for row-major `a: m×k`, `b: k×n`, `c: m×n`; either
/// operand may be read transposed (then its storage is `k×m` / `n×k`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_transposed: bool,
    b: &[f64],
    b_transposed: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_transposed { (1, m) } else { (k, 1) };
    let (rsb, csb) = if b_transposed { (1, k) } else { (n, 1) };
    // SAFETY: slice lengths checked above; strides describe in-bounds
    // row-major (or transposed row-major) layouts of exactly those lengths.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `y = x·W + b` with `x` flattened to `[batch, in]`.
pub fn dense_forward(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (fan_in, fan_out) = match weight.shape() {
        [i, o] => (*i, *o),
        _ => return Err(Error::InvalidLayer("dense weight must be rank 2".into())),
    };
    if x.sample_len() != fan_in || bias.shape() != [fan_out] {
        return Err(Error::ShapeMismatch {
            left: x.shape().to_vec(),
            right: weight.shape().to_vec(),
            context: "dense input vs weight",
        });
    }
    let batch = x.batch();
    let mut out = Vec::with_capacity(batch * fan_out);
    for _ in 0..batch {
        out.extend_from_slice(bias.data());
    }
    gemm(
        batch,
        fan_in,
        fan_out,
        x.data(),
        false,
        weight.data(),
        false,
        1.0,
        &mut out,
    );
    Tensor::new(vec![batch, fan_out], out)
}

/// Accumulates weight/bias gradients and returns the input gradient.
pub fn dense_backward(
    x: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    grad_weight: &mut Tensor,
    grad_bias: &mut Tensor,
) -> Tensor {
    let (fan_in, fan_out) = (weight.shape()[0], weight.shape()[1]);
    let batch = x.batch();
    gemm(
        fan_in,
        batch,
        fan_out,
        x.data(),
        true,
        grad_out.data(),
        false,
        1.0,
        grad_weight.data_mut(),
    );
    let gb = grad_bias.data_mut();
    for row in grad_out.data().chunks_exact(fan_out) {
        for (g, v) in gb.iter_mut().zip(row) {
            *g += v;
        }
    }
    let mut grad_in = vec![0.0; batch * fan_in];
    gemm(
        batch,
        fan_out,
        fan_in,
        grad_out.data(),
        false,
        weight.data(),
        true,
        0.0,
        &mut grad_in,
    );
    Tensor::new(x.shape().to_vec(), grad_in).expect("input shape")
}

fn dims4(x: &Tensor, what: &str) -> Result<(usize, usize, usize, usize)> {
    match x.shape() {
        [b, c, h, w] => Ok((*b, *c, *h, *w)),
        other => Err(Error::InvalidInput(format!(
            "{what} expects [batch, channels, height, width], got {other:?}"
        ))),
    }
}

fn im2col(img: &[f64], c: usize, h: usize, w: usize, k: usize, cols: &mut [f64]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ch in 0..c {
        let plane = &img[ch * hw..(ch + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ch * k + ky) * k + kx) * hw;
                let dst = &mut cols[row..row + hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    let line = &mut dst[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    for (x, out) in line.iter_mut().enumerate() {
                        let sx = x as isize + dx;
                        *out = if sx < 0 || sx >= w as isize {
                            0.0
                        } else {
                            src[sx as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], c: usize, h: usize, w: usize, k: usize, img: &mut [f64]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ch in 0..c {
        let plane = &mut img[ch * hw..(ch + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ch * k + ky) * k + kx) * hw;
                let src = &cols[row..row + hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    for x in 0..w {
                        let sx = x as isize + dx;
                        if sx >= 0 && sx < w as isize {
                            dst[sx as usize] += src[y * w + x];
                        }
                    }
                }
            }
        }
    }
}

fn conv_dims(x: &Tensor, filters: &Tensor) -> Result<(usize, usize, usize, usize, usize, usize)> {
    let (b, c, h, w) = dims4(x, "conv2d")?;
    let (f, fc, k, k2) = match filters.shape() {
        [f, c, k, k2] => (*f, *c, *k, *k2),
        other => {
            return Err(Error::InvalidLayer(format!(
                "conv2d filters must be [filters, channels, k, k], got {other:?}"
            )))
        }
    };
    if k != k2 || k % 2 == 0 {
        return Err(Error::InvalidLayer(format!(
            "conv2d kernel must be square and odd, got {k}x{k2}"
        )));
    }
    if fc != c {
        return Err(Error::ShapeMismatch {
            left: x.shape().to_vec(),
            right: filters.shape().to_vec(),
            context: "conv2d input channels vs filters",
        });
    }
    Ok((b, c, h, w, f, k))
}

/// Stride-1 "same" cross-correlation.
pub fn conv2d_forward(x: &Tensor, filters: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (b, c, h, w, f, k) = conv_dims(x, filters)?;
    if bias.shape() != [f] {
        return Err(Error::ShapeMismatch {
            left: bias.shape().to_vec(),
            right: vec![f],
            context: "conv2d bias",
        });
    }
    let hw = h * w;
    let ckk = c * k * k;
    let mut cols = vec![0.0; ckk * hw];
    let mut out = vec![0.0; b * f * hw];
    for s in 0..b {
        im2col(x.sample(s), c, h, w, k, &mut cols);
        let dst = &mut out[s * f * hw..(s + 1) * f * hw];
        for (fi, plane) in dst.chunks_exact_mut(hw).enumerate() {
            plane.fill(bias.data()[fi]);
        }
        gemm(f, ckk, hw, filters.data(), false, &cols, false, 1.0, dst);
    }
    Tensor::new(vec![b, f, h, w], out)
}

pub fn conv2d_backward(
    x: &Tensor,
    filters: &Tensor,
    grad_out: &Tensor,
    grad_filters: &mut Tensor,
    grad_bias: &mut Tensor,
) -> Tensor {
    let (b, c, h, w, f, k) = conv_dims(x, filters).expect("validated in forward");
    let hw = h * w;
    let ckk = c * k * k;
    let mut cols = vec![0.0; ckk * hw];
    let mut dcols = vec![0.0; ckk * hw];
    let mut grad_in = vec![0.0; b * c * hw];
    for s in 0..b {
        im2col(x.sample(s), c, h, w, k, &mut cols);
        let g = grad_out.sample(s);
        gemm(
            f,
            hw,
            ckk,
            g,
            false,
            &cols,
            true,
            1.0,
            grad_filters.data_mut(),
        );
        for (fi, plane) in g.chunks_exact(hw).enumerate() {
            grad_bias.data_mut()[fi] += plane.iter().sum::<f64>();
        }
        gemm(ckk, f, hw, filters.data(), true, g, false, 0.0, &mut dcols);
        col2im(
            &dcols,
            c,
            h,
            w,
            k,
            &mut grad_in[s * c * hw..(s + 1) * c * hw],
        );
    }
    Tensor::new(x.shape().to_vec(), grad_in).expect("input shape")
}

pub fn maxpool2x2(x: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = dims4(x, "maxpool2x2")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "maxpool2x2 needs even spatial dims, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let src = x.data();
    let mut out = Vec::with_capacity(b * c * oh * ow);
    for plane in src.chunks_exact(h * w) {
        for y in 0..oh {
            for xx in 0..ow {
                let i = 2 * y * w + 2 * xx;
                let m = plane[i]
                    .max(plane[i + 1])
                    .max(plane[i + w])
                    .max(plane[i + w + 1]);
                out.push(m);
            }
        }
    }
    Tensor::new(vec![b, c, oh, ow], out)
}

/// Routes each window's gradient to its first maximal element.
pub fn maxpool2x2_backward(x: &Tensor, grad_out: &Tensor) -> Tensor {
    let (_, _, h, w) = dims4(x, "maxpool2x2").expect("validated in forward");
    let (oh, ow) = (h / 2, w / 2);
    let mut grad_in = vec![0.0; x.len()];
    for (p, (plane, gplane)) in x
        .data()
        .chunks_exact(h * w)
        .zip(grad_out.data().chunks_exact(oh * ow))
        .enumerate()
    {
        let dst = &mut grad_in[p * h * w..(p + 1) * h * w];
        for y in 0..oh {
            for xx in 0..ow {
                let base = 2 * y * w + 2 * xx;
                let mut best = base;
                for cand in [base + 1, base + w, base + w + 1] {
                    if plane[cand] > plane[best] {
                        best = cand;
                    }
                }
                dst[best] += gplane[y * ow + xx];
            }
        }
    }
    Tensor::new(x.shape().to_vec(), grad_in).expect("input shape")
}

/// Nearest-neighbour 2x up-sampling.
pub fn upsample2x2(x: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = dims4(x, "upsample2x2")?;
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = Vec::with_capacity(b * c * oh * ow);
    for plane in x.data().chunks_exact(h * w) {
        for y in 0..oh {
            let row = &plane[(y / 2) * w..(y / 2 + 1) * w];
            for xx in 0..ow {
                out.push(row[xx / 2]);
            }
        }
    }
    Tensor::new(vec![b, c, oh, ow], out)
}

pub fn upsample2x2_backward(x: &Tensor, grad_out: &Tensor) -> Tensor {
    let (_, _, h, w) = dims4(x, "upsample2x2").expect("validated in forward");
    let ow = 2 * w;
    let mut grad_in = vec![0.0; x.len()];
    for (gplane, dst) in grad_out
        .data()
        .chunks_exact(4 * h * w)
        .zip(grad_in.chunks_exact_mut(h * w))
    {
        for (i, g) in gplane.iter().enumerate() {
            let (y, xx) = (i / ow, i % ow);
            dst[(y / 2) * w + xx / 2] += g;
        }
    }
    Tensor::new(x.shape().to_vec(), grad_in).expect("input shape")
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Tensor {
    x.zip_map(grad_out, |v, g| if v > 0.0 { g } else { 0.0 })
        .expect("same shape")
}

pub fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

/// Takes the sigmoid *output*.
pub fn sigmoid_backward(y: &Tensor, grad_out: &Tensor) -> Tensor {
    y.zip_map(grad_out, |s, g| g * s * (1.0 - s))
        .expect("same shape")
}
