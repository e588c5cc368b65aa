use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::SpeechClip;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Floor applied to mel energies before the log.
const LOG_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfccConfig {
    pub n_coeffs: usize,
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub n_mels: usize,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            n_coeffs: 13,
            frame_ms: 25.0,
            hop_ms: 10.0,
            n_mels: 26,
        }
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Orthonormal DCT-II, first `k` coefficients.
pub fn dct2_ortho(x: &[f64], k: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..k)
        .map(|j| {
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| v * (PI * j as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)).cos())
                .sum();
            let scale = if j == 0 {
                (1.0 / n).sqrt()
            } else {
                (2.0 / n).sqrt()
            };
            s * scale
        })
        .collect()
}

/// Triangular filters evenly spaced in mel between 0 Hz and Nyquist,
/// evaluated at the `n_fft / 2 + 1` bin frequencies. Row-major `[n_mels][bins]`.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32) -> Vec<Vec<f64>> {
    let nyquist = sample_rate as f64 / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bins = n_fft / 2 + 1;
    (0..n_mels)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..bins)
                .map(|b| {
                    let f = b as f64 * sample_rate as f64 / n_fft as f64;
                    let rise = (f - lo) / (mid - lo);
                    let fall = (hi - f) / (hi - mid);
                    rise.min(fall).max(0.0)
                })
                .collect()
        })
        .collect()
}

/// Frame-wise MFCCs, `[frames, n_coeffs]`.
pub fn mfcc(clip: &SpeechClip, config: &MfccConfig) -> Result<Tensor> {
    let rate = clip.sample_rate as f64;
    let frame_len = (rate * config.frame_ms / 1000.0).round() as usize;
    let hop = ((rate * config.hop_ms / 1000.0).round() as usize).max(1);
    if frame_len == 0 || clip.samples.len() < frame_len {
        return Err(Error::Audio(format!(
            "clip of {} samples is shorter than one {frame_len}-sample frame",
            clip.samples.len()
        )));
    }
    if config.n_coeffs > config.n_mels {
        return Err(Error::InvalidInput(format!(
            "{} coefficients from {} mel bands",
            config.n_coeffs, config.n_mels
        )));
    }
    let n_fft = frame_len.next_power_of_two();
    let window = hamming(frame_len);
    let bank = mel_filterbank(config.n_mels, n_fft, clip.sample_rate);
    let fft = FftPlanner::new().plan_fft_forward(n_fft);
    let frames = 1 + (clip.samples.len() - frame_len) / hop;
    let mut out = Vec::with_capacity(frames * config.n_coeffs);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    for f in 0..frames {
        let start = f * hop;
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (i, (s, w)) in clip.samples[start..start + frame_len]
            .iter()
            .zip(&window)
            .enumerate()
        {
            buf[i].re = s * w;
        }
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..n_fft / 2 + 1].iter().map(|c| c.norm_sqr()).collect();
        let log_mel: Vec<f64> = bank
            .iter()
            .map(|filter| {
                let e: f64 = filter.iter().zip(&power).map(|(w, p)| w * p).sum();
                e.max(LOG_FLOOR).ln()
            })
            .collect();
        out.extend(dct2_ortho(&log_mel, config.n_coeffs));
    }
    Tensor::new(vec![frames, config.n_coeffs], out)
}
