use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{mfcc, MfccConfig, VOCAB};
use crate::datasets::digit_from_word;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SpeechClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl SpeechClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Audio("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Audio("non-finite sample".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Reads 16-bit PCM mono WAV.
    pub fn read_wav(path: &Path) -> Result<Self> {
        let reader = hound::WavReader::open(path)
            .map_err(|e| Error::Audio(format!("{}: {e}", path.display())))?;
        let spec = reader.spec();
        if spec.channels != 1
            || spec.bits_per_sample != 16
            || spec.sample_format != hound::SampleFormat::Int
        {
            return Err(Error::Audio(format!(
                "{}: expected 16-bit PCM mono, found {} channel(s) at {} bits",
                path.display(),
                spec.channels,
                spec.bits_per_sample
            )));
        }
        let samples = reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Audio(format!("{}: {e}", path.display())))?;
        Self::new(samples, spec.sample_rate)
    }

    pub fn write_wav(&self, path: &Path) -> Result<()> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let wrap = |e: hound::Error| Error::Audio(format!("{}: {e}", path.display()));
        let mut w = hound::WavWriter::create(path, spec).map_err(wrap)?;
        for s in &self.samples {
            w.write_sample((s * 32768.0).round().clamp(-32768.0, 32767.0) as i16)
                .map_err(wrap)?;
        }
        w.finalize().map_err(wrap)
    }
}

/// Pure sine tone at amplitude 0.5.
pub fn tone(freq: f64, sample_rate: u32, seconds: f64) -> SpeechClip {
    let n = (sample_rate as f64 * seconds).round() as usize;
    let samples = (0..n)
        .map(|i| 0.5 * (2.0 * PI * freq * i as f64 / sample_rate as f64).sin())
        .collect();
    SpeechClip::new(samples, sample_rate).expect("valid tone")
}

/// Deterministic stand-in "utterance" for a vocabulary word: two tones whose
/// frequencies depend on the word's index, under a raised-cosine envelope.
pub fn synth_clip(word: &str, sample_rate: u32, seconds: f64) -> Result<SpeechClip> {
    let i = VOCAB
        .iter()
        .position(|w| *w == word)
        .ok_or_else(|| Error::UnknownTokens(vec![word.to_string()]))? as f64;
    let (f1, f2) = (300.0 + 170.0 * i, 2400.0 + 310.0 * i);
    let n = (sample_rate as f64 * seconds).round() as usize;
    let samples = (0..n)
        .map(|k| {
            let t = k as f64 / sample_rate as f64;
            let env = 0.5 - 0.5 * (2.0 * PI * k as f64 / n as f64).cos();
            env * (0.6 * (2.0 * PI * f1 * t).sin() + 0.3 * (2.0 * PI * f2 * t).sin())
        })
        .collect();
    SpeechClip::new(samples, sample_rate)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum SpeechSource {
    Synthetic,
    /// Directory of `<word>.wav` files (digits may also be `<digit>.wav`).
    WavDir {
        path: PathBuf,
    },
}

/// One clip per vocabulary word.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeechBank {
    clips: BTreeMap<String, SpeechClip>,
}

impl SpeechBank {
    pub fn synthetic(sample_rate: u32, seconds: f64) -> Result<Self> {
        let clips = VOCAB
            .iter()
            .map(|w| Ok((w.to_string(), synth_clip(w, sample_rate, seconds)?)))
            .collect::<Result<_>>()?;
        Ok(Self { clips })
    }

    /// Loads whichever vocabulary words have a WAV file in `dir`; every clip
    /// must be at `sample_rate`.
    pub fn from_wav_dir(dir: &Path, sample_rate: u32) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::NotFound(format!(
                "speech directory {}",
                dir.display()
            )));
        }
        let mut clips = BTreeMap::new();
        for word in VOCAB {
            let mut candidates = vec![dir.join(format!("{word}.wav"))];
            if let Some(d) = digit_from_word(word) {
                candidates.push(dir.join(format!("{d}.wav")));
            }
            if let Some(path) = candidates.into_iter().find(|p| p.is_file()) {
                let clip = SpeechClip::read_wav(&path)?;
                if clip.sample_rate != sample_rate {
                    return Err(Error::Audio(format!(
                        "{} is sampled at {} Hz, configuration expects {sample_rate} Hz",
                        path.display(),
                        clip.sample_rate
                    )));
                }
                clips.insert(word.to_string(), clip);
            }
        }
        if clips.is_empty() {
            return Err(Error::NotFound(format!("WAV clips in {}", dir.display())));
        }
        Ok(Self { clips })
    }

    pub fn load(source: &SpeechSource, sample_rate: u32, seconds: f64) -> Result<Self> {
        match source {
            SpeechSource::Synthetic => Self::synthetic(sample_rate, seconds),
            SpeechSource::WavDir { path } => Self::from_wav_dir(path, sample_rate),
        }
    }

    pub fn clip(&self, word: &str) -> Result<&SpeechClip> {
        self.clips
            .get(word)
            .ok_or_else(|| Error::UnknownTokens(vec![word.to_string()]))
    }
}

/// Mean MFCC vector per clip, concatenated in clip order.
pub fn embed_speech(clips: &[&SpeechClip], config: &MfccConfig) -> Result<Vec<f64>> {
    if clips.is_empty() {
        return Err(Error::InvalidInput("no clips to embed".into()));
    }
    let mut out = Vec::with_capacity(clips.len() * config.n_coeffs);
    for clip in clips {
        let m = mfcc(clip, config)?;
        let frames = m.batch() as f64;
        for k in 0..config.n_coeffs {
            out.push((0..m.batch()).map(|f| m.sample(f)[k]).sum::<f64>() / frames);
        }
    }
    Ok(out)
}
