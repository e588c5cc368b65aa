//! Fixed per-class text and speech embeddings.

mod mfcc;
mod speech;
mod text;

pub use mfcc::{dct2_ortho, hamming, hz_to_mel, mel_filterbank, mel_to_hz, mfcc, MfccConfig};
pub use speech::{embed_speech, synth_clip, tone, SpeechBank, SpeechClip, SpeechSource};
pub use text::{embed_text, synth_token_table, TableSource, TokenTable, TOKEN_DIM, VOCAB};

use serde::{Deserialize, Serialize};

use crate::datasets::ComboClass;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Speech,
}

impl Modality {
    pub const ALL: [Modality; 2] = [Modality::Text, Modality::Speech];

    pub fn label(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Speech => "speech",
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Modality::Text),
            "speech" => Ok(Modality::Speech),
            other => Err(Error::InvalidInput(format!(
                "unknown modality `{other}` (expected text or speech)"
            ))),
        }
    }
}

/// One fixed embedding `y_z` per class, computed once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEmbeddings {
    pub modality: Modality,
    classes: Vec<ComboClass>,
    vectors: Vec<Vec<f64>>,
}

impl ClassEmbeddings {
    pub fn build(
        modality: Modality,
        classes: &[ComboClass],
        mut embed: impl FnMut(&ComboClass) -> Result<Vec<f64>>,
    ) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::InvalidInput("no classes to embed".into()));
        }
        let mut uniq = classes.to_vec();
        uniq.sort();
        uniq.dedup();
        let vectors = uniq.iter().map(&mut embed).collect::<Result<Vec<_>>>()?;
        let dim = vectors[0].len();
        if vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::InvalidInput(
                "class embeddings differ in width".into(),
            ));
        }
        Ok(Self {
            modality,
            classes: uniq,
            vectors,
        })
    }

    pub fn text(classes: &[ComboClass], table: &TokenTable) -> Result<Self> {
        Self::build(Modality::Text, classes, |c| embed_text(&c.tokens(), table))
    }

    pub fn speech(classes: &[ComboClass], bank: &SpeechBank, config: &MfccConfig) -> Result<Self> {
        Self::build(Modality::Speech, classes, |c| {
            let clips = c
                .tokens()
                .iter()
                .map(|t| bank.clip(t))
                .collect::<Result<Vec<_>>>()?;
            embed_speech(&clips, config)
        })
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[ComboClass] {
        &self.classes
    }

    pub fn position(&self, class: &ComboClass) -> Option<usize> {
        self.classes.binary_search(class).ok()
    }

    pub fn get(&self, class: &ComboClass) -> Result<&[f64]> {
        self.position(class)
            .map(|i| self.vectors[i].as_slice())
            .ok_or_else(|| Error::NotFound(format!("{} embedding for `{class}`", self.modality)))
    }

    /// `[n, dim]` rows for the given classes.
    pub fn rows(&self, classes: &[ComboClass]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(classes.len() * self.dim());
        for c in classes {
            data.extend_from_slice(self.get(c)?);
        }
        Tensor::new(vec![classes.len(), self.dim()], data)
    }

    /// All rows, in class order.
    pub fn table(&self) -> Tensor {
        self.rows(&self.classes).expect("own classes")
    }
}
