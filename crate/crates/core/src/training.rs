//! Shared minibatch/Adam loop.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{seeded_rng, AdamConfig, AdamState, ModelParams, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 128,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

/// Loss terms of one minibatch; `terms[0]` is the optimized total.
pub struct StepOutput {
    pub terms: Vec<f64>,
    pub grads: ModelParams,
}

/// Runs `config.epochs` shuffled passes over `n` samples and returns the
/// sample-weighted mean of every loss term per epoch.
pub fn run_minibatches<F>(
    label: &str,
    params: &mut ModelParams,
    n: usize,
    config: &TrainConfig,
    mut step: F,
) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(&ModelParams, &[usize], &mut SeededRng) -> Result<StepOutput>,
{
    if n == 0 {
        return Err(Error::InvalidInput(format!("{label}: no training samples")));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidInput("batch size must be positive".into()));
    }
    let mut rng = seeded_rng(config.seed);
    let mut adam = AdamState::new(params, config.adam);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut global_step = 0;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sums: Vec<f64> = Vec::new();
        for batch in order.chunks(config.batch_size) {
            let out = step(params, batch, &mut rng)?;
            let total = out.terms[0];
            if !total.is_finite() || !out.grads.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step: global_step,
                    loss: total,
                });
            }
            adam.step(params, &out.grads)?;
            if sums.is_empty() {
                sums = vec![0.0; out.terms.len()];
            }
            for (s, t) in sums.iter_mut().zip(&out.terms) {
                *s += t * batch.len() as f64;
            }
            global_step += 1;
        }
        let means: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
        log::info!("{label} epoch {}/{}: {:?}", epoch + 1, config.epochs, means);
        history.push(means);
    }
    Ok(history)
}

/// Trailing-window moving average.
pub fn smoothed(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(window - 1);
            let s = &values[lo..=i];
            s.iter().sum::<f64>() / s.len() as f64
        })
        .collect()
}
