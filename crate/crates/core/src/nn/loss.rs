//! Losses and the VAE sampling helpers. Each loss returns its value together
//! with the gradient with respect to the prediction.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Probability clamp applied inside binary cross-entropy.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct LossValue {
    pub value: f64,
    pub grad: Tensor,
}

/// Mean of squared differences.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<LossValue> {
    pred.expect_same_shape(target, "mse")?;
    let n = pred.len() as f64;
    let mut value = 0.0;
    let grad = pred
        .zip_map(target, |p, t| 2.0 * (p - t) / n)
        .expect("same shape");
    for (p, t) in pred.data().iter().zip(target.data()) {
        value += (p - t) * (p - t);
    }
    Ok(LossValue {
        value: value / n,
        grad,
    })
}

/// Mean binary cross-entropy with probabilities clamped to
/// `[BCE_EPS, 1 - BCE_EPS]`. The gradient is evaluated at the clamped
/// probability.
pub fn bce(pred: &Tensor, target: &Tensor) -> Result<LossValue> {
    pred.expect_same_shape(target, "bce")?;
    if let Some(t) = target.data().iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::InvalidInput(format!(
            "bce target {t} outside [0, 1]"
        )));
    }
    let n = pred.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
        value -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
        grad.push((-t / p + (1.0 - t) / (1.0 - p)) / n);
    }
    Ok(LossValue {
        value: value / n,
        grad: Tensor::new(pred.shape().to_vec(), grad)?,
    })
}

#[derive(Debug, Clone)]
pub struct KlValue {
    pub value: f64,
    pub grad_mu: Tensor,
    pub grad_log_var: Tensor,
}

/// KL(N(mu, exp(log_var)) || N(0, I)), summed over latent dimensions and
/// averaged over the batch (leading dimension).
pub fn kl_diag_gaussian(mu: &Tensor, log_var: &Tensor) -> Result<KlValue> {
    mu.expect_same_shape(log_var, "kl")?;
    let batch = if mu.shape().len() > 1 { mu.batch() } else { 1 } as f64;
    let mut value = 0.0;
    let mut gm = Vec::with_capacity(mu.len());
    let mut gl = Vec::with_capacity(mu.len());
    for (&m, &lv) in mu.data().iter().zip(log_var.data()) {
        let var = lv.exp();
        value += -0.5 * (1.0 + lv - m * m - var);
        gm.push(m / batch);
        gl.push(0.5 * (var - 1.0) / batch);
    }
    Ok(KlValue {
        value: value / batch,
        grad_mu: Tensor::new(mu.shape().to_vec(), gm)?,
        grad_log_var: Tensor::new(mu.shape().to_vec(), gl)?,
    })
}

/// `z = mu + exp(log_var / 2) * eps`.
pub fn reparameterize(mu: &Tensor, log_var: &Tensor, eps: &Tensor) -> Result<Tensor> {
    mu.expect_same_shape(log_var, "reparameterize")?;
    mu.expect_same_shape(eps, "reparameterize")?;
    let data = mu
        .data()
        .iter()
        .zip(log_var.data())
        .zip(eps.data())
        .map(|((&m, &lv), &e)| m + (0.5 * lv).exp() * e)
        .collect();
    Tensor::new(mu.shape().to_vec(), data)
}

/// Gradients of [`reparameterize`] with respect to `(mu, log_var)`.
pub fn reparameterize_backward(
    log_var: &Tensor,
    eps: &Tensor,
    grad_z: &Tensor,
) -> (Tensor, Tensor) {
    let grad_log_var = log_var
        .data()
        .iter()
        .zip(eps.data())
        .zip(grad_z.data())
        .map(|((&lv, &e), &g)| g * e * 0.5 * (0.5 * lv).exp())
        .collect();
    (
        grad_z.clone(),
        Tensor::new(log_var.shape().to_vec(), grad_log_var).expect("same shape"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal, Uniform};

    fn v(data: &[f64]) -> Tensor {
        Tensor::new(vec![data.len()], data.to_vec()).unwrap()
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&v(&[0., 0.]), &v(&[1., 1.])).unwrap().value, 1.0);
        assert!(mse(&v(&[0.]), &v(&[1., 1.])).is_err());
    }

    #[test]
    fn bce_examples() {
        let l = bce(&v(&[0.5]), &v(&[1.0])).unwrap().value;
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        for t in [0.0, 1.0] {
            let l = bce(&v(&[t]), &v(&[t])).unwrap().value;
            assert!((0.0..2e-7).contains(&l), "{l}");
        }
        assert!(bce(&v(&[0.5]), &v(&[1.5])).is_err());
        assert!(bce(&v(&[0.5]), &v(&[-0.1])).is_err());
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_diag_gaussian(&v(&[0.0]), &v(&[0.0])).unwrap().value, 0.0);
        let k = kl_diag_gaussian(&v(&[1.0]), &v(&[0.0])).unwrap().value;
        assert!((k - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kl_is_nonnegative_over_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = Uniform::new(-4.0, 4.0).unwrap();
        for _ in 0..1000 {
            let mu: Vec<f64> = (0..5).map(|_| u.sample(&mut rng)).collect();
            let lv: Vec<f64> = (0..5).map(|_| u.sample(&mut rng)).collect();
            let k = kl_diag_gaussian(&v(&mu), &v(&lv)).unwrap().value;
            assert!(k >= 0.0, "{k}");
        }
    }

    #[test]
    fn reparameterize_examples() {
        let mu = v(&[0.3, -1.0]);
        let z = reparameterize(&mu, &v(&[1.0, -2.0]), &v(&[0.0, 0.0])).unwrap();
        assert_eq!(z, mu);
        let z = reparameterize(&mu, &v(&[0.0, 0.0]), &v(&[0.5, 2.0])).unwrap();
        assert_eq!(z.data(), &[0.8, 1.0]);
    }

    #[test]
    fn reparameterize_monte_carlo_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let eps: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let z = reparameterize(
            &Tensor::full(&[n], 0.3),
            &Tensor::zeros(&[n]),
            &Tensor::new(vec![n], eps).unwrap(),
        )
        .unwrap();
        assert!((z.mean() - 0.3).abs() < 0.02);
    }
}
