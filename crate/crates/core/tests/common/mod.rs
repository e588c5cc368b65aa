//! Shared test oracles: central finite differences, brute-force kernels and
//! seeded random tensors.
#![allow(dead_code)]

pub mod linear;
pub mod shapes;

use cmem::nn::{
    bce, kl_diag_gaussian, mse, reparameterize, reparameterize_backward, seeded_rng, LayerSpec,
    ModelParams, Network,
};
use cmem::Tensor;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;
/// Magnitude below which errors are measured absolutely.
pub const FD_FLOOR: f64 = 1e-6;

pub fn randn(shape: &[usize], rng: &mut impl Rng, scale: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

pub fn uniform(shape: &[usize], rng: &mut impl Rng, lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(lo..hi)).collect(),
    )
    .unwrap()
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FD_FLOOR)
}

/// Finite-difference stencil.
#[derive(Debug, Clone, Copy)]
pub enum Stencil {
    /// `(f(x+h) - f(x-h)) / 2h`.
    Central(f64),
    /// Fourth-order central difference.
    Central4(f64),
}

impl Stencil {
    fn halved(self) -> Stencil {
        match self {
            Stencil::Central(h) => Stencil::Central(h / 2.0),
            Stencil::Central4(h) => Stencil::Central4(h / 2.0),
        }
    }

    /// `(offset, weight)` pairs; the estimate is `sum(weight * f(x + offset))`.
    fn taps(self) -> Vec<(f64, f64)> {
        match self {
            Stencil::Central(h) => vec![(h, 0.5 / h), (-h, -0.5 / h)],
            Stencil::Central4(h) => vec![
                (h, 8.0 / (12.0 * h)),
                (-h, -8.0 / (12.0 * h)),
                (2.0 * h, -1.0 / (12.0 * h)),
                (-2.0 * h, 1.0 / (12.0 * h)),
            ],
        }
    }

    /// Derivative along entry `i` of an objective given as a sum of terms.
    /// Terms are differenced one by one before summing, which keeps the
    /// cancellation error proportional to each term rather than to the total.
    fn estimate(
        self,
        probe: &mut Tensor,
        i: usize,
        f: &mut impl FnMut(&Tensor) -> Vec<f64>,
    ) -> f64 {
        let orig = probe.data()[i];
        let mut acc: Vec<f64> = Vec::new();
        for (dx, w) in self.taps() {
            probe.data_mut()[i] = orig + dx;
            let terms = f(probe);
            if acc.is_empty() {
                acc = vec![0.0; terms.len()];
            }
            assert_eq!(terms.len(), acc.len(), "objective changed its term count");
            for (a, t) in acc.iter_mut().zip(&terms) {
                *a += w * t;
            }
        }
        probe.data_mut()[i] = orig;
        acc.iter().sum()
    }
}

/// Max relative error of `analytic` against finite differences of the
/// summed objective `f` at `x`, probing at most `max_probes` evenly spaced
/// entries.
///
/// A probe counts only when halving the step moves the estimate by less
/// than the tolerance. Otherwise a ReLU or max-pool switch lies inside the
/// stencil, the function is not differentiable there, and the probe is
/// tallied in `FdReport::kinked` instead.
pub fn check_tensor_terms(
    x: &Tensor,
    analytic: &Tensor,
    max_probes: usize,
    stencil: Stencil,
    mut f: impl FnMut(&Tensor) -> Vec<f64>,
) -> FdReport {
    assert_eq!(x.shape(), analytic.shape());
    let n = x.len();
    let stride = (n / max_probes.max(1)).max(1);
    let mut report = FdReport::default();
    let mut probe = x.clone();
    for i in (0..n).step_by(stride) {
        report.probes += 1;
        let full = stencil.estimate(&mut probe, i, &mut f);
        let half = stencil.halved().estimate(&mut probe, i, &mut f);
        if rel_err(full, half) <= FD_TOL {
            report.worst = report.worst.max(rel_err(analytic.data()[i], full));
        } else {
            report.kinked += 1;
        }
    }
    report
}

pub fn check_tensor(
    x: &Tensor,
    analytic: &Tensor,
    max_probes: usize,
    mut f: impl FnMut(&Tensor) -> f64,
) -> f64 {
    check_tensor_terms(x, analytic, max_probes, Stencil::Central(FD_STEP), |t| {
        vec![f(t)]
    })
    .assert_mostly_smooth()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FdReport {
    pub worst: f64,
    pub probes: usize,
    pub kinked: usize,
}

impl FdReport {
    pub fn merge(self, other: FdReport) -> FdReport {
        FdReport {
            worst: self.worst.max(other.worst),
            probes: self.probes + other.probes,
            kinked: self.kinked + other.kinked,
        }
    }

    /// Worst error, after asserting that non-differentiable probes are rare.
    pub fn assert_mostly_smooth(self) -> f64 {
        assert!(
            self.kinked * 20 <= self.probes,
            "{} of {} probes sit on a kink",
            self.kinked,
            self.probes
        );
        self.worst
    }
}

/// Same as [`check_tensor_terms`] over every tensor of a parameter set.
pub fn check_params_terms(
    params: &ModelParams,
    grads: &ModelParams,
    probes_per_tensor: usize,
    stencil: Stencil,
    mut f: impl FnMut(&ModelParams) -> Vec<f64>,
) -> FdReport {
    let mut report = FdReport::default();
    let mut probe = params.clone();
    for name in params.names().map(String::from).collect::<Vec<_>>() {
        let x = params.get(&name).unwrap().clone();
        let g = grads.get(&name).unwrap();
        let r = check_tensor_terms(&x, g, probes_per_tensor, stencil, |t| {
            *probe.get_mut(&name).unwrap() = t.clone();
            f(&probe)
        });
        *probe.get_mut(&name).unwrap() = x;
        report = report.merge(r);
    }
    report
}

pub fn check_params(
    params: &ModelParams,
    grads: &ModelParams,
    probes_per_tensor: usize,
    mut f: impl FnMut(&ModelParams) -> f64,
) -> f64 {
    check_params_terms(
        params,
        grads,
        probes_per_tensor,
        Stencil::Central(FD_STEP),
        |p| vec![f(p)],
    )
    .assert_mostly_smooth()
}

/// Per-pixel binary cross-entropy terms, each divided by `scale`.
pub fn bce_terms(pred: &Tensor, target: &Tensor, scale: f64) -> Vec<f64> {
    pred.data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let p = p.clamp(cmem::nn::BCE_EPS, 1.0 - cmem::nn::BCE_EPS);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln()) / scale
        })
        .collect()
}

/// Per-coordinate KL terms of `N(mu, exp(log_var))` against `N(0, I)`,
/// each divided by `scale`.
pub fn kl_terms(mu: &Tensor, log_var: &Tensor, scale: f64) -> Vec<f64> {
    mu.data()
        .iter()
        .zip(log_var.data())
        .map(|(&m, &lv)| -0.5 * (1.0 + lv - m * m - lv.exp()) / scale)
        .collect()
}

/// Checks one single-layer network on a random input with the linear
/// functional `sum(out * r)`; returns `(param error, input error)`.
pub fn check_layer(layer: LayerSpec, input: &[usize], seed: u64) -> (f64, f64) {
    let mut rng = seeded_rng(seed);
    let net = Network::new("probe", vec![layer]).unwrap();
    let mut params = ModelParams::new();
    net.init(&mut params, &mut rng);
    for (_, t) in params.iter_mut() {
        *t = randn(t.shape(), &mut rng, 0.5);
    }
    let x = randn(input, &mut rng, 1.0);
    let (out, tape) = net.forward(&params, &x).unwrap();
    let r = randn(out.shape(), &mut rng, 1.0);
    let objective = |p: &ModelParams, x: &Tensor| {
        let y = net.predict(p, x).unwrap();
        y.data()
            .iter()
            .zip(r.data())
            .map(|(a, b)| a * b)
            .sum::<f64>()
    };
    let mut grads = params.zeros_like();
    let gx = net.backward(&params, &tape, &r, &mut grads).unwrap();
    let pe = if params.is_empty() {
        0.0
    } else {
        check_params(&params, &grads, 40, |p| objective(p, &x))
    };
    let ie = check_tensor(&x, &gx, 60, |xx| objective(&params, xx));
    (pe, ie)
}

/// Worst relative error of every loss function over one seeded instance.
pub fn check_losses(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = seeded_rng(seed);
    let shape = [3, 5];
    let pred = randn(&shape, &mut rng, 1.0);
    let target = randn(&shape, &mut rng, 1.0);
    let m = mse(&pred, &target).unwrap();
    let e_mse = check_tensor(&pred, &m.grad, 15, |p| mse(p, &target).unwrap().value);

    let p = uniform(&shape, &mut rng, 0.05, 0.95);
    let t = uniform(&shape, &mut rng, 0.0, 1.0);
    let b = bce(&p, &t).unwrap();
    let e_bce = check_tensor(&p, &b.grad, 15, |pp| bce(pp, &t).unwrap().value);

    let mu = randn(&shape, &mut rng, 1.0);
    let lv = randn(&shape, &mut rng, 0.5);
    let kl = kl_diag_gaussian(&mu, &lv).unwrap();
    let e_kl_mu = check_tensor(&mu, &kl.grad_mu, 15, |m| {
        kl_diag_gaussian(m, &lv).unwrap().value
    });
    let e_kl_lv = check_tensor(&lv, &kl.grad_log_var, 15, |l| {
        kl_diag_gaussian(&mu, l).unwrap().value
    });

    let eps = randn(&shape, &mut rng, 1.0);
    let r = randn(&shape, &mut rng, 1.0);
    let dot = |z: &Tensor| {
        z.data()
            .iter()
            .zip(r.data())
            .map(|(a, b)| a * b)
            .sum::<f64>()
    };
    let (g_mu, g_lv) = reparameterize_backward(&lv, &eps, &r);
    let e_rep_mu = check_tensor(&mu, &g_mu, 15, |m| {
        dot(&reparameterize(m, &lv, &eps).unwrap())
    });
    let e_rep_lv = check_tensor(&lv, &g_lv, 15, |l| {
        dot(&reparameterize(&mu, l, &eps).unwrap())
    });

    vec![
        ("mse", e_mse),
        ("bce", e_bce),
        ("kl", e_kl_mu.max(e_kl_lv)),
        ("reparameterize", e_rep_mu.max(e_rep_lv)),
    ]
}

/// Every layer kind with a few shapes; returns `(label, worst error)` over
/// `instances` seeds each.
pub fn layer_suite(instances: u64) -> Vec<(String, f64)> {
    let cases: Vec<(&str, LayerSpec, Vec<usize>)> = vec![
        ("dense", LayerSpec::dense(7, 5), vec![3, 7]),
        ("conv2d 3x3", LayerSpec::conv(2, 3, 3), vec![2, 2, 6, 8]),
        ("conv2d 5x5", LayerSpec::conv(1, 2, 5), vec![2, 1, 6, 6]),
        ("maxpool2x2", LayerSpec::Maxpool2x2, vec![2, 2, 4, 6]),
        ("upsample2x2", LayerSpec::Upsample2x2, vec![2, 2, 3, 2]),
        ("relu", LayerSpec::Relu, vec![4, 9]),
        ("sigmoid", LayerSpec::Sigmoid, vec![4, 9]),
        ("reshape", LayerSpec::reshape(&[2, 3, 2]), vec![3, 12]),
    ];
    cases
        .into_iter()
        .map(|(label, layer, shape)| {
            let worst = (0..instances)
                .map(|s| {
                    let (p, i) = check_layer(layer.clone(), &shape, 1000 + s);
                    p.max(i)
                })
                .fold(0.0, f64::max);
            (label.to_string(), worst)
        })
        .collect()
}

pub fn loss_suite(instances: u64) -> Vec<(String, f64)> {
    let mut worst: Vec<(String, f64)> = Vec::new();
    for s in 0..instances {
        for (label, e) in check_losses(2000 + s) {
            match worst.iter_mut().find(|(l, _)| l == label) {
                Some(w) => w.1 = w.1.max(e),
                None => worst.push((label.to_string(), e)),
            }
        }
    }
    worst
}

/// Brute-force `x W + b`.
pub fn naive_dense(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let (n, k) = (x.shape()[0], x.shape()[1]);
    let m = w.shape()[1];
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            let mut s = b.data()[j];
            for l in 0..k {
                s += x.data()[i * k + l] * w.data()[l * m + j];
            }
            out[i * m + j] = s;
        }
    }
    Tensor::new(vec![n, m], out).unwrap()
}

/// Quadruple-loop same-padded cross-correlation.
pub fn naive_conv(x: &Tensor, f: &Tensor, b: &Tensor) -> Tensor {
    let [n, c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let [fo, _, k, _] = [f.shape()[0], f.shape()[1], f.shape()[2], f.shape()[3]];
    let p = (k / 2) as isize;
    let mut out = vec![0.0; n * fo * h * w];
    for s in 0..n {
        for o in 0..fo {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = b.data()[o];
                    for ch in 0..c {
                        for dy in 0..k {
                            for dx in 0..k {
                                let iy = y as isize + dy as isize - p;
                                let ix = xx as isize + dx as isize - p;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xv =
                                    x.data()[((s * c + ch) * h + iy as usize) * w + ix as usize];
                                let fv = f.data()[((o * c + ch) * k + dy) * k + dx];
                                acc += xv * fv;
                            }
                        }
                    }
                    out[((s * fo + o) * h + y) * w + xx] = acc;
                }
            }
        }
    }
    Tensor::new(vec![n, fo, h, w], out).unwrap()
}

/// A small split built from the bundled digit subset.
pub fn small_dataset(
    kind: cmem::datasets::DatasetKind,
    per_class_count: usize,
    seed: u64,
) -> cmem::datasets::Dataset {
    use cmem::datasets::{bundled_digits, synthesize, DigitPool, SplitSpec};
    let pool = DigitPool::new(bundled_digits()).unwrap();
    synthesize(
        &pool,
        &SplitSpec::random(kind, per_class_count, 16, seed).unwrap(),
    )
    .unwrap()
}

/// Runs `cases` random nearest-image queries and returns how many disagree
/// with an exhaustive scan (index, or PSNR beyond 1e-9 dB).
pub fn nearest_disagreements(cases: usize, seed: u64) -> usize {
    use cmem::evaluation::{psnr_nearest, PsnrOptions};
    let mut rng = seeded_rng(seed);
    let options = PsnrOptions::default();
    let mut bad = 0;
    for _ in 0..cases {
        let n = rng.random_range(1..40);
        let shape = [n, 1, 4, 6];
        let candidates = uniform(&shape, &mut rng, 0.0, 1.0);
        let pred = uniform(&[1, 4, 6], &mut rng, 0.0, 1.0);
        let mut best = (usize::MAX, f64::INFINITY);
        for i in 0..n {
            let mut d = 0.0;
            for j in 0..24 {
                let e = candidates.data()[i * 24 + j] - pred.data()[j];
                d += e * e;
            }
            if d < best.1 {
                best = (i, d);
            }
        }
        let mse = best.1 / 24.0;
        let expected = 10.0 * (1.0 / mse).log10();
        let got = psnr_nearest(&pred, &candidates, &options).unwrap();
        if got.index != best.0 || (got.psnr_db - expected).abs() > 1e-9 {
            bad += 1;
        }
    }
    bad
}
