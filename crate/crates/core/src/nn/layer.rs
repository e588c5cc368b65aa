use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ops;
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One stage of a feed-forward stack.
///
/// Dense layers flatten everything after the batch dimension. Convolutions are
/// stride 1 with "same" zero padding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        in_channels: usize,
        filters: usize,
        kernel: usize,
    },
    Maxpool2x2,
    Upsample2x2,
    Relu,
    Sigmoid,
    /// Reinterprets each sample with the given per-sample shape.
    Reshape {
        shape: Vec<usize>,
    },
}

impl LayerSpec {
    pub fn dense(inputs: usize, outputs: usize) -> Self {
        Self::Dense { inputs, outputs }
    }

    pub fn conv(in_channels: usize, filters: usize, kernel: usize) -> Self {
        Self::Conv2d {
            in_channels,
            filters,
            kernel,
        }
    }

    pub fn reshape(shape: &[usize]) -> Self {
        Self::Reshape {
            shape: shape.to_vec(),
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, Self::Dense { .. } | Self::Conv2d { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Dense { inputs, outputs } if *inputs == 0 || *outputs == 0 => {
                Err(Error::InvalidLayer("dense widths must be positive".into()))
            }
            Self::Conv2d { kernel, .. } if kernel % 2 == 0 => Err(Error::InvalidLayer(format!(
                "conv2d kernel {kernel}x{kernel} is even; only odd kernels support same padding"
            ))),
            Self::Conv2d {
                in_channels,
                filters,
                ..
            } if *in_channels == 0 || *filters == 0 => Err(Error::InvalidLayer(
                "conv2d channel counts must be positive".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let numel: usize = input.iter().product();
        match self {
            Self::Dense { inputs, outputs } => {
                if numel != *inputs {
                    return Err(Error::ShapeMismatch {
                        left: input.to_vec(),
                        right: vec![*inputs, *outputs],
                        context: "dense input vs weight",
                    });
                }
                Ok(vec![*outputs])
            }
            Self::Conv2d {
                in_channels,
                filters,
                ..
            } => match input {
                [c, h, w] if c == in_channels => Ok(vec![*filters, *h, *w]),
                _ => Err(Error::InvalidLayer(format!(
                    "conv2d with {in_channels} input channels cannot take {input:?}"
                ))),
            },
            Self::Maxpool2x2 => match input {
                [c, h, w] if h % 2 == 0 && w % 2 == 0 => Ok(vec![*c, h / 2, w / 2]),
                _ => Err(Error::InvalidLayer(format!(
                    "maxpool2x2 cannot take {input:?}"
                ))),
            },
            Self::Upsample2x2 => match input {
                [c, h, w] => Ok(vec![*c, h * 2, w * 2]),
                _ => Err(Error::InvalidLayer(format!(
                    "upsample2x2 cannot take {input:?}"
                ))),
            },
            Self::Relu | Self::Sigmoid => Ok(input.to_vec()),
            Self::Reshape { shape } => {
                if shape.iter().product::<usize>() != numel {
                    return Err(Error::ShapeMismatch {
                        left: input.to_vec(),
                        right: shape.clone(),
                        context: "reshape",
                    });
                }
                Ok(shape.clone())
            }
        }
    }

    /// `(fan_in, fan_out)` used for Glorot scaling.
    fn fans(&self) -> (usize, usize) {
        match self {
            Self::Dense { inputs, outputs } => (*inputs, *outputs),
            Self::Conv2d {
                in_channels,
                filters,
                kernel,
            } => (in_channels * kernel * kernel, filters * kernel * kernel),
            _ => (0, 0),
        }
    }

    fn weight_shape(&self) -> Vec<usize> {
        match self {
            Self::Dense { inputs, outputs } => vec![*inputs, *outputs],
            Self::Conv2d {
                in_channels,
                filters,
                kernel,
            } => vec![*filters, *in_channels, *kernel, *kernel],
            _ => Vec::new(),
        }
    }

    fn bias_len(&self) -> usize {
        match self {
            Self::Dense { outputs, .. } => *outputs,
            Self::Conv2d { filters, .. } => *filters,
            _ => 0,
        }
    }
}

/// Intermediate values recorded by [`Network::forward`] for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    network: String,
    /// `activations[i]` is the input of layer `i`; the last entry is the output.
    activations: Vec<Tensor>,
}

impl Tape {
    pub fn output(&self) -> Option<&Tensor> {
        self.activations.last()
    }
}

/// A named feed-forward stack whose parameters live in a shared
/// [`ModelParams`] under `"{name}.{layer}.weight"` / `"{name}.{layer}.bias"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Network {
    name: String,
    layers: Vec<LayerSpec>,
}

impl Network {
    pub fn new(name: impl Into<String>, layers: Vec<LayerSpec>) -> Result<Self> {
        for layer in &layers {
            layer.validate()?;
        }
        Ok(Self {
            name: name.into(),
            layers,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn weight_name(&self, layer: usize) -> String {
        format!("{}.{layer}.weight", self.name)
    }

    pub fn bias_name(&self, layer: usize) -> String {
        format!("{}.{layer}.bias", self.name)
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(&self, params: &mut ModelParams, rng: &mut impl Rng) {
        for (i, layer) in self.layers.iter().enumerate() {
            if !layer.has_params() {
                continue;
            }
            let (fan_in, fan_out) = layer.fans();
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let shape = layer.weight_shape();
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| rng.random_range(-limit..limit)).collect();
            params.insert(
                self.weight_name(i),
                Tensor::new(shape, data).expect("shape"),
            );
            params.insert(self.bias_name(i), Tensor::zeros(&[layer.bias_len()]));
        }
    }

    /// Per-sample shapes after every layer, starting with `input`.
    pub fn trace_shapes(&self, input: &[usize]) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![input.to_vec()];
        for layer in &self.layers {
            let next = layer.output_shape(shapes.last().expect("non-empty"))?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    fn apply(&self, params: &ModelParams, i: usize, x: &Tensor) -> Result<Tensor> {
        match &self.layers[i] {
            LayerSpec::Dense { .. } => ops::dense_forward(
                x,
                params.get(&self.weight_name(i))?,
                params.get(&self.bias_name(i))?,
            ),
            LayerSpec::Conv2d { .. } => ops::conv2d_forward(
                x,
                params.get(&self.weight_name(i))?,
                params.get(&self.bias_name(i))?,
            ),
            LayerSpec::Maxpool2x2 => ops::maxpool2x2(x),
            LayerSpec::Upsample2x2 => ops::upsample2x2(x),
            LayerSpec::Relu => Ok(ops::relu(x)),
            LayerSpec::Sigmoid => Ok(ops::sigmoid(x)),
            LayerSpec::Reshape { shape } => {
                let mut full = vec![x.batch()];
                full.extend_from_slice(shape);
                x.clone().reshape(&full)
            }
        }
    }

    /// Inference-only forward pass.
    pub fn predict(&self, params: &ModelParams, x: &Tensor) -> Result<Tensor> {
        let mut cur = x.clone();
        for i in 0..self.layers.len() {
            cur = self.apply(params, i, &cur)?;
        }
        cur.ensure_finite(&format!("{} forward", self.name))?;
        Ok(cur)
    }

    pub fn forward(&self, params: &ModelParams, x: &Tensor) -> Result<(Tensor, Tape)> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        for i in 0..self.layers.len() {
            let next = self.apply(params, i, activations.last().expect("non-empty"))?;
            activations.push(next);
        }
        let out = activations.last().expect("non-empty").clone();
        out.ensure_finite(&format!("{} forward", self.name))?;
        Ok((
            out,
            Tape {
                network: self.name.clone(),
                activations,
            },
        ))
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the network input.
    pub fn backward(
        &self,
        params: &ModelParams,
        tape: &Tape,
        grad_out: &Tensor,
        grads: &mut ModelParams,
    ) -> Result<Tensor> {
        if tape.network != self.name || tape.activations.len() != self.layers.len() + 1 {
            return Err(Error::NoForwardPass);
        }
        grad_out.expect_same_shape(tape.output().expect("non-empty"), "backward seed")?;
        let mut grad = grad_out.clone();
        for i in (0..self.layers.len()).rev() {
            let input = &tape.activations[i];
            grad = match &self.layers[i] {
                LayerSpec::Dense { .. } => {
                    let (wn, bn) = (self.weight_name(i), self.bias_name(i));
                    let w = params.get(&wn)?;
                    let mut gw = std::mem::replace(grads.get_mut(&wn)?, Tensor::scalar(0.0));
                    let mut gb = std::mem::replace(grads.get_mut(&bn)?, Tensor::scalar(0.0));
                    let g = ops::dense_backward(input, w, &grad, &mut gw, &mut gb);
                    *grads.get_mut(&wn)? = gw;
                    *grads.get_mut(&bn)? = gb;
                    g
                }
                LayerSpec::Conv2d { .. } => {
                    let (wn, bn) = (self.weight_name(i), self.bias_name(i));
                    let w = params.get(&wn)?;
                    let mut gw = std::mem::replace(grads.get_mut(&wn)?, Tensor::scalar(0.0));
                    let mut gb = std::mem::replace(grads.get_mut(&bn)?, Tensor::scalar(0.0));
                    let g = ops::conv2d_backward(input, w, &grad, &mut gw, &mut gb);
                    *grads.get_mut(&wn)? = gw;
                    *grads.get_mut(&bn)? = gb;
                    g
                }
                LayerSpec::Maxpool2x2 => ops::maxpool2x2_backward(input, &grad),
                LayerSpec::Upsample2x2 => ops::upsample2x2_backward(input, &grad),
                LayerSpec::Relu => ops::relu_backward(input, &grad),
                LayerSpec::Sigmoid => ops::sigmoid_backward(&tape.activations[i + 1], &grad),
                LayerSpec::Reshape { .. } => grad.reshape(input.shape())?,
            };
        }
        grad.ensure_finite(&format!("{} backward", self.name))?;
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn even_kernel_rejected_at_build() {
        let err = Network::new("n", vec![LayerSpec::conv(1, 4, 4)]).unwrap_err();
        assert!(matches!(err, Error::InvalidLayer(_)));
    }

    #[test]
    fn backward_without_forward_is_an_error() {
        let net = Network::new("n", vec![LayerSpec::dense(2, 2)]).unwrap();
        let mut params = ModelParams::new();
        net.init(&mut params, &mut ChaCha8Rng::seed_from_u64(0));
        let mut grads = params.zeros_like();
        let err = net
            .backward(
                &params,
                &Tape::default(),
                &Tensor::zeros(&[1, 2]),
                &mut grads,
            )
            .unwrap_err();
        assert!(matches!(err, Error::NoForwardPass));
    }

    #[test]
    fn conv_pool_flatten_is_3136() {
        let net = Network::new(
            "enc",
            vec![
                LayerSpec::conv(1, 8, 5),
                LayerSpec::Relu,
                LayerSpec::Maxpool2x2,
            ],
        )
        .unwrap();
        let shapes = net.trace_shapes(&[1, 28, 56]).unwrap();
        assert_eq!(shapes.last().unwrap(), &vec![8, 14, 28]);
        assert_eq!(shapes.last().unwrap().iter().product::<usize>(), 3136);

        let mut params = ModelParams::new();
        net.init(&mut params, &mut ChaCha8Rng::seed_from_u64(1));
        let y = net
            .predict(&params, &Tensor::full(&[1, 1, 28, 56], 0.5))
            .unwrap();
        assert_eq!(y.shape(), &[1, 8, 14, 28]);
    }

    #[test]
    fn glorot_limits_respected() {
        let net = Network::new("n", vec![LayerSpec::dense(10, 20)]).unwrap();
        let mut params = ModelParams::new();
        net.init(&mut params, &mut ChaCha8Rng::seed_from_u64(3));
        let limit = (6.0f64 / 30.0).sqrt();
        let w = params.get("n.0.weight").unwrap();
        assert!(w.data().iter().all(|v| v.abs() <= limit));
        assert!(params
            .get("n.0.bias")
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }
}
