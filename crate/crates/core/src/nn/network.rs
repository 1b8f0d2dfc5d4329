//! Sequential networks built from a fixed menu of layers, with a recorded
//! forward pass and a matching backward pass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ops::{self, Activation, BnCache, BnMode};
use crate::nn::params::ParamSet;
use crate::rng;
use crate::tensor::{Real, Tensor};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        name: String,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    BatchNorm {
        name: String,
        channels: usize,
    },
    Activation {
        kind: Activation,
    },
    MaxPool {
        size: usize,
    },
    Flatten,
    Linear {
        name: String,
        in_features: usize,
        out_features: usize,
    },
}

impl LayerSpec {
    /// Parameter tensors owned by this layer: (name, shape, trainable).
    fn param_shapes(&self) -> Vec<(String, Vec<usize>, bool)> {
        match self {
            LayerSpec::Conv2d {
                name,
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                (format!("{name}.weight"), vec![*out_channels, *in_channels, *kernel, *kernel], true),
                (format!("{name}.bias"), vec![*out_channels], true),
            ],
            LayerSpec::BatchNorm { name, channels } => vec![
                (format!("{name}.gamma"), vec![*channels], true),
                (format!("{name}.beta"), vec![*channels], true),
                (format!("{name}.running_mean"), vec![*channels], false),
                (format!("{name}.running_var"), vec![*channels], false),
            ],
            LayerSpec::Linear {
                name,
                in_features,
                out_features,
            } => vec![
                (format!("{name}.weight"), vec![*out_features, *in_features], true),
                (format!("{name}.bias"), vec![*out_features], true),
            ],
            _ => Vec::new(),
        }
    }

    /// Shape after this layer, excluding the batch axis.
    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = || Error::shape(format!("layer {self:?} cannot take input {input:?}"));
        match self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                ..
            } => match *input {
                [c, h, w] if c == *in_channels && *stride > 0 => {
                    let f = |n: usize| {
                        (n + 2 * padding)
                            .checked_sub(*kernel)
                            .map(|d| d / stride + 1)
                            .ok_or_else(bad)
                    };
                    Ok(vec![*out_channels, f(h)?, f(w)?])
                }
                _ => Err(bad()),
            },
            LayerSpec::BatchNorm { channels, .. } => match input.first() {
                Some(c) if c == channels => Ok(input.to_vec()),
                _ => Err(bad()),
            },
            LayerSpec::Activation { .. } => Ok(input.to_vec()),
            LayerSpec::MaxPool { size } => match *input {
                [c, h, w] if *size > 0 && h >= *size && w >= *size => Ok(vec![c, h / size, w / size]),
                _ => Err(bad()),
            },
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Linear {
                in_features,
                out_features,
                ..
            } => match *input {
                [f] if f == *in_features => Ok(vec![*out_features]),
                _ => Err(bad()),
            },
        }
    }
}

enum Cache<T: Real> {
    Conv { input: Tensor<T> },
    BnTrain { cache: BnCache<T> },
    BnInfer { input: Tensor<T> },
    Act { output: Tensor<T> },
    Pool { in_shape: Vec<usize>, argmax: Vec<usize> },
    Flatten { in_shape: Vec<usize> },
    Linear { input: Tensor<T> },
    Stateless,
}

/// Intermediate values recorded by a forward pass, consumed by
/// [`Network::backward`].
pub struct Tape<T: Real> {
    caches: Vec<Cache<T>>,
}

/// Batch statistics observed by a training-mode forward pass.
pub struct BnUpdates<T: Real>(Vec<(String, BnCache<T>)>);

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T: Real = f32> {
    layers: Vec<LayerSpec>,
    input_shape: Vec<usize>,
    params: ParamSet<T>,
}

impl<T: Real> Network<T> {
    /// Builds the network and initializes parameters: Kaiming-uniform
    /// weights (bound √(6/fan_in)), zero biases, γ=1, β=0, running mean 0,
    /// running variance 1.
    pub fn new(layers: Vec<LayerSpec>, input_shape: &[usize], seed: u64) -> Result<Self> {
        Self::infer_output(&layers, input_shape)?;
        let mut params = ParamSet::new();
        for (li, layer) in layers.iter().enumerate() {
            let mut rng = rng::stream(seed, &[0x1417, li as u64]);
            for (name, shape, _) in layer.param_shapes() {
                let n: usize = shape.iter().product();
                let value = if name.ends_with(".weight") {
                    let fan_in: usize = shape[1..].iter().product();
                    let bound = (6.0 / fan_in as f64).sqrt();
                    let data = (0..n)
                        .map(|_| T::of(rng::uniform_in(&mut rng, -bound, bound)))
                        .collect();
                    Tensor::from_parts(shape, data)?
                } else if name.ends_with(".gamma") || name.ends_with(".running_var") {
                    Tensor::full(&shape, T::one())
                } else {
                    Tensor::zeros(&shape)
                };
                params.insert(name, value)?;
            }
        }
        Ok(Self {
            layers,
            input_shape: input_shape.to_vec(),
            params,
        })
    }

    /// Reassembles a network from stored parts, checking every parameter
    /// name and shape against the layer list.
    pub fn from_parts(layers: Vec<LayerSpec>, input_shape: &[usize], params: ParamSet<T>) -> Result<Self> {
        Self::infer_output(&layers, input_shape)?;
        let expected: Vec<_> = layers.iter().flat_map(LayerSpec::param_shapes).collect();
        if expected.len() != params.len() {
            return Err(Error::shape(format!(
                "network expects {} parameter tensors, got {}",
                expected.len(),
                params.len()
            )));
        }
        for (name, shape, _) in &expected {
            let t = params.get(name)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::shape(format!(
                    "parameter {name:?}: expected shape {shape:?}, got {:?}",
                    t.shape()
                )));
            }
        }
        Ok(Self {
            layers,
            input_shape: input_shape.to_vec(),
            params,
        })
    }

    fn infer_output(layers: &[LayerSpec], input_shape: &[usize]) -> Result<Vec<usize>> {
        layers
            .iter()
            .try_fold(input_shape.to_vec(), |s, l| l.output_shape(&s))
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Per-sample input shape (no batch axis).
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> Vec<usize> {
        Self::infer_output(&self.layers, &self.input_shape).expect("validated at construction")
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    /// Names of parameters updated by gradient descent (excludes running
    /// statistics).
    pub fn trainable_names(&self) -> Vec<String> {
        self.layers
            .iter()
            .flat_map(LayerSpec::param_shapes)
            .filter(|(_, _, t)| *t)
            .map(|(n, _, _)| n)
            .collect()
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            layers: self.layers.clone(),
            input_shape: self.input_shape.clone(),
            params: self.params.cast(),
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.ndim() == 0 || x.shape()[1..] != self.input_shape[..] {
            return Err(Error::shape(format!(
                "network input {:?} does not match [batch, {:?}]",
                x.shape(),
                self.input_shape
            )));
        }
        Ok(())
    }

    fn p(&self, layer: &str, suffix: &str) -> Result<&Tensor<T>> {
        self.params.get(&format!("{layer}.{suffix}"))
    }

    fn run(&self, x: &Tensor<T>, mode: BnMode, record: bool) -> Result<(Tensor<T>, Option<Tape<T>>, BnUpdates<T>)> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut updates = Vec::new();
        let mut h = x.clone();
        for layer in &self.layers {
            let (next, cache) = match layer {
                LayerSpec::Conv2d {
                    name, stride, padding, ..
                } => {
                    let y = ops::conv2d(&h, self.p(name, "weight")?, self.p(name, "bias")?, *stride, *padding)?;
                    (y, Cache::Conv { input: h })
                }
                LayerSpec::BatchNorm { name, .. } => {
                    let (gamma, beta) = (self.p(name, "gamma")?, self.p(name, "beta")?);
                    match mode {
                        BnMode::Train => {
                            let (y, cache) = ops::batchnorm_train(&h, gamma, beta, BN_EPS)?;
                            updates.push((name.clone(), cache.clone()));
                            (y, Cache::BnTrain { cache })
                        }
                        BnMode::Infer => {
                            let y = ops::batchnorm_infer(
                                &h,
                                gamma,
                                beta,
                                self.p(name, "running_mean")?,
                                self.p(name, "running_var")?,
                                BN_EPS,
                            )?;
                            (y, Cache::BnInfer { input: h })
                        }
                    }
                }
                LayerSpec::Activation { kind } => {
                    let y = ops::activation(&h, *kind);
                    let c = if record { Cache::Act { output: y.clone() } } else { Cache::Stateless };
                    (y, c)
                }
                LayerSpec::MaxPool { size } => {
                    let in_shape = h.shape().to_vec();
                    let (y, argmax) = ops::maxpool2d(&h, *size)?;
                    (y, Cache::Pool { in_shape, argmax })
                }
                LayerSpec::Flatten => {
                    let in_shape = h.shape().to_vec();
                    let b = in_shape[0];
                    let f = h.len() / b.max(1);
                    (h.reshape(vec![b, f])?, Cache::Flatten { in_shape })
                }
                LayerSpec::Linear { name, .. } => {
                    let y = ops::linear(&h, self.p(name, "weight")?, self.p(name, "bias")?)?;
                    (y, Cache::Linear { input: h })
                }
            };
            if record {
                caches.push(cache);
            }
            h = next;
        }
        let tape = record.then_some(Tape { caches });
        Ok((h, tape, BnUpdates(updates)))
    }

    /// Inference-mode forward pass (batch norm uses running statistics).
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.run(x, BnMode::Infer, false)?.0)
    }

    /// Forward pass that records a tape. Training mode does not touch the
    /// running statistics; the observed batch statistics are returned for
    /// [`Network::apply_bn_updates`].
    pub fn forward_tape(&self, x: &Tensor<T>, mode: BnMode) -> Result<(Tensor<T>, Tape<T>, BnUpdates<T>)> {
        let (y, tape, upd) = self.run(x, mode, true)?;
        Ok((y, tape.expect("recorded"), upd))
    }

    /// Folds batch statistics into the running statistics by exponential
    /// moving average with momentum [`BN_MOMENTUM`].
    pub fn apply_bn_updates(&mut self, updates: BnUpdates<T>) -> Result<()> {
        for (name, cache) in updates.0 {
            let mut stats = ops::RunningStats {
                mean: self.p(&name, "running_mean")?.clone(),
                var: self.p(&name, "running_var")?.clone(),
                momentum: BN_MOMENTUM,
            };
            stats.update(&cache);
            self.params.set(&format!("{name}.running_mean"), stats.mean)?;
            self.params.set(&format!("{name}.running_var"), stats.var)?;
        }
        Ok(())
    }

    /// Backpropagates `grad_out` through a recorded tape. Returns the input
    /// gradient and, when `param_grads` is set, gradients for every
    /// trainable parameter (otherwise an empty set).
    pub fn backward(&self, tape: Tape<T>, grad_out: Tensor<T>, param_grads: bool) -> Result<(Tensor<T>, ParamSet<T>)> {
        if tape.caches.len() != self.layers.len() {
            return Err(Error::shape("tape does not belong to this network"));
        }
        let mut collected: Vec<(String, Tensor<T>)> = Vec::new();
        let mut g = grad_out;
        for (layer, cache) in self.layers.iter().zip(tape.caches).rev() {
            g = match (layer, cache) {
                (
                    LayerSpec::Conv2d {
                        name, stride, padding, ..
                    },
                    Cache::Conv { input },
                ) => {
                    let r = ops::conv2d_backward(&input, self.p(name, "weight")?, *stride, *padding, &g, param_grads)?;
                    if let (Some(k), Some(b)) = (r.kernels, r.bias) {
                        collected.push((format!("{name}.bias"), b));
                        collected.push((format!("{name}.weight"), k));
                    }
                    r.input
                }
                (LayerSpec::BatchNorm { name, .. }, Cache::BnTrain { cache }) => {
                    let r = ops::batchnorm_train_backward(&cache, self.p(name, "gamma")?, &g)?;
                    if param_grads {
                        collected.push((format!("{name}.beta"), r.beta));
                        collected.push((format!("{name}.gamma"), r.gamma));
                    }
                    r.input
                }
                (LayerSpec::BatchNorm { name, .. }, Cache::BnInfer { input }) => {
                    let r = ops::batchnorm_infer_backward(
                        &input,
                        self.p(name, "gamma")?,
                        self.p(name, "running_mean")?,
                        self.p(name, "running_var")?,
                        BN_EPS,
                        &g,
                    )?;
                    if param_grads {
                        collected.push((format!("{name}.beta"), r.beta));
                        collected.push((format!("{name}.gamma"), r.gamma));
                    }
                    r.input
                }
                // ReLU's mask can be read off its output: y > 0 iff x > 0.
                (LayerSpec::Activation { kind }, Cache::Act { output }) => {
                    ops::activation_backward(*kind, &output, &output, &g)?
                }
                (LayerSpec::MaxPool { .. }, Cache::Pool { in_shape, argmax }) => {
                    ops::maxpool2d_backward(&in_shape, &argmax, &g)?
                }
                (LayerSpec::Flatten, Cache::Flatten { in_shape }) => g.reshape(in_shape)?,
                (LayerSpec::Linear { name, .. }, Cache::Linear { input }) => {
                    let r = ops::linear_backward(&input, self.p(name, "weight")?, &g, param_grads)?;
                    if let (Some(w), Some(b)) = (r.weights, r.bias) {
                        collected.push((format!("{name}.bias"), b));
                        collected.push((format!("{name}.weight"), w));
                    }
                    r.input
                }
                _ => return Err(Error::shape("tape/layer mismatch")),
            };
        }
        let mut grads = ParamSet::new();
        for (name, t) in collected.into_iter().rev() {
            grads.insert(name, t)?;
        }
        Ok((g, grads))
    }

    /// Per-sample gradient of the cross-entropy loss with respect to the
    /// input, in inference mode. Row `i` is `∂ CE(f(x_i), y_i) / ∂ x_i`.
    /// Parameters are not modified.
    pub fn input_gradient(&self, x: &Tensor<T>, labels: &[usize]) -> Result<Tensor<T>> {
        let (logits, tape, _) = self.forward_tape(x, BnMode::Infer)?;
        let (_, g) = ops::softmax_cross_entropy(&logits, labels)?;
        let b = T::of(labels.len() as f64);
        let g = g.map(|v| v * b);
        Ok(self.backward(tape, g, false)?.0)
    }

    /// Mean cross-entropy and trainable-parameter gradients for one batch
    /// in training mode. Running statistics are not updated.
    pub fn loss_and_grads(&self, x: &Tensor<T>, labels: &[usize]) -> Result<(f64, ParamSet<T>, BnUpdates<T>)> {
        let (logits, tape, upd) = self.forward_tape(x, BnMode::Train)?;
        let (loss, g) = ops::softmax_cross_entropy(&logits, labels)?;
        let (_, grads) = self.backward(tape, g, true)?;
        Ok((loss, grads, upd))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ops::Activation;

    fn lin(name: &str, i: usize, o: usize) -> LayerSpec {
        LayerSpec::Linear {
            name: name.into(),
            in_features: i,
            out_features: o,
        }
    }

    #[test]
    fn input_gradient_identity_linear() {
        let mut net = Network::<f64>::new(vec![lin("fc", 2, 2)], &[2], 0).unwrap();
        net.params_mut()
            .set("fc.weight", Tensor::new(vec![2, 2], vec![1., 0., 0., 1.]).unwrap())
            .unwrap();
        let x = Tensor::zeros(&[1, 2]);
        let g = net.input_gradient(&x, &[0]).unwrap();
        assert_eq!(g.data(), &[-0.5, 0.5]);
    }

    #[test]
    fn zero_first_layer_gives_zero_input_gradient() {
        let layers = vec![
            lin("fc1", 3, 4),
            LayerSpec::Activation { kind: Activation::Sigmoid },
            lin("fc2", 4, 2),
        ];
        let mut net = Network::<f64>::new(layers, &[3], 5).unwrap();
        net.params_mut().set("fc1.weight", Tensor::zeros(&[4, 3])).unwrap();
        let x = Tensor::new(vec![2, 3], vec![0.1, 0.2, 0.3, -1., 2., 0.5]).unwrap();
        let g = net.input_gradient(&x, &[0, 1]).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_inconsistent_layers() {
        let layers = vec![lin("fc1", 3, 4), lin("fc2", 5, 2)];
        assert!(Network::<f32>::new(layers, &[3], 0).is_err());
        let conv = LayerSpec::Conv2d {
            name: "c".into(),
            in_channels: 2,
            out_channels: 4,
            kernel: 3,
            stride: 1,
            padding: 0,
        };
        assert!(Network::<f32>::new(vec![conv], &[1, 5, 5], 0).is_err());
    }

    #[test]
    fn from_parts_checks_params() {
        let net = Network::<f32>::new(vec![lin("fc", 2, 3)], &[2], 1).unwrap();
        let again = Network::from_parts(net.layers().to_vec(), &[2], net.params().clone()).unwrap();
        assert_eq!(again, net);
        let mut wrong = ParamSet::<f32>::new();
        wrong.insert("fc.weight", Tensor::zeros(&[2, 2])).unwrap();
        wrong.insert("fc.bias", Tensor::zeros(&[3])).unwrap();
        assert!(Network::from_parts(net.layers().to_vec(), &[2], wrong).is_err());
    }

    #[test]
    fn init_is_seeded() {
        let a = Network::<f32>::new(vec![lin("fc", 8, 3)], &[8], 9).unwrap();
        let b = Network::<f32>::new(vec![lin("fc", 8, 3)], &[8], 9).unwrap();
        let c = Network::<f32>::new(vec![lin("fc", 8, 3)], &[8], 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let bound = (6.0f32 / 8.0).sqrt();
        assert!(a.params().get("fc.weight").unwrap().data().iter().all(|w| w.abs() <= bound));
        assert!(a.params().get("fc.bias").unwrap().data().iter().all(|&w| w == 0.0));
    }
}
