//! Domain DCNN and the gradient-sign domain gap eliminator (DGE).
//!
//! A domain classifier is trained on domain labels. For a sample `x` with
//! domain `y`, the sign of `∂ CE(f(x), y) / ∂x` is scaled by `α` and added to
//! `x`, which pushes the sample up the domain loss and away from its
//! domain's region. The same mechanics with `ε` in place of `α` give the
//! classic FGSM adversarial sample.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container;
use crate::dataset::{Dataset, LabeledSample};
use crate::error::{Error, Result};
use crate::nn::ops::{self, argmax, Activation};
use crate::nn::{BnMode, LayerSpec, Network};
use crate::signal::{batch_tensor, AmplitudeSample};
use crate::tensor::Tensor;
use crate::train::{self, EpochStats, TrainConfig};

pub const CONV_CHANNELS: [usize; 3] = [16, 32, 64];
pub const KERNEL: usize = 3;
pub const HIDDEN: usize = 128;

/// Three conv blocks (3×3, stride 1, pad 1, batch norm, ReLU, 2×2 max
/// pool) with 16/32/64 kernels, then FC(128) + sigmoid and FC(`classes`).
/// `strict_sigmoid` adds a sigmoid after the output layer as well.
pub fn dcnn_layers(shape: [usize; 2], classes: usize, strict_sigmoid: bool) -> Result<Vec<LayerSpec>> {
    let [mut h, mut w] = shape;
    let mut layers = Vec::new();
    let mut cin = 1;
    for (i, &cout) in CONV_CHANNELS.iter().enumerate() {
        let n = i + 1;
        layers.push(LayerSpec::Conv2d {
            name: format!("conv{n}"),
            in_channels: cin,
            out_channels: cout,
            kernel: KERNEL,
            stride: 1,
            padding: 1,
        });
        layers.push(LayerSpec::BatchNorm {
            name: format!("bn{n}"),
            channels: cout,
        });
        layers.push(LayerSpec::Activation { kind: Activation::Relu });
        layers.push(LayerSpec::MaxPool { size: 2 });
        if h < 2 || w < 2 {
            return Err(Error::shape(format!(
                "sample shape {shape:?} too small for three 2x2 pooling stages"
            )));
        }
        h /= 2;
        w /= 2;
        cin = cout;
    }
    layers.push(LayerSpec::Flatten);
    layers.push(LayerSpec::Linear {
        name: "fc1".into(),
        in_features: cin * h * w,
        out_features: HIDDEN,
    });
    layers.push(LayerSpec::Activation { kind: Activation::Sigmoid });
    layers.push(LayerSpec::Linear {
        name: "fc2".into(),
        in_features: HIDDEN,
        out_features: classes,
    });
    if strict_sigmoid {
        layers.push(LayerSpec::Activation { kind: Activation::Sigmoid });
    }
    Ok(layers)
}

/// Architecture block stored in the model container's metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchInfo {
    pub kind: String,
    #[serde(rename = "N")]
    pub classes: usize,
    pub strict_paper_arch: bool,
    pub shape: [usize; 2],
    pub layers: Vec<LayerSpec>,
}

/// Summary of conv/FC structure read off a layer list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchReport {
    pub conv_kernels: Vec<usize>,
    pub kernel_sizes: Vec<usize>,
    pub fc_layers: usize,
    pub output_width: usize,
}

pub fn arch_report(layers: &[LayerSpec]) -> ArchReport {
    let mut r = ArchReport {
        conv_kernels: Vec::new(),
        kernel_sizes: Vec::new(),
        fc_layers: 0,
        output_width: 0,
    };
    for l in layers {
        match l {
            LayerSpec::Conv2d {
                out_channels, kernel, ..
            } => {
                r.conv_kernels.push(*out_channels);
                r.kernel_sizes.push(*kernel);
            }
            LayerSpec::Linear { out_features, .. } => {
                r.fc_layers += 1;
                r.output_width = *out_features;
            }
            _ => {}
        }
    }
    r
}

/// A CNN classifier over amplitude samples; [`DomainDcnn`] when trained on
/// domain labels, the gesture CNN when trained on gesture labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    kind: String,
    net: Network<f32>,
    classes: usize,
    shape: [usize; 2],
    strict: bool,
}

pub type DomainDcnn = Classifier;

impl Classifier {
    pub fn new(kind: &str, shape: [usize; 2], classes: usize, strict: bool, seed: u64) -> Result<Self> {
        if classes < 2 {
            return Err(Error::config(format!(
                "{kind}: need at least 2 classes, got {classes}"
            )));
        }
        let net = Network::new(dcnn_layers(shape, classes, strict)?, &[1, shape[0], shape[1]], seed)?;
        Ok(Self {
            kind: kind.into(),
            net,
            classes,
            shape,
            strict,
        })
    }

    pub fn network(&self) -> &Network<f32> {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network<f32> {
        &mut self.net
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn strict_paper_arch(&self) -> bool {
        self.strict
    }

    pub fn arch(&self) -> ArchInfo {
        ArchInfo {
            kind: self.kind.clone(),
            classes: self.classes,
            strict_paper_arch: self.strict,
            shape: self.shape,
            layers: self.net.layers().to_vec(),
        }
    }

    pub fn arch_report(&self) -> ArchReport {
        arch_report(self.net.layers())
    }

    fn check_shape(&self, s: &AmplitudeSample) -> Result<()> {
        if s.shape() != self.shape {
            return Err(Error::shape(format!(
                "sample shape {:?}, model expects {:?}",
                s.shape(),
                self.shape
            )));
        }
        Ok(())
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.classes {
            return Err(Error::LabelRange {
                label: y,
                classes: self.classes,
            });
        }
        Ok(())
    }

    pub fn fit(&mut self, samples: &[&AmplitudeSample], labels: &[usize], cfg: &TrainConfig) -> Result<Vec<EpochStats>> {
        for s in samples {
            self.check_shape(s)?;
        }
        for &y in labels {
            self.check_label(y)?;
        }
        train::fit(&mut self.net, samples, labels, cfg)
    }

    pub fn logits(&self, samples: &[&AmplitudeSample]) -> Result<Vec<Vec<f32>>> {
        for s in samples {
            self.check_shape(s)?;
        }
        train::logits(&self.net, samples, 64)
    }

    pub fn predict(&self, samples: &[&AmplitudeSample]) -> Result<Vec<usize>> {
        Ok(self.logits(samples)?.iter().map(|z| argmax(z)).collect())
    }

    pub fn predict_one(&self, x: &AmplitudeSample) -> Result<usize> {
        Ok(self.predict(&[x])?[0])
    }

    /// Per-sample cross-entropy `CE(f(x), y)` in inference mode.
    pub fn losses(&self, samples: &[&AmplitudeSample], labels: &[usize]) -> Result<Vec<f64>> {
        let z = self.logits(samples)?;
        labels.iter().try_for_each(|&y| self.check_label(y))?;
        Ok(z.iter().zip(labels).map(|(row, &y)| ops::cross_entropy_row(row, y)).collect())
    }

    /// `∂ CE(f(x), y) / ∂x` for one sample, in inference mode.
    pub fn input_gradient(&self, x: &AmplitudeSample, y: usize) -> Result<Tensor<f32>> {
        self.check_shape(x)?;
        self.check_label(y)?;
        let g = self.net.input_gradient(&batch_tensor([x])?, &[y])?;
        g.reshape(vec![self.shape[0], self.shape[1]])
    }

    /// Sign maps for a batch of samples. The upstream logit gradient of each
    /// row is rescaled to unit max-norm before backpropagation; in inference
    /// mode the backward pass is linear per sample, so signs are unchanged
    /// while tiny gradients of a confident model stay out of underflow.
    pub fn sign_maps(&self, samples: &[&AmplitudeSample], labels: &[usize]) -> Result<Vec<SignMap>> {
        if samples.len() != labels.len() {
            return Err(Error::shape("sample and label counts differ"));
        }
        for s in samples {
            self.check_shape(s)?;
        }
        labels.iter().try_for_each(|&y| self.check_label(y))?;
        let mut out = Vec::with_capacity(samples.len());
        for (part, ys) in samples.chunks(32).zip(labels.chunks(32)) {
            let x = batch_tensor(part.iter().copied())?;
            let (logits, tape, _) = self.net.forward_tape(&x, BnMode::Infer)?;
            let (_, mut g) = ops::softmax_cross_entropy(&logits, ys)?;
            for row in g.data_mut().chunks_mut(self.classes) {
                let m = row.iter().fold(0.0f32, |m, v| m.max(v.abs()));
                if m > 0.0 {
                    row.iter_mut().for_each(|v| *v /= m);
                }
            }
            let (dx, _) = self.net.backward(tape, g, false)?;
            let per = self.shape[0] * self.shape[1];
            for i in 0..part.len() {
                out.push(SignMap::from_gradient(self.shape, &dx.data()[i * per..(i + 1) * per])?);
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        container::save_model(path, self.net.params(), &serde_json::to_value(self.arch())?)
    }

    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        container::write_model(w, self.net.params(), &serde_json::to_value(self.arch())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (params, meta) = container::load_model(path)?;
        Self::from_container(params, meta)
    }

    pub fn read(r: &mut impl Read) -> Result<Self> {
        let (params, meta) = container::read_model(r)?;
        Self::from_container(params, meta)
    }

    fn from_container(params: crate::nn::ParamSet<f32>, meta: serde_json::Value) -> Result<Self> {
        let arch: ArchInfo = serde_json::from_value(meta)?;
        let expected = dcnn_layers(arch.shape, arch.classes, arch.strict_paper_arch)?;
        if expected != arch.layers {
            return Err(Error::Format("stored layers do not match the DCNN architecture".into()));
        }
        let net = Network::from_parts(arch.layers, &[1, arch.shape[0], arch.shape[1]], params)?;
        Ok(Self {
            kind: arch.kind,
            net,
            classes: arch.classes,
            shape: arch.shape,
            strict: arch.strict_paper_arch,
        })
    }
}

/// Trains the domain DCNN on domain labels.
pub fn train_domain_dcnn(train: &Dataset, cfg: &TrainConfig, strict_paper_arch: bool) -> Result<(DomainDcnn, Vec<EpochStats>)> {
    if train.is_empty() {
        return Err(Error::Empty("domain DCNN training set is empty".into()));
    }
    if train.num_domains() < 2 {
        return Err(Error::config("domain DCNN needs at least 2 domains"));
    }
    let mut model = Classifier::new("domain_dcnn", train.shape(), train.num_domains(), strict_paper_arch, cfg.seed)?;
    let samples: Vec<&AmplitudeSample> = train.samples().iter().map(|s| &s.sample).collect();
    let trace = model.fit(&samples, &train.domain_labels(), cfg)?;
    Ok((model, trace))
}

/// Element-wise sign of an input gradient: entries in {−1, 0, +1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignMap {
    shape: [usize; 2],
    signs: Vec<i8>,
}

impl SignMap {
    pub fn from_gradient(shape: [usize; 2], grad: &[f32]) -> Result<Self> {
        if grad.len() != shape[0] * shape[1] {
            return Err(Error::shape("gradient length does not match sign map shape"));
        }
        let signs = grad
            .iter()
            .map(|&g| match g.partial_cmp(&0.0) {
                Some(std::cmp::Ordering::Greater) => 1,
                Some(std::cmp::Ordering::Less) => -1,
                _ => 0,
            })
            .collect();
        Ok(Self { shape, signs })
    }

    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn nonzero(&self) -> usize {
        self.signs.iter().filter(|&&s| s != 0).count()
    }
}

pub fn sign_map(model: &DomainDcnn, x: &AmplitudeSample, y: usize) -> Result<SignMap> {
    Ok(model.sign_maps(&[x], &[y])?.remove(0))
}

/// `x + α·s`, without clamping.
pub fn apply_dge(x: &AmplitudeSample, s: &SignMap, alpha: f64) -> Result<AmplitudeSample> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::config(format!("alpha must be non-negative, got {alpha}")));
    }
    if x.shape() != s.shape {
        return Err(Error::shape(format!(
            "sample shape {:?} vs sign map {:?}",
            x.shape(),
            s.shape
        )));
    }
    let values = x
        .values()
        .iter()
        .zip(&s.signs)
        .map(|(&v, &sg)| (v as f64 + alpha * sg as f64) as f32)
        .collect();
    AmplitudeSample::new(x.rows(), x.cols(), values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    /// Use the sample's own domain label (training-set conversion).
    TrueLabel,
    /// Use the model's argmax prediction (inference).
    PredictedLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgeConfig {
    pub alpha: f64,
    pub label_source: LabelSource,
    pub strict_paper_arch: bool,
}

impl Default for DgeConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            label_source: LabelSource::TrueLabel,
            strict_paper_arch: false,
        }
    }
}

impl DgeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config(format!("alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// A sample to convert, with or without its domain label.
#[derive(Debug, Clone, Copy)]
pub enum SampleRef<'a> {
    Labeled(&'a LabeledSample),
    Unlabeled(&'a AmplitudeSample),
}

impl SampleRef<'_> {
    fn sample(&self) -> &AmplitudeSample {
        match self {
            SampleRef::Labeled(l) => &l.sample,
            SampleRef::Unlabeled(s) => s,
        }
    }
}

/// Resolves the domain label per `cfg.label_source`, then applies the DGE.
pub fn make_domain_independent(model: &DomainDcnn, sample: SampleRef<'_>, cfg: &DgeConfig) -> Result<AmplitudeSample> {
    Ok(make_domain_independent_batch(model, &[sample], cfg)?.remove(0))
}

pub fn make_domain_independent_batch(
    model: &DomainDcnn,
    samples: &[SampleRef<'_>],
    cfg: &DgeConfig,
) -> Result<Vec<AmplitudeSample>> {
    cfg.validate()?;
    let xs: Vec<&AmplitudeSample> = samples.iter().map(SampleRef::sample).collect();
    let ys = match cfg.label_source {
        LabelSource::TrueLabel => samples
            .iter()
            .map(|s| match s {
                SampleRef::Labeled(l) => Ok(l.domain),
                SampleRef::Unlabeled(_) => Err(Error::config(
                    "true-label conversion requested for an unlabeled sample",
                )),
            })
            .collect::<Result<Vec<_>>>()?,
        LabelSource::PredictedLabel => model.predict(&xs)?,
    };
    let maps = model.sign_maps(&xs, &ys)?;
    xs.iter().zip(&maps).map(|(x, s)| apply_dge(x, s, cfg.alpha)).collect()
}

/// Converts every sample of a dataset, keeping its labels.
pub fn convert_dataset(model: &DomainDcnn, dataset: &Dataset, alpha: f64, label_source: LabelSource) -> Result<Dataset> {
    let refs: Vec<SampleRef<'_>> = dataset.samples().iter().map(SampleRef::Labeled).collect();
    let cfg = DgeConfig {
        alpha,
        label_source,
        strict_paper_arch: model.strict_paper_arch(),
    };
    dataset.with_samples(make_domain_independent_batch(model, &refs, &cfg)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adversarial {
    pub sample: AmplitudeSample,
    /// The model's argmax changed between `x` and the perturbed sample.
    pub flipped: bool,
}

/// FGSM: `x + ε·sign(∇ₓ CE(f(x), y))`.
pub fn fgsm_adversarial(model: &Classifier, x: &AmplitudeSample, y: usize, epsilon: f64) -> Result<Adversarial> {
    let s = if epsilon == 0.0 {
        SignMap {
            shape: x.shape(),
            signs: vec![0; x.values().len()],
        }
    } else {
        sign_map(model, x, y)?
    };
    let adv = apply_dge(x, &s, epsilon)?;
    let before = model.predict_one(x)?;
    let after = model.predict_one(&adv)?;
    Ok(Adversarial {
        sample: adv,
        flipped: before != after,
    })
}
