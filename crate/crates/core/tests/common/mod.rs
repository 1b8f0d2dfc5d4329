//! Test-only oracles. Everything here uses forward passes only, so it stays
//! independent of the backward code it checks.
#![allow(dead_code)]

use dge_core::nn::ops::{self, Activation};
use dge_core::nn::{BnMode, LayerSpec, Network};
use dge_core::rng;
use dge_core::Tensor;

pub fn conv(name: &str, cin: usize, cout: usize, stride: usize, padding: usize) -> LayerSpec {
    LayerSpec::Conv2d {
        name: name.into(),
        in_channels: cin,
        out_channels: cout,
        kernel: 3,
        stride,
        padding,
    }
}

pub fn bn(name: &str, channels: usize) -> LayerSpec {
    LayerSpec::BatchNorm {
        name: name.into(),
        channels,
    }
}

pub fn act(kind: Activation) -> LayerSpec {
    LayerSpec::Activation { kind }
}

pub fn fc(name: &str, i: usize, o: usize) -> LayerSpec {
    LayerSpec::Linear {
        name: name.into(),
        in_features: i,
        out_features: o,
    }
}

/// Five small conv nets (each under 1k parameters) covering every layer
/// kind, stride 1 and 2, and a sigmoid output head.
pub fn small_nets() -> Vec<(Vec<LayerSpec>, Vec<usize>)> {
    let relu = || act(Activation::Relu);
    let sig = || act(Activation::Sigmoid);
    vec![
        (
            vec![
                conv("c1", 1, 3, 1, 1), bn("b1", 3), relu(), LayerSpec::MaxPool { size: 2 },
                conv("c2", 3, 4, 1, 1), bn("b2", 4), relu(), LayerSpec::MaxPool { size: 2 },
                LayerSpec::Flatten, fc("f1", 16, 8), sig(), fc("f2", 8, 3),
            ],
            vec![1, 8, 8],
        ),
        (
            vec![
                conv("c1", 1, 2, 2, 1), bn("b1", 2), relu(),
                LayerSpec::Flatten, fc("f1", 2 * 4 * 5, 6), sig(), fc("f2", 6, 4),
            ],
            vec![1, 7, 9],
        ),
        (
            vec![
                conv("c1", 2, 3, 1, 0), bn("b1", 3), sig(), LayerSpec::MaxPool { size: 2 },
                LayerSpec::Flatten, fc("f1", 3 * 2 * 2, 5), sig(), fc("f2", 5, 2), sig(),
            ],
            vec![2, 6, 6],
        ),
        (
            vec![
                conv("c1", 1, 4, 1, 1), bn("b1", 4), relu(), LayerSpec::MaxPool { size: 2 },
                conv("c2", 4, 4, 1, 1), bn("b2", 4), relu(), LayerSpec::MaxPool { size: 2 },
                conv("c3", 4, 2, 1, 1), bn("b3", 2), relu(),
                LayerSpec::Flatten, fc("f1", 2 * 2 * 3, 7), sig(), fc("f2", 7, 3),
            ],
            vec![1, 8, 12],
        ),
        (
            vec![LayerSpec::Flatten, fc("f1", 12, 10), sig(), fc("f2", 10, 10), relu(), fc("f3", 10, 3)],
            vec![1, 3, 4],
        ),
    ]
}

pub fn random_input(shape: &[usize], batch: usize, seed: u64) -> Tensor<f64> {
    let mut s = rng::stream(seed, &[77]);
    let mut full = vec![batch];
    full.extend_from_slice(shape);
    let n: usize = full.iter().product();
    let data = (0..n).map(|_| rng::uniform_in(&mut s, -1.0, 1.0)).collect();
    Tensor::new(full, data).unwrap()
}

pub fn labels(batch: usize, classes: usize, seed: u64) -> Vec<usize> {
    let mut s = rng::stream(seed, &[78]);
    (0..batch).map(|_| (rng::uniform(&mut s) * classes as f64) as usize).collect()
}

/// Mean cross-entropy of the network in the given batch-norm mode, without
/// touching running statistics.
pub fn loss(net: &Network<f64>, x: &Tensor<f64>, y: &[usize], mode: BnMode) -> f64 {
    let (logits, _, _) = net.forward_tape(x, mode).unwrap();
    ops::softmax_cross_entropy(&logits, y).unwrap().0
}

/// Central finite-difference derivative of `f` at `v`.
pub fn central_diff(mut f: impl FnMut(f64) -> f64, v: f64, h: f64) -> f64 {
    (f(v + h) - f(v - h)) / (2.0 * h)
}

/// |a − n| / max(|a|, |n|), with magnitudes below `floor` treated as
/// `floor` so gradients that are numerically zero compare absolutely.
pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Worst relative error over every trainable parameter and every input
/// element, comparing `analytic_*` against central differences of `loss`.
pub struct GradCheck {
    pub params_checked: usize,
    pub inputs_checked: usize,
    pub worst_param: f64,
    pub worst_input: f64,
}

pub fn finite_difference_check(
    net: &Network<f64>,
    x: &Tensor<f64>,
    y: &[usize],
    mode: BnMode,
    h: f64,
    analytic_params: &dge_core::nn::ParamSet<f64>,
    analytic_input: &Tensor<f64>,
) -> GradCheck {
    const FLOOR: f64 = 1e-6;
    let mut worst_param = 0.0f64;
    let mut params_checked = 0;
    for name in net.trainable_names() {
        let base = net.params().get(&name).unwrap().clone();
        let grad = analytic_params.get(&name).unwrap();
        for i in 0..base.len() {
            let numeric = central_diff(
                |v| {
                    let mut probe = net.clone();
                    let mut t = base.clone();
                    t.data_mut()[i] = v;
                    probe.params_mut().set(&name, t).unwrap();
                    loss(&probe, x, y, mode)
                },
                base.data()[i],
                h,
            );
            worst_param = worst_param.max(rel_err(grad.data()[i], numeric, FLOOR));
            params_checked += 1;
        }
    }
    let mut worst_input = 0.0f64;
    for i in 0..x.len() {
        let numeric = central_diff(
            |v| {
                let mut probe = x.clone();
                probe.data_mut()[i] = v;
                loss(net, &probe, y, mode)
            },
            x.data()[i],
            h,
        );
        if std::env::var("GC_DEBUG").is_ok() && rel_err(analytic_input.data()[i], numeric, FLOOR) > 1e-4 { eprintln!("input {i}: analytic {} numeric {}", analytic_input.data()[i], numeric); }
        worst_input = worst_input.max(rel_err(analytic_input.data()[i], numeric, FLOOR));
    }
    GradCheck {
        params_checked,
        inputs_checked: x.len(),
        worst_param,
        worst_input,
    }
}
