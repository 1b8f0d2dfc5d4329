use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::container;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nn::ops::argmax;
use crate::nn::ParamSet;
use crate::rng;
use crate::signal::AmplitudeSample;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    /// L2 regularization strength λ.
    pub lambda: f64,
    pub epochs: usize,
    /// Seeds the per-epoch sample order.
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            epochs: 50,
            seed: 0,
        }
    }
}

/// One-vs-rest linear SVMs: `M` weight vectors and biases over flattened
/// samples. Prediction is the argmax decision value (lowest label on ties).
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    shape: [usize; 2],
    /// `[M, dim]`, row-major
    weights: Vec<f32>,
    bias: Vec<f32>,
    lambda: f64,
}

impl SvmModel {
    pub fn from_parts(shape: [usize; 2], weights: Vec<f32>, bias: Vec<f32>, lambda: f64) -> Result<Self> {
        let dim = shape[0] * shape[1];
        if bias.is_empty() || weights.len() != dim * bias.len() {
            return Err(Error::shape("svm: weights do not match bias count and shape"));
        }
        Ok(Self {
            shape,
            weights,
            bias,
            lambda,
        })
    }

    /// Minimizes `λ/2·‖w_c‖² + mean hinge(y_c·(w_c·x + b_c))` for every
    /// class by stochastic subgradient descent. The step size is
    /// `η_t = η₀ / (1 + η₀·λ·t)` with `η₀ = 1 / max‖x‖²`; biases are not
    /// regularized.
    pub fn fit(train: &Dataset, cfg: &SvmConfig) -> Result<Self> {
        if !(cfg.lambda > 0.0 && cfg.lambda.is_finite()) {
            return Err(Error::config(format!("svm lambda must be positive, got {}", cfg.lambda)));
        }
        let labels = train.gesture_labels();
        let mut distinct = labels.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < 2 {
            return Err(Error::config("svm needs at least 2 gesture classes in the training set"));
        }
        let classes = train.num_gestures();
        let dim = train.shape()[0] * train.shape()[1];
        let xs: Vec<&[f32]> = train.samples().iter().map(|s| s.sample.values()).collect();
        let max_sq = xs
            .iter()
            .map(|x| x.iter().map(|&v| (v as f64).powi(2)).sum::<f64>())
            .fold(0.0f64, f64::max)
            .max(1e-12);
        let eta0 = 1.0 / max_sq;

        // w_c = scale · v_c, so the shared L2 shrink is O(1) per step
        let mut v = vec![0.0f64; classes * dim];
        let mut b = vec![0.0f64; classes];
        let mut scale = 1.0f64;
        let mut order: Vec<usize> = (0..xs.len()).collect();
        let mut t = 0u64;
        for epoch in 0..cfg.epochs {
            rng::shuffle(&mut rng::stream(cfg.seed, &[0x5e11, epoch as u64]), &mut order);
            for &i in &order {
                let eta = eta0 / (1.0 + eta0 * cfg.lambda * t as f64);
                t += 1;
                let x = xs[i];
                let mut margins = Vec::with_capacity(classes);
                for c in 0..classes {
                    let dot: f64 = v[c * dim..(c + 1) * dim]
                        .iter()
                        .zip(x)
                        .map(|(w, &xv)| w * xv as f64)
                        .sum();
                    margins.push(scale * dot + b[c]);
                }
                scale *= 1.0 - eta * cfg.lambda;
                for (c, m) in margins.into_iter().enumerate() {
                    let y = if labels[i] == c { 1.0 } else { -1.0 };
                    if y * m < 1.0 {
                        let step = eta * y / scale;
                        for (w, &xv) in v[c * dim..(c + 1) * dim].iter_mut().zip(x) {
                            *w += step * xv as f64;
                        }
                        b[c] += eta * y;
                    }
                }
                if scale < 1e-9 {
                    v.iter_mut().for_each(|w| *w *= scale);
                    scale = 1.0;
                }
            }
        }
        let weights = v.iter().map(|w| (w * scale) as f32).collect();
        let bias = b.iter().map(|&x| x as f32).collect();
        Self::from_parts(train.shape(), weights, bias, cfg.lambda)
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    pub fn decision_values(&self, x: &AmplitudeSample) -> Result<Vec<f64>> {
        if x.shape() != self.shape {
            return Err(Error::shape(format!(
                "svm: sample shape {:?}, model expects {:?}",
                x.shape(),
                self.shape
            )));
        }
        let dim = x.values().len();
        Ok(self
            .weights
            .chunks(dim)
            .zip(&self.bias)
            .map(|(w, &b)| {
                w.iter().zip(x.values()).map(|(&a, &c)| a as f64 * c as f64).sum::<f64>() + b as f64
            })
            .collect())
    }

    pub fn predict(&self, x: &AmplitudeSample) -> Result<usize> {
        Ok(argmax(&self.decision_values(x)?))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let (p, meta) = self.to_container()?;
        container::save_model(path, &p, &meta)
    }

    pub(crate) fn to_container(&self) -> Result<(ParamSet<f32>, serde_json::Value)> {
        let m = self.bias.len();
        let mut p = ParamSet::new();
        p.insert("W", Tensor::from_parts(vec![m, self.weights.len() / m], self.weights.clone())?)?;
        p.insert("b", Tensor::from_parts(vec![m], self.bias.clone())?)?;
        Ok((p, json!({"kind": "svm", "lambda": self.lambda, "shape": self.shape})))
    }

    pub(crate) fn from_container(params: ParamSet<f32>, meta: serde_json::Value) -> Result<Self> {
        let shape: [usize; 2] = serde_json::from_value(meta["shape"].clone())?;
        let lambda = meta["lambda"].as_f64().unwrap_or(0.0);
        Self::from_parts(
            shape,
            params.get("W")?.data().to_vec(),
            params.get("b")?.data().to_vec(),
            lambda,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DatasetMeta, LabeledSample};

    fn point(v: &[f32]) -> AmplitudeSample {
        AmplitudeSample::new(1, v.len(), v.to_vec()).unwrap()
    }

    fn cloud_dataset() -> Dataset {
        let mut s = rng::stream(11, &[]);
        let samples = (0..20)
            .map(|i| {
                let g = i % 2;
                let c = if g == 0 { [0.2, 0.8] } else { [0.8, 0.2] };
                let v = [
                    (c[0] + 0.05 * rng::normal(&mut s)) as f32,
                    (c[1] + 0.05 * rng::normal(&mut s)) as f32,
                ];
                LabeledSample {
                    sample: point(&v),
                    domain: 0,
                    gesture: g,
                }
            })
            .collect();
        let meta = DatasetMeta {
            shape: [1, 2],
            gestures: 2,
            domains: 1,
            count: 0,
            seed: 11,
            provenance: serde_json::Value::Null,
        };
        Dataset::new(meta, samples).unwrap()
    }

    #[test]
    fn decision_value_example() {
        let m = SvmModel::from_parts([1, 2], vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0], 1e-4).unwrap();
        let d = m.decision_values(&point(&[2.0, 0.0])).unwrap();
        assert_eq!(d, vec![2.0, 0.0]);
        assert_eq!(m.predict(&point(&[2.0, 0.0])).unwrap(), 0);
    }

    #[test]
    fn zero_model_picks_lowest_label() {
        let m = SvmModel::from_parts([1, 2], vec![0.0; 6], vec![0.0; 3], 1e-4).unwrap();
        assert_eq!(m.predict(&point(&[0.3, 0.9])).unwrap(), 0);
    }

    #[test]
    fn separates_two_clouds() {
        let ds = cloud_dataset();
        let m = SvmModel::fit(&ds, &SvmConfig::default()).unwrap();
        let correct = ds
            .samples()
            .iter()
            .filter(|s| m.predict(&s.sample).unwrap() == s.gesture)
            .count();
        assert_eq!(correct, 20);
        let again = SvmModel::fit(&ds, &SvmConfig::default()).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn single_class_is_error() {
        let ds = cloud_dataset().filter(|s| s.gesture == 0);
        assert!(matches!(SvmModel::fit(&ds, &SvmConfig::default()), Err(Error::Config(_))));
    }

    #[test]
    fn argmax_invariant_to_common_shift() {
        let m = SvmModel::from_parts([1, 2], vec![1.0, -1.0, 0.5, 0.5, -1.0, 2.0], vec![0.1, 0.2, 0.3], 1e-4).unwrap();
        let x = point(&[0.4, 0.7]);
        let shifted = SvmModel::from_parts([1, 2], m.weights.clone(), m.bias.iter().map(|b| b + 5.0).collect(), 1e-4).unwrap();
        assert_eq!(m.predict(&x).unwrap(), shifted.predict(&x).unwrap());
    }

    #[test]
    fn container_round_trip() {
        let m = SvmModel::fit(&cloud_dataset(), &SvmConfig::default()).unwrap();
        let (p, meta) = m.to_container().unwrap();
        assert_eq!(SvmModel::from_container(p, meta).unwrap(), m);
    }
}
