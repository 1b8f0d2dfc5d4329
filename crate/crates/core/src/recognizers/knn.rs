use std::path::Path;

use serde_json::json;

use crate::container;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nn::ParamSet;
use crate::signal::AmplitudeSample;
use crate::tensor::Tensor;

/// k-nearest-neighbour vote over flattened samples (Euclidean distance).
///
/// Ties in the vote go to the label whose tied neighbours have the smaller
/// mean distance, then to the smaller label. Equal distances are ordered by
/// training index.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    k: usize,
    dim: usize,
    shape: [usize; 2],
    vectors: Vec<f32>,
    labels: Vec<usize>,
}

impl KnnModel {
    pub fn fit(train: &Dataset, k: usize) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Empty("knn training set is empty".into()));
        }
        let [r, c] = train.shape();
        let mut vectors = Vec::with_capacity(train.len() * r * c);
        for s in train.samples() {
            vectors.extend_from_slice(s.sample.values());
        }
        Self::from_vectors(train.shape(), vectors, train.gesture_labels(), k)
    }

    pub fn from_vectors(shape: [usize; 2], vectors: Vec<f32>, labels: Vec<usize>, k: usize) -> Result<Self> {
        let dim = shape[0] * shape[1];
        if dim == 0 || vectors.len() != dim * labels.len() {
            return Err(Error::shape("knn: vector block does not match labels and shape"));
        }
        if k == 0 || k > labels.len() {
            return Err(Error::config(format!(
                "k = {k} must be between 1 and the training size {}",
                labels.len()
            )));
        }
        Ok(Self {
            k,
            dim,
            shape,
            vectors,
            labels,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn predict(&self, x: &AmplitudeSample) -> Result<usize> {
        if x.shape() != self.shape {
            return Err(Error::shape(format!(
                "knn: sample shape {:?}, model expects {:?}",
                x.shape(),
                self.shape
            )));
        }
        let q = x.values();
        let mut dist: Vec<(f64, usize)> = self
            .vectors
            .chunks(self.dim)
            .enumerate()
            .map(|(i, v)| {
                let d2: f64 = v.iter().zip(q).map(|(a, b)| ((a - b) as f64).powi(2)).sum();
                (d2.sqrt(), i)
            })
            .collect();
        dist.select_nth_unstable_by(self.k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut nearest = dist[..self.k].to_vec();
        nearest.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(vote(nearest.iter().map(|&(d, i)| (self.labels[i], d))))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let (params, meta) = self.to_container()?;
        container::save_model(path, &params, &meta)
    }

    pub(crate) fn to_container(&self) -> Result<(ParamSet<f32>, serde_json::Value)> {
        let mut p = ParamSet::new();
        let n = self.labels.len();
        p.insert("train", Tensor::from_parts(vec![n, self.dim], self.vectors.clone())?)?;
        p.insert(
            "labels",
            Tensor::from_parts(vec![n], self.labels.iter().map(|&l| l as f32).collect())?,
        )?;
        Ok((p, json!({"kind": "knn", "k": self.k, "shape": self.shape})))
    }

    pub(crate) fn from_container(params: ParamSet<f32>, meta: serde_json::Value) -> Result<Self> {
        let k = meta["k"].as_u64().ok_or_else(|| Error::Format("knn: missing k".into()))? as usize;
        let shape: [usize; 2] = serde_json::from_value(meta["shape"].clone())?;
        let vectors = params.get("train")?.data().to_vec();
        let labels = params.get("labels")?.data().iter().map(|&l| l as usize).collect();
        Self::from_vectors(shape, vectors, labels, k)
    }
}

/// Majority vote over `(label, distance)` pairs with the documented
/// tie-breaks.
fn vote(neighbours: impl Iterator<Item = (usize, f64)>) -> usize {
    let mut tally: std::collections::BTreeMap<usize, (usize, f64)> = Default::default();
    for (label, d) in neighbours {
        let e = tally.entry(label).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += d;
    }
    let mut best: Option<(usize, usize, f64)> = None;
    for (&label, &(count, sum)) in &tally {
        let mean = sum / count as f64;
        let better = match best {
            None => true,
            Some((_, bc, bm)) => count > bc || (count == bc && mean < bm),
        };
        if better {
            best = Some((label, count, mean));
        }
    }
    best.map(|b| b.0).expect("k >= 1")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(v: &[f32]) -> AmplitudeSample {
        AmplitudeSample::new(1, v.len(), v.to_vec()).unwrap()
    }

    fn model(points: &[(&[f32], usize)], k: usize) -> KnnModel {
        let dim = points[0].0.len();
        let vectors = points.iter().flat_map(|(p, _)| p.iter().copied()).collect();
        KnnModel::from_vectors([1, dim], vectors, points.iter().map(|p| p.1).collect(), k).unwrap()
    }

    #[test]
    fn k1_returns_exact_match() {
        let m = model(&[(&[0.0, 0.0], 3), (&[1.0, 1.0], 5), (&[2.0, 0.0], 1)], 1);
        assert_eq!(m.predict(&point(&[1.0, 1.0])).unwrap(), 5);
    }

    #[test]
    fn majority_of_three() {
        let m = model(&[(&[0.0], 2), (&[0.1], 2), (&[0.2], 7), (&[5.0], 7), (&[6.0], 7)], 3);
        assert_eq!(m.predict(&point(&[0.05])).unwrap(), 2);
    }

    #[test]
    fn tie_breaks() {
        // {1,1,2,2} with equal mean distances → lowest label
        let m = model(&[(&[-1.0], 2), (&[1.0], 1), (&[-2.0], 1), (&[2.0], 2)], 4);
        assert_eq!(m.predict(&point(&[0.0])).unwrap(), 1);
        // equal counts, label 2 closer on average
        assert_eq!(vote([(1, 1.0), (2, 0.5), (1, 2.0), (2, 0.6)].into_iter()), 2);
    }

    #[test]
    fn k_bounds() {
        let pts: [(&[f32], usize); 2] = [(&[0.0], 0), (&[1.0], 1)];
        let vectors = vec![0.0, 1.0];
        assert!(KnnModel::from_vectors([1, 1], vectors.clone(), vec![0, 1], 3).is_err());
        assert!(KnnModel::from_vectors([1, 1], vectors, vec![0, 1], 0).is_err());
        let m = model(&pts, 2);
        assert!(m.predict(&point(&[0.0, 1.0])).is_err());
    }

    #[test]
    fn container_round_trip() {
        let m = model(&[(&[0.0, 0.5], 3), (&[1.0, 1.5], 0)], 1);
        let (p, meta) = m.to_container().unwrap();
        assert_eq!(KnnModel::from_container(p, meta).unwrap(), m);
    }
}
