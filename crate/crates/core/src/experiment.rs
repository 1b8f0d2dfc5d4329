//! End-to-end experiment pipeline: split, train the domain DCNN, convert,
//! fit a gesture recognizer, evaluate. Also α sweeps, PCA embedding export,
//! domain evaluation and run manifests.
//!
//! Report CSV schema (`report.csv`, `sweep.csv`):
//! `protocol,recognizer,alpha,with_dge,accuracy,domain_classifier_accuracy_on_inputs`.
//! Wall times vary between runs and are kept in `manifest.json` only, so
//! same-seed reruns write byte-identical report CSVs.
//!
//! Embedding CSV schema: `sample_id,gesture,domain,pc1,pc2`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::ahnet::{convert_dataset, train_domain_dcnn, DgeConfig, DomainDcnn, LabelSource};
use crate::dataset::{split, Dataset, SplitProtocol};
use crate::error::{Error, Result};
use crate::recognizers::{accuracy, Recognizer, RecognizerKind, RecognizerParams};
use crate::signal::AmplitudeSample;
use crate::synth::{generate_dataset, GeneratorConfig};
use crate::tensor::matmul;
use crate::train::{EpochStats, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// DISET file to use; when absent the benchmark is generated.
    pub dataset: Option<PathBuf>,
    pub generator: GeneratorConfig,
    pub protocol: SplitProtocol,
    /// `label_source` selects the labels used to convert the training split;
    /// the test split is always converted with predicted labels.
    pub dge: DgeConfig,
    pub with_dge: bool,
    pub recognizer: RecognizerKind,
    pub recognizer_params: RecognizerParams,
    pub domain_train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            generator: GeneratorConfig::default(),
            protocol: SplitProtocol::LeaveOneDomainOut { held_domain: 0 },
            dge: DgeConfig::default(),
            with_dge: true,
            recognizer: RecognizerKind::Cnn,
            recognizer_params: RecognizerParams::default(),
            domain_train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(p) = &self.dataset {
            if !p.is_file() {
                return Err(Error::config(format!("dataset {} does not exist", p.display())));
            }
        } else {
            self.generator.validate()?;
        }
        self.dge.validate()?;
        self.domain_train.validate()?;
        if self.recognizer == RecognizerKind::Cnn {
            self.recognizer_params.cnn.validate()?;
        }
        if self.recognizer == RecognizerKind::Knn && self.recognizer_params.k == 0 {
            return Err(Error::config("k must be at least 1"));
        }
        Ok(())
    }

    /// Generated or loaded dataset, before splitting.
    pub fn load_dataset(&self) -> Result<Dataset> {
        match &self.dataset {
            Some(p) => Dataset::load(p),
            None => generate_dataset(&self.generator),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub protocol: String,
    pub recognizer: String,
    pub alpha: f64,
    pub with_dge: bool,
    /// Gesture accuracy on the test split.
    pub accuracy: f64,
    /// Domain DCNN accuracy on the recognizer's training inputs (raw or
    /// converted).
    pub domain_classifier_accuracy_on_inputs: f64,
    pub wall_time_s: f64,
}

pub const REPORT_HEADER: &str = "protocol,recognizer,alpha,with_dge,accuracy,domain_classifier_accuracy_on_inputs";

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut s = String::from(REPORT_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.protocol, r.recognizer, r.alpha, r.with_dge, r.accuracy, r.domain_classifier_accuracy_on_inputs
        );
    }
    s
}

/// Train/test splits plus the domain DCNN trained on the training split.
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub domain_model: DomainDcnn,
    pub domain_trace: Vec<EpochStats>,
    pub domain_train_s: f64,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let ds = cfg.load_dataset()?;
    let (train, test) = split(&ds, cfg.protocol)?;
    let t = Instant::now();
    let (domain_model, domain_trace) = train_domain_dcnn(&train, &cfg.domain_train, cfg.dge.strict_paper_arch)?;
    Ok(Prepared {
        train,
        test,
        domain_model,
        domain_trace,
        domain_train_s: t.elapsed().as_secs_f64(),
    })
}

/// Domain-classification accuracy of `model` over `dataset`.
pub fn eval_domain(model: &DomainDcnn, dataset: &Dataset) -> Result<f64> {
    if dataset.shape() != model.shape() {
        return Err(Error::shape(format!(
            "dataset shape {:?}, model expects {:?}",
            dataset.shape(),
            model.shape()
        )));
    }
    let xs: Vec<&AmplitudeSample> = dataset.samples().iter().map(|s| &s.sample).collect();
    accuracy(&model.predict(&xs)?, &dataset.domain_labels())
}

/// One pipeline pass with an already trained domain model: optional DGE
/// conversion, recognizer fit, test accuracy.
pub fn evaluate(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    alpha: f64,
    with_dge: bool,
) -> Result<(ReportRow, Recognizer)> {
    DgeConfig { alpha, ..cfg.dge }.validate()?;
    let t = Instant::now();
    let (train, test) = if with_dge {
        (
            convert_dataset(&prepared.domain_model, &prepared.train, alpha, cfg.dge.label_source)?,
            convert_dataset(&prepared.domain_model, &prepared.test, alpha, LabelSource::PredictedLabel)?,
        )
    } else {
        (prepared.train.clone(), prepared.test.clone())
    };
    let recognizer = Recognizer::fit(cfg.recognizer, &train, &cfg.recognizer_params)?;
    let acc = recognizer.evaluate(&test)?;
    let dom = eval_domain(&prepared.domain_model, &train)?;
    let row = ReportRow {
        protocol: cfg.protocol.name().into(),
        recognizer: cfg.recognizer.name().into(),
        alpha,
        with_dge,
        accuracy: acc,
        domain_classifier_accuracy_on_inputs: dom,
        wall_time_s: t.elapsed().as_secs_f64(),
    };
    Ok((row, recognizer))
}

pub struct RunOutcome {
    pub prepared: Prepared,
    pub rows: Vec<ReportRow>,
    /// Recognizer of the last row.
    pub recognizer: Recognizer,
}

/// The configured run. With `compare`, a without-DGE baseline row is
/// produced first from the same domain model and splits.
pub fn run(cfg: &ExperimentConfig, compare: bool) -> Result<RunOutcome> {
    let prepared = prepare(cfg)?;
    let mut rows = Vec::new();
    if compare && cfg.with_dge {
        rows.push(evaluate(cfg, &prepared, cfg.dge.alpha, false)?.0);
    }
    let (row, recognizer) = evaluate(cfg, &prepared, cfg.dge.alpha, cfg.with_dge)?;
    rows.push(row);
    Ok(RunOutcome {
        prepared,
        rows,
        recognizer,
    })
}

/// Accuracy with DGE minus accuracy without, when both rows are present.
pub fn dge_margin(rows: &[ReportRow]) -> Option<f64> {
    let with = rows.iter().find(|r| r.with_dge)?;
    let without = rows.iter().find(|r| !r.with_dge)?;
    Some(with.accuracy - without.accuracy)
}

/// `start, start+step, …, stop` inclusive, rounded to 1e-9 so grid values
/// print cleanly.
pub fn alpha_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(start > 0.0 && step > 0.0 && stop >= start && stop.is_finite()) {
        return Err(Error::config(format!(
            "invalid alpha grid start={start} stop={stop} step={step}"
        )));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n)
        .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

/// One row per α in ascending order, all sharing one trained domain model.
pub fn sweep_alpha(cfg: &ExperimentConfig, grid: &[f64]) -> Result<(Prepared, Vec<ReportRow>)> {
    if grid.is_empty() {
        return Err(Error::config("alpha grid is empty"));
    }
    if let Some(a) = grid.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(Error::config(format!("alpha grid values must be positive, got {a}")));
    }
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let prepared = prepare(cfg)?;
    let rows = grid
        .iter()
        .map(|&a| evaluate(cfg, &prepared, a, cfg.with_dge).map(|(r, _)| r))
        .collect::<Result<Vec<_>>>()?;
    Ok((prepared, rows))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `files` into `dir`, then `manifest.json` holding `manifest` plus
/// versions and the SHA-256 of every written file and of the input dataset.
pub fn write_artifacts(
    dir: &Path,
    cfg: &ExperimentConfig,
    files: &[(&str, Vec<u8>)],
    mut manifest: serde_json::Value,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut hashes = serde_json::Map::new();
    for (name, bytes) in files {
        fs::write(dir.join(name), bytes)?;
        hashes.insert(name.to_string(), json!(sha256_hex(bytes)));
    }
    if let Some(p) = &cfg.dataset {
        hashes.insert(format!("input:{}", p.display()), json!(sha256_hex(&fs::read(p)?)));
    }
    let obj = manifest
        .as_object_mut()
        .ok_or_else(|| Error::config("manifest must be a JSON object"))?;
    obj.insert("config".into(), serde_json::to_value(cfg)?);
    obj.insert(
        "versions".into(),
        json!({
            "dge": env!("CARGO_PKG_VERSION"),
            "diset": crate::container::VERSION,
            "dimdl": crate::container::VERSION,
        }),
    );
    obj.insert("files".into(), serde_json::Value::Object(hashes));
    fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

pub fn model_bytes(model: &DomainDcnn) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    model.write(&mut buf)?;
    Ok(buf)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub sample_id: usize,
    pub gesture: usize,
    pub domain: usize,
    pub pc1: f64,
    pub pc2: f64,
}

pub const EMBEDDING_HEADER: &str = "sample_id,gesture,domain,pc1,pc2";

/// Mean-centered PCA of the flattened samples onto their two leading
/// principal components. Each component's sign is fixed so that its
/// largest-magnitude score is positive.
pub fn pca_embedding(dataset: &Dataset) -> Result<Vec<EmbeddingRow>> {
    let n = dataset.len();
    if n < 3 {
        return Err(Error::Empty(format!("embedding needs at least 3 samples, got {n}")));
    }
    let d = dataset.shape()[0] * dataset.shape()[1];
    let mut mean = vec![0.0f64; d];
    for s in dataset.samples() {
        for (m, &v) in mean.iter_mut().zip(s.sample.values()) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut x = Vec::with_capacity(n * d);
    for s in dataset.samples() {
        x.extend(s.sample.values().iter().zip(&mean).map(|(&v, m)| v as f64 - m));
    }
    let mut gram = vec![0.0f64; n * n];
    matmul(n, d, n, &x, false, &x, true, &mut gram, false);
    let total: f64 = (0..n).map(|i| gram[i * n + i]).sum();
    if total <= 0.0 {
        return Err(Error::Empty("degenerate data: all samples are identical".into()));
    }
    let (vals, vecs) = top_eigenpairs(&gram, n, 2);
    let scores: Vec<Vec<f64>> = vals
        .iter()
        .zip(&vecs)
        .map(|(&l, u)| {
            let sd = l.max(0.0).sqrt();
            let lead = u.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            let sign = if lead < 0.0 { -1.0 } else { 1.0 };
            u.iter().map(|v| sign * sd * v).collect()
        })
        .collect();
    Ok(dataset
        .samples()
        .iter()
        .enumerate()
        .map(|(i, s)| EmbeddingRow {
            sample_id: i,
            gesture: s.gesture,
            domain: s.domain,
            pc1: scores[0][i],
            pc2: scores[1][i],
        })
        .collect())
}

pub fn embedding_csv(rows: &[EmbeddingRow]) -> String {
    let mut s = String::from(EMBEDDING_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.sample_id, r.gesture, r.domain, r.pc1, r.pc2);
    }
    s
}

pub fn parse_embedding_csv(text: &str) -> Result<Vec<EmbeddingRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == EMBEDDING_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header {EMBEDDING_HEADER:?}"),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let err = |msg: String| Error::Parse { line: i + 1, msg };
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 5 {
                return Err(err(format!("expected 5 fields, got {}", f.len())));
            }
            let int = |s: &str| s.trim().parse::<usize>().map_err(|e| err(e.to_string()));
            let real = |s: &str| s.trim().parse::<f64>().map_err(|e| err(e.to_string()));
            Ok(EmbeddingRow {
                sample_id: int(f[0])?,
                gesture: int(f[1])?,
                domain: int(f[2])?,
                pc1: real(f[3])?,
                pc2: real(f[4])?,
            })
        })
        .collect()
}

/// Mean pairwise Euclidean distance between per-domain centroids in the
/// (pc1, pc2) plane. Zero when fewer than two domains are present.
pub fn domain_centroid_distance(rows: &[EmbeddingRow]) -> f64 {
    let mut acc: std::collections::BTreeMap<usize, (f64, f64, usize)> = Default::default();
    for r in rows {
        let e = acc.entry(r.domain).or_default();
        e.0 += r.pc1;
        e.1 += r.pc2;
        e.2 += 1;
    }
    let c: Vec<(f64, f64)> = acc.values().map(|(a, b, n)| (a / *n as f64, b / *n as f64)).collect();
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..c.len() {
        for j in i + 1..c.len() {
            sum += ((c[i].0 - c[j].0).powi(2) + (c[i].1 - c[j].1).powi(2)).sqrt();
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        sum / pairs as f64
    }
}

/// Leading `k` eigenpairs of the symmetric `n × n` matrix `a`, by block
/// subspace iteration with Rayleigh–Ritz projection. Eigenvalues descend.
fn top_eigenpairs(a: &[f64], n: usize, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let p = (k + 6).min(n);
    let mut stream = crate::rng::stream(0, &[0x9ca]);
    // column-major block: column j is v[j*n..(j+1)*n]
    let mut v: Vec<f64> = (0..n * p).map(|_| crate::rng::normal(&mut stream)).collect();
    orthonormalize(&mut v, n, p, &mut stream);
    let mut prev = vec![f64::NAN; k];
    let mut theta = vec![0.0; p];
    for _ in 0..1000 {
        // w = A v, with v stored as p rows of length n
        let mut w = vec![0.0; p * n];
        matmul(p, n, n, &v, false, a, false, &mut w, false);
        orthonormalize(&mut w, n, p, &mut stream);
        let mut aw = vec![0.0; p * n];
        matmul(p, n, n, &w, false, a, false, &mut aw, false);
        let mut h = vec![0.0; p * p];
        matmul(p, n, p, &w, false, &aw, true, &mut h, false);
        let (vals, rot) = jacobi_eigen(&mut h, p);
        theta = vals;
        let mut next = vec![0.0; p * n];
        matmul(p, p, n, &rot, false, &w, false, &mut next, false);
        v = next;
        let scale = theta[0].abs().max(f64::MIN_POSITIVE);
        let done = (0..k).all(|i| (theta[i] - prev[i]).abs() <= 1e-13 * scale);
        prev.copy_from_slice(&theta[..k]);
        if done {
            break;
        }
    }
    let vecs = (0..k).map(|i| v[i * n..(i + 1) * n].to_vec()).collect();
    (theta[..k].to_vec(), vecs)
}

/// Modified Gram–Schmidt over `p` rows of length `n`, run twice. A row that
/// collapses is replaced by a fresh random direction.
fn orthonormalize(v: &mut [f64], n: usize, p: usize, stream: &mut crate::rng::Stream) {
    for j in 0..p {
        loop {
            let before: f64 = v[j * n..(j + 1) * n].iter().map(|x| x * x).sum::<f64>().sqrt();
            for _ in 0..2 {
                for i in 0..j {
                    let (head, tail) = v.split_at_mut(j * n);
                    let qi = &head[i * n..(i + 1) * n];
                    let vj = &mut tail[..n];
                    let dot: f64 = qi.iter().zip(vj.iter()).map(|(a, b)| a * b).sum();
                    vj.iter_mut().zip(qi).for_each(|(b, a)| *b -= dot * a);
                }
            }
            let norm: f64 = v[j * n..(j + 1) * n].iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-10 * before.max(f64::MIN_POSITIVE) && norm > 0.0 {
                v[j * n..(j + 1) * n].iter_mut().for_each(|x| *x /= norm);
                break;
            }
            v[j * n..(j + 1) * n]
                .iter_mut()
                .for_each(|x| *x = crate::rng::normal(stream));
        }
    }
}

/// Cyclic Jacobi eigendecomposition of a small symmetric matrix (row-major,
/// destroyed). Returns eigenvalues in descending order and the matching
/// eigenvectors as rows of a `p × p` matrix.
fn jacobi_eigen(h: &mut [f64], p: usize) -> (Vec<f64>, Vec<f64>) {
    let mut q = vec![0.0; p * p];
    (0..p).for_each(|i| q[i * p + i] = 1.0);
    for _ in 0..100 {
        let off: f64 = (0..p)
            .flat_map(|i| (0..p).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| h[i * p + j].powi(2))
            .sum();
        if off <= 1e-30 * (0..p).map(|i| h[i * p + i].powi(2)).sum::<f64>().max(f64::MIN_POSITIVE) {
            break;
        }
        for i in 0..p {
            for j in i + 1..p {
                let hij = h[i * p + j];
                if hij == 0.0 {
                    continue;
                }
                let tau = (h[j * p + j] - h[i * p + i]) / (2.0 * hij);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let t = if tau == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for r in 0..p {
                    let (a, b) = (h[r * p + i], h[r * p + j]);
                    h[r * p + i] = c * a - s * b;
                    h[r * p + j] = s * a + c * b;
                }
                for r in 0..p {
                    let (a, b) = (h[i * p + r], h[j * p + r]);
                    h[i * p + r] = c * a - s * b;
                    h[j * p + r] = s * a + c * b;
                }
                for r in 0..p {
                    let (a, b) = (q[r * p + i], q[r * p + j]);
                    q[r * p + i] = c * a - s * b;
                    q[r * p + j] = s * a + c * b;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| h[b * p + b].total_cmp(&h[a * p + a]));
    let vals = order.iter().map(|&i| h[i * p + i]).collect();
    // eigenvectors are the columns of q; return them as rows
    let vecs = order
        .iter()
        .flat_map(|&i| (0..p).map(move |r| (r, i)))
        .map(|(r, i)| q[r * p + i])
        .collect();
    (vals, vecs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DatasetMeta, LabeledSample};

    fn dataset(points: &[Vec<f32>], domains: &[usize]) -> Dataset {
        let samples = points
            .iter()
            .zip(domains)
            .map(|(p, &d)| LabeledSample {
                sample: AmplitudeSample::new(1, p.len(), p.clone()).unwrap(),
                domain: d,
                gesture: 0,
            })
            .collect();
        let meta = DatasetMeta {
            shape: [1, points[0].len()],
            gestures: 1,
            domains: domains.iter().max().unwrap() + 1,
            count: 0,
            seed: 0,
            provenance: serde_json::Value::Null,
        };
        Dataset::new(meta, samples).unwrap()
    }

    #[test]
    fn grid_has_seventeen_points() {
        let g = alpha_grid(0.04, 0.20, 0.01).unwrap();
        assert_eq!(g.len(), 17);
        assert_eq!(g[0], 0.04);
        assert_eq!(g[16], 0.2);
        assert_eq!(g[2], 0.06);
        assert!(alpha_grid(0.0, 0.2, 0.01).is_err());
        assert!(alpha_grid(0.2, 0.1, 0.01).is_err());
    }

    #[test]
    fn jacobi_diagonalizes() {
        let mut h = vec![4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.0];
        let orig = h.clone();
        let (vals, vecs) = jacobi_eigen(&mut h, 3);
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
        for k in 0..3 {
            let u = &vecs[k * 3..k * 3 + 3];
            for r in 0..3 {
                let au: f64 = (0..3).map(|c| orig[r * 3 + c] * u[c]).sum();
                assert!((au - vals[k] * u[r]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn collinear_points_have_zero_second_component() {
        let pts: Vec<Vec<f32>> = (0..6).map(|i| vec![i as f32, 2.0 * i as f32, 0.5]).collect();
        let rows = pca_embedding(&dataset(&pts, &[0, 0, 0, 1, 1, 1])).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.pc2.abs() < 1e-6));
        let spread = (rows[5].pc1 - rows[0].pc1).abs();
        assert!((spread - 5.0 * 5f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn pca_matches_known_axes() {
        // variance 4 along axis 0, 1 along axis 1
        let pts = vec![
            vec![2.0, 0.0],
            vec![-2.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ];
        let rows = pca_embedding(&dataset(&pts, &[0, 0, 1, 1])).unwrap();
        assert!((rows[0].pc1.abs() - 2.0).abs() < 1e-9 && rows[0].pc2.abs() < 1e-9);
        assert!((rows[2].pc2.abs() - 1.0).abs() < 1e-9 && rows[2].pc1.abs() < 1e-9);
    }

    #[test]
    fn degenerate_and_tiny_inputs_rejected() {
        let same = vec![vec![1.0f32, 2.0]; 4];
        assert!(matches!(pca_embedding(&dataset(&same, &[0, 0, 1, 1])), Err(Error::Empty(_))));
        let two = vec![vec![1.0f32, 2.0], vec![0.0, 1.0]];
        assert!(pca_embedding(&dataset(&two, &[0, 1])).is_err());
    }

    #[test]
    fn embedding_csv_round_trip_and_centroids() {
        let pts: Vec<Vec<f32>> = (0..8).map(|i| vec![(i % 4) as f32, (i / 4) as f32 * 3.0]).collect();
        let rows = pca_embedding(&dataset(&pts, &[0, 0, 0, 0, 1, 1, 1, 1])).unwrap();
        let text = embedding_csv(&rows);
        assert!(text.starts_with(EMBEDDING_HEADER));
        assert_eq!(parse_embedding_csv(&text).unwrap(), rows);
        assert!((domain_centroid_distance(&rows) - 3.0).abs() < 1e-9);
        assert!(parse_embedding_csv("a,b\n").is_err());
    }

    #[test]
    fn report_csv_schema() {
        let row = ReportRow {
            protocol: "lodo".into(),
            recognizer: "knn".into(),
            alpha: 0.1,
            with_dge: true,
            accuracy: 0.9,
            domain_classifier_accuracy_on_inputs: 0.25,
            wall_time_s: 3.0,
        };
        assert_eq!(report_csv(&[row]), format!("{REPORT_HEADER}\nlodo,knn,0.1,true,0.9,0.25\n"));
    }

    #[test]
    fn margin_needs_both_rows() {
        let mut row = ReportRow {
            protocol: "lodo".into(),
            recognizer: "cnn".into(),
            alpha: 0.1,
            with_dge: false,
            accuracy: 0.5,
            domain_classifier_accuracy_on_inputs: 1.0,
            wall_time_s: 0.0,
        };
        assert_eq!(dge_margin(&[row.clone()]), None);
        let mut with = row.clone();
        with.with_dge = true;
        with.accuracy = 0.75;
        row.accuracy = 0.5;
        assert_eq!(dge_margin(&[row, with]), Some(0.25));
    }
}
