//! Dual-labeled sample collections, train/test splits, and the `DISET`
//! container.
//!
//! `DISET` layout: magic `DISET`, `u16` LE version, `u32` LE header length,
//! JSON header `{shape, M, N, count, seed, provenance}`, then `count`
//! row-major `f32` LE sample payloads, then `count` `(u16 domain, u16
//! gesture)` LE label pairs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::{read_f32s, read_preamble, write_f32s, write_preamble, DATASET_MAGIC};
use crate::error::{Error, Result};
use crate::rng;
use crate::signal::AmplitudeSample;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub sample: AmplitudeSample,
    pub domain: usize,
    pub gesture: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub shape: [usize; 2],
    #[serde(rename = "M")]
    pub gestures: usize,
    #[serde(rename = "N")]
    pub domains: usize,
    pub count: usize,
    pub seed: u64,
    #[serde(default)]
    pub provenance: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    meta: DatasetMeta,
    samples: Vec<LabeledSample>,
}

impl Dataset {
    /// Checks shapes and label ranges; `meta.count` is set from `samples`.
    pub fn new(mut meta: DatasetMeta, samples: Vec<LabeledSample>) -> Result<Self> {
        if meta.gestures == 0 || meta.domains == 0 {
            return Err(Error::config("dataset needs at least one gesture and one domain"));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.sample.shape() != meta.shape {
                return Err(Error::shape(format!(
                    "sample {i} has shape {:?}, dataset is {:?}",
                    s.sample.shape(),
                    meta.shape
                )));
            }
            if s.domain >= meta.domains {
                return Err(Error::LabelRange { label: s.domain, classes: meta.domains });
            }
            if s.gesture >= meta.gestures {
                return Err(Error::LabelRange { label: s.gesture, classes: meta.gestures });
            }
        }
        meta.count = samples.len();
        Ok(Self { meta, samples })
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn shape(&self) -> [usize; 2] {
        self.meta.shape
    }

    pub fn num_gestures(&self) -> usize {
        self.meta.gestures
    }

    pub fn num_domains(&self) -> usize {
        self.meta.domains
    }

    pub fn domain_labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.domain).collect()
    }

    pub fn gesture_labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.gesture).collect()
    }

    /// Same metadata, selected samples (in the given order).
    pub fn subset(&self, indices: &[usize]) -> Self {
        let samples: Vec<_> = indices.iter().map(|&i| self.samples[i].clone()).collect();
        let mut meta = self.meta.clone();
        meta.count = samples.len();
        Self { meta, samples }
    }

    pub fn filter(&self, keep: impl Fn(&LabeledSample) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(&self.samples[i])).collect();
        self.subset(&idx)
    }

    /// Replaces every sample matrix, keeping labels (e.g. after conversion).
    pub fn with_samples(&self, samples: Vec<AmplitudeSample>) -> Result<Self> {
        if samples.len() != self.len() {
            return Err(Error::shape(format!(
                "{} replacement samples for a dataset of {}",
                samples.len(),
                self.len()
            )));
        }
        let labeled = samples
            .into_iter()
            .zip(&self.samples)
            .map(|(sample, old)| LabeledSample {
                sample,
                domain: old.domain,
                gesture: old.gesture,
            })
            .collect();
        Self::new(self.meta.clone(), labeled)
    }

    /// Number of samples in each (gesture, domain) cell, gesture-major.
    pub fn cell_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.meta.gestures * self.meta.domains];
        for s in &self.samples {
            counts[s.gesture * self.meta.domains + s.domain] += 1;
        }
        counts
    }

    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        let header = serde_json::to_vec(&self.meta)?;
        write_preamble(w, DATASET_MAGIC, &header)?;
        for s in &self.samples {
            write_f32s(w, s.sample.values())?;
        }
        for s in &self.samples {
            let d = u16::try_from(s.domain).map_err(|_| Error::Format("domain label exceeds u16".into()))?;
            let g = u16::try_from(s.gesture).map_err(|_| Error::Format("gesture label exceeds u16".into()))?;
            w.write_all(&d.to_le_bytes())?;
            w.write_all(&g.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read(r: &mut impl Read) -> Result<Self> {
        let meta: DatasetMeta = serde_json::from_slice(&read_preamble(r, DATASET_MAGIC)?)?;
        let [rows, cols] = meta.shape;
        let mut matrices = Vec::with_capacity(meta.count);
        for _ in 0..meta.count {
            matrices.push(AmplitudeSample::new(rows, cols, read_f32s(r, rows * cols)?)?);
        }
        let mut samples = Vec::with_capacity(meta.count);
        for sample in matrices {
            let mut pair = [0u8; 4];
            r.read_exact(&mut pair)?;
            samples.push(LabeledSample {
                sample,
                domain: u16::from_le_bytes([pair[0], pair[1]]) as usize,
                gesture: u16::from_le_bytes([pair[2], pair[3]]) as usize,
            });
        }
        Self::new(meta, samples)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(&mut BufReader::new(File::open(path)?))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        Ok(buf)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "snake_case")]
pub enum SplitProtocol {
    /// Stratified random split inside every (gesture, domain) cell.
    Mixed { train_frac: f64, seed: u64 },
    /// All samples of one domain form the test set.
    LeaveOneDomainOut { held_domain: usize },
}

impl SplitProtocol {
    pub fn name(&self) -> &'static str {
        match self {
            SplitProtocol::Mixed { .. } => "mixed",
            SplitProtocol::LeaveOneDomainOut { .. } => "lodo",
        }
    }
}

/// Splits into (train, test). Both sides keep the original sample order.
pub fn split(dataset: &Dataset, protocol: SplitProtocol) -> Result<(Dataset, Dataset)> {
    let (train, test): (Vec<usize>, Vec<usize>) = match protocol {
        SplitProtocol::LeaveOneDomainOut { held_domain } => {
            if held_domain >= dataset.num_domains() {
                return Err(Error::config(format!(
                    "held domain {held_domain} out of range for {} domains",
                    dataset.num_domains()
                )));
            }
            (0..dataset.len()).partition(|&i| dataset.samples[i].domain != held_domain)
        }
        SplitProtocol::Mixed { train_frac, seed } => {
            if !(train_frac > 0.0 && train_frac < 1.0) {
                return Err(Error::config(format!("train fraction must be in (0,1), got {train_frac}")));
            }
            let n_dom = dataset.num_domains();
            let mut cells: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_gestures() * n_dom];
            for (i, s) in dataset.samples.iter().enumerate() {
                cells[s.gesture * n_dom + s.domain].push(i);
            }
            let mut train = Vec::new();
            let mut test = Vec::new();
            for (c, mut idx) in cells.into_iter().enumerate() {
                let mut stream = rng::stream(seed, &[0x5917, c as u64]);
                rng::shuffle(&mut stream, &mut idx);
                let k = (idx.len() as f64 * train_frac).round() as usize;
                train.extend_from_slice(&idx[..k]);
                test.extend_from_slice(&idx[k..]);
            }
            train.sort_unstable();
            test.sort_unstable();
            (train, test)
        }
    };
    if train.is_empty() || test.is_empty() {
        return Err(Error::config(format!(
            "split leaves an empty side ({} train, {} test)",
            train.len(),
            test.len()
        )));
    }
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(gestures: usize, domains: usize, reps: usize) -> Dataset {
        let mut samples = Vec::new();
        for g in 0..gestures {
            for d in 0..domains {
                for r in 0..reps {
                    let v = (g * 100 + d * 10 + r) as f32;
                    samples.push(LabeledSample {
                        sample: AmplitudeSample::new(2, 3, vec![v; 6]).unwrap(),
                        domain: d,
                        gesture: g,
                    });
                }
            }
        }
        let meta = DatasetMeta {
            shape: [2, 3],
            gestures,
            domains,
            count: 0,
            seed: 1,
            provenance: serde_json::json!({"generator": "toy"}),
        };
        Dataset::new(meta, samples).unwrap()
    }

    #[test]
    fn lodo_split() {
        let ds = toy(3, 10, 2);
        let (train, test) = split(&ds, SplitProtocol::LeaveOneDomainOut { held_domain: 4 }).unwrap();
        assert!(test.samples().iter().all(|s| s.domain == 4));
        assert!(train.samples().iter().all(|s| s.domain != 4));
        let mut doms: Vec<_> = train.domain_labels();
        doms.sort();
        doms.dedup();
        assert_eq!(doms.len(), 9);
        assert_eq!(train.len() + test.len(), ds.len());
        assert!(matches!(
            split(&ds, SplitProtocol::LeaveOneDomainOut { held_domain: 10 }),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn mixed_split_is_stratified() {
        let ds = toy(10, 10, 20);
        let (train, test) = split(&ds, SplitProtocol::Mixed { train_frac: 0.8, seed: 3 }).unwrap();
        assert_eq!((train.len(), test.len()), (1600, 400));
        assert!(train.cell_counts().iter().all(|&c| c == 16));
        assert!(test.cell_counts().iter().all(|&c| c == 4));
        let again = split(&ds, SplitProtocol::Mixed { train_frac: 0.8, seed: 3 }).unwrap();
        assert_eq!(again.0, train);
        let other = split(&ds, SplitProtocol::Mixed { train_frac: 0.8, seed: 4 }).unwrap();
        assert_ne!(other.0, train);
    }

    #[test]
    fn empty_side_is_error() {
        let ds = toy(2, 2, 1);
        assert!(split(&ds, SplitProtocol::Mixed { train_frac: 1.0, seed: 0 }).is_err());
        assert!(split(&ds, SplitProtocol::Mixed { train_frac: 0.2, seed: 0 }).is_err());
        let one = toy(1, 1, 3);
        assert!(split(&one, SplitProtocol::LeaveOneDomainOut { held_domain: 0 }).is_err());
    }

    #[test]
    fn diset_layout_and_round_trip() {
        let ds = toy(2, 3, 2);
        let bytes = ds.to_bytes().unwrap();
        assert_eq!(&bytes[..5], b"DISET");
        let hlen = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[11..11 + hlen]).unwrap();
        assert_eq!(header["M"], 2);
        assert_eq!(header["N"], 3);
        assert_eq!(header["count"], 12);
        assert_eq!(header["shape"], serde_json::json!([2, 3]));
        assert_eq!(bytes.len(), 11 + hlen + 12 * 6 * 4 + 12 * 4);
        // last label pair: domain 2, gesture 1
        assert_eq!(&bytes[bytes.len() - 4..], &[2, 0, 1, 0]);
        let back = Dataset::read(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn rejects_out_of_range_labels() {
        let mut meta = toy(1, 1, 1).meta().clone();
        meta.domains = 1;
        let s = LabeledSample {
            sample: AmplitudeSample::new(2, 3, vec![0.0; 6]).unwrap(),
            domain: 1,
            gesture: 0,
        };
        assert!(matches!(Dataset::new(meta, vec![s]), Err(Error::LabelRange { .. })));
    }
}
