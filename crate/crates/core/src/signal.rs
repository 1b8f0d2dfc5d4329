//! CSI ingestion: complex frames → amplitudes → Kalman-denoised,
//! time-resampled, min-max normalized [`AmplitudeSample`]s.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One time step of complex channel measurements, `links × subcarriers`
/// values flattened link-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiFrame {
    pub timestamp: f64,
    pub values: Vec<(f64, f64)>,
}

/// A `rows × cols` amplitude matrix (channels × time), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeSample {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

impl AmplitudeSample {
    pub fn new(rows: usize, cols: usize, values: Vec<f32>) -> Result<Self> {
        if rows * cols != values.len() || rows == 0 || cols == 0 {
            return Err(Error::shape(format!(
                "amplitude sample {rows}x{cols} cannot hold {} values",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("amplitude sample".into()));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    /// Single-channel image tensor `[1, rows, cols]`.
    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::from_parts(vec![1, self.rows, self.cols], self.values.clone()).expect("shape checked")
    }
}

/// Stacks samples into a `[batch, 1, rows, cols]` network input.
pub fn batch_tensor<'a>(samples: impl IntoIterator<Item = &'a AmplitudeSample>) -> Result<Tensor<f32>> {
    let mut data = Vec::new();
    let mut shape: Option<[usize; 2]> = None;
    let mut n = 0;
    for s in samples {
        match shape {
            None => shape = Some(s.shape()),
            Some(sh) if sh != s.shape() => {
                return Err(Error::shape(format!("mixed sample shapes {sh:?} and {:?}", s.shape())))
            }
            _ => {}
        }
        data.extend_from_slice(&s.values);
        n += 1;
    }
    let [r, c] = shape.ok_or_else(|| Error::Empty("no samples to batch".into()))?;
    Tensor::from_parts(vec![n, 1, r, c], data)
}

/// Scalar random-walk Kalman filter parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanParams {
    /// process variance
    pub q: f64,
    /// measurement variance
    pub r: f64,
    /// initial estimate variance
    pub p0: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self {
            q: 1e-5,
            r: 1e-2,
            p0: 1.0,
        }
    }
}

impl KalmanParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("q", self.q), ("r", self.r), ("p0", self.p0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("kalman {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Element-wise modulus of every complex value in the frame.
pub fn amplitude(frame: &CsiFrame) -> Vec<f64> {
    frame.values.iter().map(|&(re, im)| re.hypot(im)).collect()
}

/// Filters one channel with a random-walk (constant level) model. The state
/// starts at the first measurement, so `out[0] == series[0]`.
pub fn kalman_denoise(series: &[f64], params: &KalmanParams) -> Result<Vec<f64>> {
    params.validate()?;
    let (&first, rest) = series
        .split_first()
        .ok_or_else(|| Error::Empty("kalman_denoise on an empty series".into()))?;
    let mut out = Vec::with_capacity(series.len());
    let (mut x, mut p) = (first, params.p0);
    out.push(x);
    for &z in rest {
        p += params.q;
        let k = p / (p + params.r);
        x += k * (z - x);
        p *= 1.0 - k;
        out.push(x);
    }
    Ok(out)
}

/// Linear-interpolation resampling of `series` to `len` points spanning the
/// same interval.
pub fn resample_linear(series: &[f64], len: usize) -> Vec<f64> {
    if series.len() == 1 || len == 1 {
        return vec![series[0]; len];
    }
    let scale = (series.len() - 1) as f64 / (len - 1) as f64;
    (0..len)
        .map(|j| {
            let pos = j as f64 * scale;
            let i = (pos.floor() as usize).min(series.len() - 2);
            let frac = pos - i as f64;
            series[i] + frac * (series[i + 1] - series[i])
        })
        .collect()
}

/// Scales the whole sample into [0, 1] using its global min and max. A
/// sample with no dynamic range becomes all zeros.
pub fn min_max_normalize(values: &mut [f64]) {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let range = hi - lo;
    if range > 0.0 && range.is_finite() {
        values.iter_mut().for_each(|v| *v = (*v - lo) / range);
    } else {
        values.fill(0.0);
    }
}

/// amplitude → per-channel Kalman → resample to `cols` → normalize.
/// Every frame must carry exactly `rows` complex values.
pub fn frame_stream_to_sample(
    frames: &[CsiFrame],
    params: &KalmanParams,
    rows: usize,
    cols: usize,
) -> Result<AmplitudeSample> {
    if frames.len() < 2 {
        return Err(Error::Empty(format!(
            "need at least 2 frames, got {}",
            frames.len()
        )));
    }
    if cols == 0 {
        return Err(Error::config("target column count must be positive"));
    }
    if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| f.values.len() != rows) {
        return Err(Error::shape(format!(
            "frame {i} has {} values, expected {rows}",
            f.values.len()
        )));
    }
    let amps: Vec<Vec<f64>> = frames.iter().map(amplitude).collect();
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let channel: Vec<f64> = amps.iter().map(|a| a[r]).collect();
        let smooth = kalman_denoise(&channel, params)?;
        out.extend(resample_linear(&smooth, cols));
    }
    min_max_normalize(&mut out);
    AmplitudeSample::new(rows, cols, out.into_iter().map(|v| v as f32).collect())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NdjsonFrame {
    t: f64,
    re: Vec<f64>,
    im: Vec<f64>,
}

/// Reads newline-delimited `{"t": .., "re": [..], "im": [..]}` records.
/// Blank lines are skipped; frames come back sorted by `t` (stable).
pub fn import_ndjson(path: impl AsRef<Path>) -> Result<Vec<CsiFrame>> {
    parse_ndjson(BufReader::new(File::open(path)?))
}

pub fn parse_ndjson(reader: impl BufRead) -> Result<Vec<CsiFrame>> {
    let mut frames = Vec::new();
    let mut width: Option<usize> = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: NdjsonFrame = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        if rec.re.len() != rec.im.len() {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("re has {} values but im has {}", rec.re.len(), rec.im.len()),
            });
        }
        match width {
            None => width = Some(rec.re.len()),
            Some(w) if w != rec.re.len() => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("{} values, earlier frames have {w}", rec.re.len()),
                })
            }
            _ => {}
        }
        if !rec.t.is_finite() || rec.re.iter().chain(&rec.im).any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line: line_no,
                msg: "non-finite value".into(),
            });
        }
        frames.push(CsiFrame {
            timestamp: rec.t,
            values: rec.re.into_iter().zip(rec.im).collect(),
        });
    }
    frames.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn frame(t: f64, values: Vec<(f64, f64)>) -> CsiFrame {
        CsiFrame { timestamp: t, values }
    }

    #[test]
    fn amplitude_examples() {
        let f = frame(0.0, vec![(3.0, 4.0), (0.0, 0.0), (1.0, 0.0)]);
        assert_eq!(amplitude(&f), vec![5.0, 0.0, 1.0]);
    }

    #[test]
    fn kalman_constant_and_single() {
        let out = kalman_denoise(&[5.0; 100], &KalmanParams::default()).unwrap();
        assert!((out[99] - 5.0).abs() < 1e-3);
        assert_eq!(kalman_denoise(&[7.0], &KalmanParams::default()).unwrap(), vec![7.0]);
        assert!(matches!(kalman_denoise(&[], &KalmanParams::default()), Err(Error::Empty(_))));
    }

    #[test]
    fn kalman_converges_from_offset_start() {
        // first measurement is an outlier; error to the true level must shrink monotonically
        let mut series = vec![9.0];
        series.extend(std::iter::repeat_n(5.0, 300));
        let out = kalman_denoise(&series, &KalmanParams::default()).unwrap();
        let err: Vec<f64> = out.iter().map(|v| (v - 5.0).abs()).collect();
        assert!(err.windows(2).all(|w| w[1] <= w[0]));
        assert!(err[300] < 1e-3);
    }

    #[test]
    fn kalman_rejects_bad_params() {
        let p = KalmanParams { q: 0.0, ..Default::default() };
        assert!(kalman_denoise(&[1.0, 2.0], &p).is_err());
    }

    #[test]
    fn pipeline_constant_channels() {
        let (rows, cols) = (4, 6);
        let levels = [2.0, 7.0, 3.0, 5.0];
        let frames: Vec<CsiFrame> = (0..cols)
            .map(|t| frame(t as f64, levels.iter().map(|&c| (c, 0.0)).collect()))
            .collect();
        let s = frame_stream_to_sample(&frames, &KalmanParams::default(), rows, cols).unwrap();
        for r in 0..rows {
            assert!(s.row(r).iter().all(|&v| v == s.row(r)[0]));
        }
        let min = s.values().iter().cloned().fold(f32::INFINITY, f32::min);
        let max = s.values().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        assert_eq!((min, max), (0.0, 1.0));
        assert_eq!(s.row(0)[0], 0.0);
        assert_eq!(s.row(1)[0], 1.0);
    }

    #[test]
    fn pipeline_resamples_to_target_columns() {
        let frames: Vec<CsiFrame> = (0..256)
            .map(|t| frame(t as f64, vec![((t as f64 * 0.1).sin() + 2.0, 0.5); 3]))
            .collect();
        let s = frame_stream_to_sample(&frames, &KalmanParams::default(), 3, 128).unwrap();
        assert_eq!(s.shape(), [3, 128]);
    }

    #[test]
    fn pipeline_errors() {
        let p = KalmanParams::default();
        assert!(matches!(
            frame_stream_to_sample(&[frame(0.0, vec![(1.0, 0.0)])], &p, 1, 4),
            Err(Error::Empty(_))
        ));
        let frames = vec![frame(0.0, vec![(1.0, 0.0)]), frame(1.0, vec![(1.0, 0.0), (2.0, 0.0)])];
        assert!(frame_stream_to_sample(&frames, &p, 1, 4).is_err());
    }

    #[test]
    fn pipeline_flat_sample_is_zero() {
        let frames = vec![frame(0.0, vec![(1.0, 1.0); 2]); 5];
        let s = frame_stream_to_sample(&frames, &KalmanParams::default(), 2, 3).unwrap();
        assert!(s.values().iter().all(|&v| v == 0.0));
    }

    fn seeded_stream(seed: u64, rows: usize, len: usize) -> Vec<CsiFrame> {
        let mut s = rng::stream(seed, &[]);
        (0..len)
            .map(|t| {
                let values = (0..rows)
                    .map(|r| {
                        let base = 1.0 + (t as f64 * 0.05 + r as f64).sin();
                        (base + 0.1 * rng::normal(&mut s), 0.1 * rng::normal(&mut s))
                    })
                    .collect();
                frame(t as f64, values)
            })
            .collect()
    }

    #[test]
    fn pipeline_is_deterministic() {
        let p = KalmanParams::default();
        let a = frame_stream_to_sample(&seeded_stream(3, 6, 200), &p, 6, 32).unwrap();
        let b = frame_stream_to_sample(&seeded_stream(3, 6, 200), &p, 6, 32).unwrap();
        let bits = |s: &AmplitudeSample| s.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn ndjson_parsing() {
        let text = "{\"t\":2,\"re\":[1,2],\"im\":[0,0]}\n\n{\"t\":0,\"re\":[3,4],\"im\":[4,3]}\n{\"t\":1,\"re\":[0,0],\"im\":[1,1]}\n";
        let frames = parse_ndjson(text.as_bytes()).unwrap();
        assert_eq!(frames.len(), 3);
        assert_eq!(frames.iter().map(|f| f.timestamp).collect::<Vec<_>>(), [0.0, 1.0, 2.0]);
        assert_eq!(amplitude(&frames[0]), vec![5.0, 5.0]);

        let bad = "{\"t\":0,\"re\":[1],\"im\":[0]}\n{\"t\":1,\"re\":[1,2],\"im\":[0]}\n";
        match parse_ndjson(bad.as_bytes()) {
            Err(Error::Parse { line: 2, msg }) => assert!(msg.contains("im")),
            other => panic!("unexpected {other:?}"),
        }
        let ragged = "{\"t\":0,\"re\":[1],\"im\":[0]}\n{\"t\":1,\"re\":[1,2],\"im\":[0,0]}\n";
        assert!(matches!(parse_ndjson(ragged.as_bytes()), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_ndjson("not json\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
        assert!(parse_ndjson("".as_bytes()).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn amplitude_nonnegative_and_conjugate_invariant(re in -1e3f64..1e3, im in -1e3f64..1e3) {
            let a = amplitude(&frame(0.0, vec![(re, im)]))[0];
            let b = amplitude(&frame(0.0, vec![(re, -im)]))[0];
            prop_assert!(a >= 0.0);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn normalization_is_idempotent(mut v in proptest::collection::vec(-50.0f64..50.0, 2..64)) {
            min_max_normalize(&mut v);
            let once = v.clone();
            min_max_normalize(&mut v);
            for (a, b) in once.iter().zip(&v) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            prop_assert!(v.iter().all(|x| (0.0..=1.0).contains(x)));
        }

        #[test]
        fn kalman_preserves_length(v in proptest::collection::vec(-10.0f64..10.0, 1..200)) {
            let out = kalman_denoise(&v, &KalmanParams::default()).unwrap();
            prop_assert_eq!(out.len(), v.len());
            prop_assert_eq!(out[0], v[0]);
        }
    }
}
