//! Seeded synthetic multi-domain, multi-gesture CSI amplitude benchmark.
//!
//! Each gesture owns a template made of three sinusoidally modulated ridges
//! in the channel × time plane. Each domain imprints a smooth per-channel
//! gain, a smooth per-channel offset and a temporal warp on every template.
//! Samples add Gaussian noise and are min-max normalized.
//!
//! Random draws come from [`crate::rng::stream`] keyed by
//! `(seed, tag, gesture | domain | (gesture, domain, rep))`, so any sample
//! can be regenerated independently of the others.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetMeta, LabeledSample};
use crate::error::{Error, Result};
use crate::rng;
use crate::signal::{min_max_normalize, AmplitudeSample};

const TAG_TEMPLATE: u64 = 0x7e3a;
const TAG_DOMAIN: u64 = 0xd0a1;
const TAG_NOISE: u64 = 0x4015;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub gestures: usize,
    pub domains: usize,
    pub reps: usize,
    pub rows: usize,
    pub cols: usize,
    /// Gaussian noise σ, relative to a unit-peak template.
    pub noise: f64,
    /// Peak deviation of the per-channel gain from 1.
    pub gain_strength: f64,
    /// Peak magnitude of the per-channel additive offset.
    pub offset_strength: f64,
    /// Maximum relative time stretch of a domain.
    pub warp_strength: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            gestures: 10,
            domains: 10,
            reps: 20,
            rows: 90,
            cols: 128,
            noise: 0.05,
            gain_strength: 0.5,
            offset_strength: 0.5,
            warp_strength: 0.15,
            seed: 42,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gestures", self.gestures),
            ("domains", self.domains),
            ("reps", self.reps),
            ("rows", self.rows),
            ("cols", self.cols),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be at least 1")));
            }
        }
        if self.gestures > u16::MAX as usize + 1 || self.domains > u16::MAX as usize + 1 {
            return Err(Error::config("label counts must fit in u16"));
        }
        for (name, v) in [
            ("noise", self.noise),
            ("gain_strength", self.gain_strength),
            ("offset_strength", self.offset_strength),
            ("warp_strength", self.warp_strength),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.gain_strength >= 1.0 {
            return Err(Error::config("gain_strength must be below 1"));
        }
        if self.warp_strength >= 0.5 {
            return Err(Error::config("warp_strength must be below 0.5"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Ridge {
    /// center row at mid-time, as a fraction of the row span
    center: f64,
    /// drift of the center across the full time span, fraction of rows
    slope: f64,
    /// gaussian half-width in rows
    width: f64,
    /// modulation cycles over the time span
    freq: f64,
    phase: f64,
    amp: f64,
}

/// A gesture's noise-free template, evaluated at continuous (row, time).
#[derive(Debug, Clone)]
pub struct Template {
    ridges: Vec<Ridge>,
    rows: usize,
    cols: usize,
}

impl Template {
    pub fn new(config: &GeneratorConfig, gesture: usize) -> Self {
        let mut s = rng::stream(config.seed, &[TAG_TEMPLATE, gesture as u64]);
        let ridges = (0..3)
            .map(|i| Ridge {
                center: rng::uniform_in(&mut s, 0.12, 0.88),
                slope: rng::uniform_in(&mut s, -0.3, 0.3),
                width: config.rows as f64 * rng::uniform_in(&mut s, 0.03, 0.08),
                freq: 1.0 + (gesture % 4) as f64 + i as f64 + rng::uniform_in(&mut s, 0.0, 1.0),
                phase: rng::uniform_in(&mut s, 0.0, TAU),
                amp: rng::uniform_in(&mut s, 0.6, 1.0),
            })
            .collect();
        Self {
            ridges,
            rows: config.rows,
            cols: config.cols,
        }
    }

    /// `t` is in column units and may fall outside `[0, cols)` after warping.
    pub fn value(&self, row: f64, t: f64) -> f64 {
        let u = t / self.cols as f64 - 0.5;
        self.ridges
            .iter()
            .map(|r| {
                let c = (r.center + r.slope * u) * self.rows as f64;
                let across = (-(row - c).powi(2) / (2.0 * r.width * r.width)).exp();
                let along = 0.5 + 0.5 * (TAU * r.freq * (u + 0.5) + r.phase).sin();
                r.amp * across * along
            })
            .sum()
    }
}

/// A domain's nuisance: per-channel gain and offset, plus a time stretch.
#[derive(Debug, Clone)]
pub struct DomainEffect {
    pub gain: Vec<f64>,
    pub offset: Vec<f64>,
    pub warp: f64,
}

/// Sum of two random low-frequency cosines across channels, scaled to peak
/// magnitude at most 1.
fn smooth_profile(s: &mut rng::Stream, rows: usize) -> Vec<f64> {
    let comps: Vec<(f64, f64, f64)> = (0..2)
        .map(|k| {
            (
                rng::uniform_in(s, 0.5, 2.5) + k as f64,
                rng::uniform_in(s, 0.0, TAU),
                rng::uniform_in(s, 0.4, 1.0),
            )
        })
        .collect();
    let raw: Vec<f64> = (0..rows)
        .map(|r| {
            let x = r as f64 / rows as f64;
            comps.iter().map(|(f, p, a)| a * (TAU * f * x + p).cos()).sum()
        })
        .collect();
    let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    raw.into_iter().map(|v| v / peak).collect()
}

impl DomainEffect {
    pub fn new(config: &GeneratorConfig, domain: usize) -> Self {
        let mut s = rng::stream(config.seed, &[TAG_DOMAIN, domain as u64]);
        let gain = smooth_profile(&mut s, config.rows)
            .into_iter()
            .map(|v| 1.0 + config.gain_strength * v)
            .collect();
        let offset = smooth_profile(&mut s, config.rows)
            .into_iter()
            .map(|v| config.offset_strength * v)
            .collect();
        let warp = 1.0 + config.warp_strength * rng::uniform_in(&mut s, -1.0, 1.0);
        Self { gain, offset, warp }
    }
}

/// Generates one normalized sample for `(gesture, domain, rep)`.
pub fn generate_sample(
    config: &GeneratorConfig,
    template: &Template,
    effect: &DomainEffect,
    gesture: usize,
    domain: usize,
    rep: usize,
) -> Result<AmplitudeSample> {
    let mut noise = rng::stream(config.seed, &[TAG_NOISE, gesture as u64, domain as u64, rep as u64]);
    let (rows, cols) = (config.rows, config.cols);
    let mid = cols as f64 / 2.0;
    let mut values = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for t in 0..cols {
            let warped = mid + (t as f64 - mid) / effect.warp;
            let clean = effect.gain[r] * template.value(r as f64, warped) + effect.offset[r];
            values.push(clean + config.noise * rng::normal(&mut noise));
        }
    }
    min_max_normalize(&mut values);
    AmplitudeSample::new(rows, cols, values.into_iter().map(|v| v as f32).collect())
}

/// Exactly `gestures × domains × reps` samples, ordered gesture-major, then
/// domain, then repetition.
pub fn generate_dataset(config: &GeneratorConfig) -> Result<Dataset> {
    config.validate()?;
    let templates: Vec<Template> = (0..config.gestures).map(|g| Template::new(config, g)).collect();
    let effects: Vec<DomainEffect> = (0..config.domains).map(|d| DomainEffect::new(config, d)).collect();
    let mut samples = Vec::with_capacity(config.gestures * config.domains * config.reps);
    for (g, template) in templates.iter().enumerate() {
        for (d, effect) in effects.iter().enumerate() {
            for rep in 0..config.reps {
                samples.push(LabeledSample {
                    sample: generate_sample(config, template, effect, g, d, rep)?,
                    domain: d,
                    gesture: g,
                });
            }
        }
    }
    let meta = DatasetMeta {
        shape: [config.rows, config.cols],
        gestures: config.gestures,
        domains: config.domains,
        count: samples.len(),
        seed: config.seed,
        provenance: serde_json::json!({
            "generator": "synthetic-ridges",
            "version": 1,
            "config": config,
        }),
    };
    Dataset::new(meta, samples)
}
