//! Gradient-sign domain-gap elimination for device-free gesture recognition
//! from WiFi CSI amplitudes.
//!
//! A domain classifier ([`ahnet::DomainDcnn`]) is trained to recognize the
//! deployment domain of a sample. Adding `α · sign(∇ₓ loss)` to each sample
//! erases much of its domain identity, after which an ordinary gesture
//! recognizer ([`recognizers`]) is trained on the converted samples.

pub mod ahnet;
pub mod container;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod nn;
pub mod recognizers;
pub mod rng;
pub mod signal;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor};
