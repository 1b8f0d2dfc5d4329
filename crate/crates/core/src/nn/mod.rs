//! Minimal dense layers with forward/backward passes: the building blocks of
//! the domain and gesture CNNs.

pub mod network;
pub mod ops;
pub mod optim;
pub mod params;

pub use network::{LayerSpec, Network, Tape};
pub use ops::{Activation, BnMode};
pub use optim::{sgd_step, OptimState};
pub use params::ParamSet;
