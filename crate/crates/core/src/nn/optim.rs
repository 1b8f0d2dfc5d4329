//! SGD with classical momentum.

use crate::error::{Error, Result};
use crate::nn::params::ParamSet;
use crate::tensor::Real;

#[derive(Debug, Clone)]
pub struct OptimState<T: Real = f32> {
    lr: f64,
    momentum: f64,
    velocity: ParamSet<T>,
}

impl<T: Real> OptimState<T> {
    /// Zero velocities mirroring every tensor in `params`.
    pub fn new(lr: f64, momentum: f64, params: &ParamSet<T>) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {lr}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::config(format!("momentum must be in [0,1), got {momentum}")));
        }
        Ok(Self {
            lr,
            momentum,
            velocity: params.zeros_like(),
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn velocity(&self) -> &ParamSet<T> {
        &self.velocity
    }
}

/// `v ← μ·v − lr·g; θ ← θ + v` for every tensor named in `grads`.
/// Entries of `params` absent from `grads` (e.g. running statistics) are left alone.
pub fn sgd_step<T: Real>(params: &mut ParamSet<T>, grads: &ParamSet<T>, state: &mut OptimState<T>) -> Result<()> {
    for (name, g) in grads.iter() {
        let p = params.get(name)?;
        if p.shape() != g.shape() {
            return Err(Error::shape(format!(
                "sgd: gradient {name:?} has shape {:?}, parameter has {:?}",
                g.shape(),
                p.shape()
            )));
        }
        state.velocity.get(name)?;
    }
    let (mu, lr) = (T::of(state.momentum), T::of(state.lr));
    for (name, g) in grads.iter() {
        let v = state.velocity.get_mut(name)?;
        for (vi, &gi) in v.data_mut().iter_mut().zip(g.data()) {
            *vi = mu * *vi - lr * gi;
        }
        let v = state.velocity.get(name)?.data().to_vec();
        let p = params.get_mut(name)?;
        for (pi, vi) in p.data_mut().iter_mut().zip(v) {
            *pi = *pi + vi;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use approx::assert_abs_diff_eq;

    fn scalar(name: &str, v: f64) -> ParamSet<f64> {
        let mut p = ParamSet::new();
        p.insert(name, Tensor::full(&[1], v)).unwrap();
        p
    }

    #[test]
    fn plain_step() {
        let mut p = scalar("w", 1.0);
        let mut st = OptimState::new(0.1, 0.0, &p).unwrap();
        sgd_step(&mut p, &scalar("w", 2.0), &mut st).unwrap();
        assert_abs_diff_eq!(p.get("w").unwrap().data()[0], 0.8, epsilon = 1e-12);
    }

    #[test]
    fn zero_gradient_is_noop() {
        let mut p = scalar("w", 3.5);
        let mut st = OptimState::new(0.1, 0.9, &p).unwrap();
        sgd_step(&mut p, &scalar("w", 0.0), &mut st).unwrap();
        assert_eq!(p.get("w").unwrap().data()[0], 3.5);
    }

    #[test]
    fn momentum_recurrence() {
        let mut p = scalar("w", 0.0);
        let mut st = OptimState::new(0.1, 0.9, &p).unwrap();
        sgd_step(&mut p, &scalar("w", 1.0), &mut st).unwrap();
        sgd_step(&mut p, &scalar("w", 1.0), &mut st).unwrap();
        assert_abs_diff_eq!(p.get("w").unwrap().data()[0], -0.1 - 0.19, epsilon = 1e-12);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let mut p = scalar("w", 0.0);
        let mut st = OptimState::new(0.1, 0.9, &p).unwrap();
        let mut g = ParamSet::new();
        g.insert("w", Tensor::zeros(&[2])).unwrap();
        assert!(sgd_step(&mut p, &g, &mut st).is_err());
        assert!(sgd_step(&mut p, &scalar("other", 1.0), &mut st).is_err());
        assert_eq!(p.get("w").unwrap().data()[0], 0.0);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let p = scalar("w", 0.0);
        assert!(OptimState::new(0.0, 0.9, &p).is_err());
        assert!(OptimState::new(0.1, 1.0, &p).is_err());
    }
}
