use crate::error::{AutodiffError, Result};
use crate::param::Parameter;
use crate::real::Real;

/// Adam with bias-corrected moments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }

    /// Applies one update to every trainable parameter and zeroes its
    /// gradient. Gradients are validated before anything is modified, so a
    /// non-finite gradient leaves all parameters untouched.
    pub fn step<'a, T: Real>(
        &self,
        params: impl IntoIterator<Item = &'a mut Parameter<T>>,
    ) -> Result<()> {
        let mut params: Vec<&mut Parameter<T>> =
            params.into_iter().filter(|p| p.trainable).collect();
        if let Some(bad) = params
            .iter()
            .find(|p| p.grad.iter().any(|g| !g.is_finite()))
        {
            return Err(AutodiffError::NonFinite(format!(
                "gradient of parameter {}",
                bad.name
            )));
        }
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (one, eps, lr) = (T::one(), T::of(self.eps), T::of(self.lr));
        for p in params.iter_mut() {
            p.adam.step += 1;
            let t = p.adam.step as i32;
            let bc1 = one - T::of(self.beta1.powi(t));
            let bc2 = one - T::of(self.beta2.powi(t));
            let Parameter {
                value, grad, adam, ..
            } = &mut **p;
            for (((w, g), m), v) in value
                .data_mut()
                .iter_mut()
                .zip(grad.iter_mut())
                .zip(adam.m.iter_mut())
                .zip(adam.v.iter_mut())
            {
                *m = b1 * *m + (one - b1) * *g;
                *v = b2 * *v + (one - b2) * *g * *g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
                *g = T::zero();
            }
        }
        Ok(())
    }
}
