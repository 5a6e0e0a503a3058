use fcdd_autodiff::{CustomOp, Real, Result, Tape, Tensor, Var};

/// `sqrt(x² + 1) - 1`, written as `x² / (sqrt(x² + 1) + 1)` so small inputs
/// keep full precision.
pub fn pseudo_huber<T: Real>(x: T) -> T {
    let s = (x * x + T::one()).sqrt();
    x * x / (s + T::one())
}

struct PseudoHuber;

impl<T: Real> CustomOp<T> for PseudoHuber {
    fn name(&self) -> &str {
        "pseudo_huber"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _out: &Tensor<T>, g: &[T]) -> Vec<Vec<T>> {
        let dx = inputs[0]
            .data()
            .iter()
            .zip(g)
            .map(|(&x, &d)| d * x / (x * x + T::one()).sqrt())
            .collect();
        vec![dx]
    }
}

/// Elementwise heatmap layer on the raw network output.
pub fn heatmap<T: Real>(tape: &mut Tape<T>, phi: Var) -> Result<Var> {
    let x = tape.value(phi);
    let out = Tensor::new(
        x.shape().to_vec(),
        x.data().iter().map(|&v| pseudo_huber(v)).collect(),
    )?;
    tape.custom(Box::new(PseudoHuber), &[phi], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_points() {
        assert_eq!(pseudo_huber(0.0f64), 0.0);
        assert!((pseudo_huber(3f64.sqrt()) - 1.0).abs() < 1e-15);
        assert!((pseudo_huber(-(3f64.sqrt())) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bounded_by_abs() {
        for i in -200..=200 {
            let x = i as f64 * 0.173;
            let a = pseudo_huber(x);
            assert!(a >= 0.0 && a <= x.abs());
            assert_eq!(a, pseudo_huber(-x));
            let naive = (x * x + 1.0).sqrt() - 1.0;
            assert!((a - naive).abs() <= 1e-12 * (1.0 + naive));
        }
    }
}
