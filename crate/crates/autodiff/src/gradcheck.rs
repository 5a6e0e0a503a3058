//! Central finite-difference verification of tape gradients (64-bit).

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared on an absolute scale, since
/// their finite-difference estimate is dominated by rounding.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Largest relative error over the elements of each input.
    pub max_rel_error: Vec<f64>,
    pub max_abs_error: Vec<f64>,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.max_rel_error.iter().copied().fold(0.0, f64::max)
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.worst() < tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Deterministic projection weights in ±[0.5, 1.5) so that non-scalar outputs
/// are checked through a generic linear functional rather than a plain sum.
fn projection(n: usize) -> Vec<f64> {
    let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
    (0..n)
        .map(|_| {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            let u = (z >> 11) as f64 / (1u64 << 53) as f64;
            let mag = 0.5 + u;
            if z & 1 == 0 {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

fn scalar_output<F>(op: &F, inputs: &[Tensor<f64>], tape: &mut Tape<f64>, track: bool) -> Result<(Var, Vec<Var>)>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), track)).collect();
    let out = op(tape, &vars)?;
    let n = tape.value(out).numel();
    let out = if n == 1 {
        out
    } else {
        tape.weighted_sum(out, projection(n))?
    };
    Ok((out, vars))
}

/// Compares the tape gradient of `op` (reduced to a scalar by a fixed random
/// projection when its output is not scalar) with central differences of
/// step [`FD_STEP`], for every element of every input.
pub fn finite_difference_check<F>(op: F, inputs: &[Tensor<f64>]) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let (out, vars) = scalar_output(&op, inputs, &mut tape, true)?;
    let grads = tape.backward(out)?;

    let eval = |perturbed: &[Tensor<f64>]| -> Result<f64> {
        let mut t = Tape::new();
        let (o, _) = scalar_output(&op, perturbed, &mut t, false)?;
        Ok(t.value(o).data()[0])
    };

    let mut report = GradCheckReport {
        max_rel_error: Vec::with_capacity(inputs.len()),
        max_abs_error: Vec::with_capacity(inputs.len()),
    };
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (idx, var) in vars.iter().enumerate() {
        let zeros = vec![0.0; inputs[idx].numel()];
        let analytic = grads.wrt(*var).unwrap_or(&zeros).to_vec();
        let (mut worst_rel, mut worst_abs) = (0.0f64, 0.0f64);
        for e in 0..inputs[idx].numel() {
            let orig = inputs[idx].data()[e];
            work[idx].data_mut()[e] = orig + FD_STEP;
            let plus = eval(&work)?;
            work[idx].data_mut()[e] = orig - FD_STEP;
            let minus = eval(&work)?;
            work[idx].data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            worst_rel = worst_rel.max(relative_error(analytic[e], numeric));
            worst_abs = worst_abs.max((analytic[e] - numeric).abs());
        }
        report.max_rel_error.push(worst_rel);
        report.max_abs_error.push(worst_abs);
    }
    Ok(report)
}
