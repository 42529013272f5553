//! Central finite-difference verification of tape gradients, run in f64.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::Result;
use rand::Rng;

/// Outcome of one finite-difference sweep.
#[derive(Debug)]
pub struct GradReport {
    /// Worst relative error over all checked elements.
    pub max_rel_err: f64,
    /// (input index, element index) of the worst element.
    pub worst: (usize, usize),
    pub elements_checked: usize,
}

/// Compare analytic gradients of `build`'s scalar output against central
/// finite differences for every element of every input.
///
/// `build` must be a pure function of the leaf values it is handed.
pub fn check_gradients(
    inputs: &[Tensor<f64>],
    h: f64,
    build: impl Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
) -> Result<GradReport> {
    let eval = |tensors: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = tensors
            .iter()
            .map(|t| tape.leaf(t.clone(), false))
            .collect();
        let loss = build(&mut tape, &vars)?;
        Ok(tape.value(loss).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut report = GradReport {
        max_rel_err: 0.0,
        worst: (0, 0),
        elements_checked: 0,
    };
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (ii, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[ii]);
        for j in 0..input.numel() {
            let orig = input.data()[j];
            work[ii].data_mut()[j] = orig + h;
            let lp = eval(&work)?;
            work[ii].data_mut()[j] = orig - h;
            let lm = eval(&work)?;
            work[ii].data_mut()[j] = orig;
            let numeric = (lp - lm) / (2.0 * h);
            let a = analytic.map_or(0.0, |g| g.data()[j]);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = (ii, j);
            }
            report.elements_checked += 1;
        }
    }
    Ok(report)
}

/// Contract a tensor-valued var against fixed random weights so that every
/// output element influences the scalar loss.
pub fn weighted_sum(tape: &mut Tape<f64>, y: Var, weights: &Tensor<f64>) -> Result<Var> {
    let w = tape.constant(weights.clone());
    let prod = tape.mul(y, w)?;
    Ok(tape.sum(prod))
}

/// Uniform random tensor, for test inputs and weight initialization.
pub fn uniform_tensor<T: super::tensor::Real>(
    rng: &mut impl Rng,
    shape: &[usize],
    lo: f64,
    hi: f64,
) -> Tensor<T> {
    let data = (0..shape.iter().product::<usize>())
        .map(|_| T::from_f64c(rng.gen_range(lo..hi)))
        .collect();
    Tensor::from_vec(shape, data).expect("uniform_tensor shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn catches_correct_mul_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = uniform_tensor::<f64>(&mut rng, &[6], -1.0, 1.0);
        let w = uniform_tensor::<f64>(&mut rng, &[6], -1.0, 1.0);
        let report = check_gradients(&[x], 1e-5, |tape, vars| {
            let sq = tape.mul(vars[0], vars[0])?;
            weighted_sum(tape, sq, &w)
        })
        .unwrap();
        assert!(report.max_rel_err < 1e-7, "err {}", report.max_rel_err);
    }
}
