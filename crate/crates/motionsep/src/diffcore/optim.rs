//! Parameters and SGD with momentum.

use super::tensor::{Real, Tensor};
use crate::{Error, Result};

/// Which learning-rate group a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    /// Sound separation network, fusion module, FiLM heads.
    Separation,
    /// Motion and appearance encoders.
    Visual,
}

/// A named trainable tensor with its momentum buffer.
#[derive(Debug, Clone)]
pub struct Parameter<T> {
    pub name: String,
    pub group: ParamGroup,
    pub value: Tensor<T>,
    pub velocity: Tensor<T>,
}

impl<T: Real> Parameter<T> {
    pub fn new(name: impl Into<String>, group: ParamGroup, value: Tensor<T>) -> Self {
        let velocity = Tensor::zeros(value.shape());
        Parameter {
            name: name.into(),
            group,
            value,
            velocity,
        }
    }
}

/// One momentum-SGD update: `v ← m·v + g`, `p ← p − lr·v`, with the learning
/// rate selected per group. `grads` is aligned with `params`; a `None` entry
/// leaves that parameter untouched.
pub fn sgd_step<T: Real>(
    params: &mut [Parameter<T>],
    grads: &[Option<Tensor<T>>],
    lr: impl Fn(ParamGroup) -> T,
    momentum: T,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::ShapeMismatch(format!(
            "sgd_step: {} parameters vs {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (p, g) in params.iter_mut().zip(grads) {
        let Some(g) = g else { continue };
        if g.shape() != p.value.shape() {
            return Err(Error::ShapeMismatch(format!(
                "sgd_step: gradient {:?} vs parameter {:?} for {}",
                g.shape(),
                p.value.shape(),
                p.name
            )));
        }
        let rate = lr(p.group);
        let vel = p.velocity.data_mut();
        let val = p.value.data_mut();
        for ((v, p), &g) in vel.iter_mut().zip(val.iter_mut()).zip(g.data()) {
            *v = momentum * *v + g;
            *p = *p - rate * *v;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(v: &[f64]) -> Parameter<f64> {
        Parameter::new(
            "p",
            ParamGroup::Separation,
            Tensor::from_f64(&[v.len()], v).unwrap(),
        )
    }

    #[test]
    fn zero_momentum_is_plain_descent() {
        let mut ps = vec![param(&[1.0, 2.0])];
        let g = vec![Some(Tensor::from_f64(&[2], &[0.5, -0.5]).unwrap())];
        sgd_step(&mut ps, &g, |_| 0.1, 0.0).unwrap();
        assert_eq!(ps[0].value.data(), &[1.0 - 0.05, 2.0 + 0.05]);
    }

    #[test]
    fn two_steps_constant_gradient_accumulate_momentum() {
        // v1 = g, p1 = p0 − lr·g; v2 = 0.9g + g, p2 = p1 − lr·1.9g
        // total displacement = lr·g·(1 + 1.9) = 2.9·lr·g
        let mut ps = vec![param(&[0.0])];
        let g = vec![Some(Tensor::from_f64(&[1], &[1.0]).unwrap())];
        sgd_step(&mut ps, &g, |_| 0.1, 0.9).unwrap();
        sgd_step(&mut ps, &g, |_| 0.1, 0.9).unwrap();
        assert!((ps[0].value.data()[0] - (-0.29)).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut ps = vec![param(&[1.5])];
        let g = vec![Some(Tensor::from_f64(&[1], &[0.0]).unwrap())];
        sgd_step(&mut ps, &g, |_| 0.1, 0.9).unwrap();
        assert_eq!(ps[0].value.data(), &[1.5]);
        let none = vec![None];
        sgd_step(&mut ps, &none, |_| 0.1, 0.9).unwrap();
        assert_eq!(ps[0].value.data(), &[1.5]);
    }
}
