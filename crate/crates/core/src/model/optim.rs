//! Stochastic gradient descent with (Nesterov) momentum.
//!
//! With learning rate `lr`, momentum `m`, gradient `g` and velocity `v`:
//!
//! ```text
//! v' = m·v − lr·g
//! θ' = θ + m·v' − lr·g      (Nesterov)
//! θ' = θ + v'               (classical momentum)
//! ```

use super::Params;
use crate::error::Result;

pub type Velocity = Params;

/// In-place update of `params` and `velocity`.
pub fn sgd_step(
    params: &mut Params,
    grads: &Params,
    velocity: &mut Velocity,
    lr: f64,
    momentum: f64,
    nesterov: bool,
) -> Result<()> {
    params.check_layout(grads)?;
    params.check_layout(velocity)?;
    for ((theta, g), v) in params.values_mut().zip(grads.values()).zip(velocity.values_mut()) {
        *v = momentum * *v - lr * g;
        *theta = if nesterov {
            *theta + momentum * *v - lr * g
        } else {
            *theta + *v
        };
    }
    Ok(())
}

/// Functional Nesterov step returning `(θ', v')`.
pub fn sgd_nesterov_step(
    params: &Params,
    grads: &Params,
    velocity: &Velocity,
    lr: f64,
    momentum: f64,
) -> Result<(Params, Velocity)> {
    let mut p = params.clone();
    let mut v = velocity.clone();
    sgd_step(&mut p, grads, &mut v, lr, momentum, true)?;
    Ok((p, v))
}

#[cfg(test)]
mod tests {
    use super::super::Tensor;
    use super::*;
    use crate::error::Error;

    fn scalar(v: f64) -> Params {
        Params {
            tensors: vec![Tensor {
                name: "theta".into(),
                shape: vec![1],
                data: vec![v],
            }],
        }
    }

    fn value(p: &Params) -> f64 {
        p.tensors[0].data[0]
    }

    #[test]
    fn two_step_trace() {
        let g = scalar(1.0);
        let (p1, v1) = sgd_nesterov_step(&scalar(1.0), &g, &scalar(0.0), 0.1, 0.9).unwrap();
        assert!((value(&v1) - -0.1).abs() <= 1e-15);
        assert!((value(&p1) - 0.81).abs() <= 1e-15);
        // v'' = 0.9·(−0.1) − 0.1 = −0.19; θ'' = 0.81 + 0.9·(−0.19) − 0.1 = 0.539
        let (p2, v2) = sgd_nesterov_step(&p1, &g, &v1, 0.1, 0.9).unwrap();
        assert!((value(&v2) - -0.19).abs() <= 1e-15);
        assert!((value(&p2) - 0.539).abs() <= 1e-15);
    }

    #[test]
    fn zero_gradient_coasts() {
        let (p, v) = sgd_nesterov_step(&scalar(2.0), &scalar(0.0), &scalar(0.5), 0.1, 0.9).unwrap();
        assert!((value(&v) - 0.45).abs() < 1e-15);
        assert!((value(&p) - (2.0 + 0.9 * 0.45)).abs() < 1e-15);
    }

    #[test]
    fn classical_momentum() {
        let mut p = scalar(1.0);
        let mut v = scalar(0.0);
        sgd_step(&mut p, &scalar(1.0), &mut v, 0.1, 0.9, false).unwrap();
        assert!((value(&p) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let two = Params {
            tensors: vec![Tensor::zeros("theta", vec![2])],
        };
        assert!(matches!(
            sgd_nesterov_step(&scalar(0.0), &two, &scalar(0.0), 0.1, 0.9),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
