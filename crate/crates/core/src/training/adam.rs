use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::layers::Parameters;
use crate::numerics::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// First and second moments for every tensor of one parameter group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &dyn Parameters) -> Self {
        let mut m = Vec::new();
        params.visit("", &mut |_, t| m.push(Tensor::zeros(t.shape())));
        Self {
            v: m.clone(),
            m,
            step: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
        }
    }
}

/// One bias-corrected ADAM update. Shapes are checked before anything is written.
pub fn adam_step(params: &mut dyn Parameters, grads: &[Tensor], state: &mut AdamState, lr: f64) -> Result<(), TrainError> {
    let mut shapes = Vec::new();
    params.visit("", &mut |_, t| shapes.push(t.shape().to_vec()));
    if grads.len() != shapes.len() || state.m.len() != shapes.len() || state.v.len() != shapes.len() {
        return Err(TrainError::Shape {
            what: "adam gradients",
            expected: shapes.len(),
            got: grads.len(),
        });
    }
    for (i, s) in shapes.iter().enumerate() {
        if grads[i].shape() != s.as_slice() || state.m[i].shape() != s.as_slice() || state.v[i].shape() != s.as_slice() {
            return Err(TrainError::Shape {
                what: "adam tensor",
                expected: s.iter().product(),
                got: grads[i].len(),
            });
        }
    }
    if !(lr > 0.0) {
        return Err(TrainError::Config(format!("learning rate {lr} must be > 0")));
    }
    state.step += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powf(state.step as f64);
    let c2 = 1.0 - b2.powf(state.step as f64);
    let mut i = 0;
    params.visit_mut(&mut |p| {
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        for (k, mk) in m.iter_mut().enumerate() {
            *mk = b1 * *mk + (1.0 - b1) * g[k];
        }
        let v = state.v[i].data_mut();
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = b2 * *vk + (1.0 - b2) * g[k] * g[k];
        }
        let (m, v) = (state.m[i].data(), state.v[i].data());
        for (k, x) in p.data_mut().iter_mut().enumerate() {
            let mh = m[k] / c1;
            let vh = v[k] / c2;
            *x -= lr * mh / (vh.sqrt() + eps);
        }
        i += 1;
    });
    Ok(())
}

/// Rescales `grads` so their joint L2 norm is at most `max_norm`; returns the norm before clipping.
/// A `max_norm` of 0 disables clipping.
pub fn clip_by_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Tensor::norm_sq).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scalar(Tensor);

    impl Parameters for Scalar {
        fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
            f(prefix.to_string(), &self.0);
        }
        fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
            f(&mut self.0);
        }
    }

    fn scalar(x: f64) -> Scalar {
        Scalar(Tensor::new(vec![1, 1], vec![x]).unwrap())
    }

    fn g(x: f64) -> Vec<Tensor> {
        vec![Tensor::new(vec![1, 1], vec![x]).unwrap()]
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar(0.7);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g(0.0), &mut s, 0.01).unwrap();
        assert_eq!(p.0.data()[0], 0.7);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_has_magnitude_lr() {
        for grad in [1e-3, 0.5, 42.0, -7.0] {
            let mut p = scalar(0.0);
            let mut s = AdamState::new(&p);
            adam_step(&mut p, &g(grad), &mut s, 0.01).unwrap();
            let step = p.0.data()[0];
            assert!((step.abs() - 0.01).abs() < 1e-6, "{grad}: {step}");
            assert_eq!(step.signum(), -grad.signum());
        }
    }

    #[test]
    fn converges_on_quadratic() {
        let mut p = scalar(1.0);
        let mut s = AdamState::new(&p);
        for _ in 0..200 {
            let x = p.0.data()[0];
            adam_step(&mut p, &g(2.0 * x), &mut s, 0.1).unwrap();
        }
        assert!(p.0.data()[0].abs() < 0.05, "{}", p.0.data()[0]);
    }

    #[test]
    fn shape_mismatch_rejected_without_mutation() {
        let mut p = scalar(1.0);
        let mut s = AdamState::new(&p);
        let bad = vec![Tensor::zeros(&[2, 1])];
        assert!(adam_step(&mut p, &bad, &mut s, 0.1).is_err());
        assert!(adam_step(&mut p, &[], &mut s, 0.1).is_err());
        assert_eq!(s.step, 0);
        assert_eq!(p.0.data()[0], 1.0);
    }

    #[test]
    fn clipping() {
        let mut gs = vec![Tensor::new(vec![1, 2], vec![3.0, 4.0]).unwrap()];
        assert_eq!(clip_by_norm(&mut gs, 1.0), 5.0);
        assert!((gs[0].norm_sq().sqrt() - 1.0).abs() < 1e-15);
        let mut gs = vec![Tensor::new(vec![1, 2], vec![0.3, 0.4]).unwrap()];
        clip_by_norm(&mut gs, 1.0);
        assert_eq!(gs[0].data(), &[0.3, 0.4]);
    }
}
