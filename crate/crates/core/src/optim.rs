//! Adaptive-moment (Adam) optimizer over [`MlpParams`].

use crate::error::{MiriError, Result};
use crate::nn::MlpParams;

#[derive(Clone, Debug)]
pub struct OptimizerState {
    first: MlpParams,
    second: MlpParams,
    step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    /// Zeroed moments shaped like `params`, with decays 0.9/0.999 and eps 1e-8.
    pub fn new(params: &MlpParams, learning_rate: f64) -> Self {
        OptimizerState {
            first: params.zeros_like(),
            second: params.zeros_like(),
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update, in place.
///
/// Parameters are left untouched when any gradient coordinate is non-finite.
pub fn adam_step(params: &mut MlpParams, grads: &MlpParams, opt: &mut OptimizerState) -> Result<()> {
    if params.sizes() != grads.sizes() || params.sizes() != opt.first.sizes() {
        return Err(MiriError::shape(
            format!("gradients shaped {:?}", params.sizes()),
            format!("{:?}", grads.sizes()),
        ));
    }
    if !grads.is_finite() {
        return Err(MiriError::Training {
            step: opt.step as usize + 1,
            message: "non-finite gradient".into(),
        });
    }
    opt.step += 1;
    let t = opt.step as i32;
    let (b1, b2, eps) = (opt.beta1, opt.beta2, opt.eps);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = opt.learning_rate;

    let chunks = params
        .chunks_mut()
        .zip(grads.chunks())
        .zip(opt.first.chunks_mut().zip(opt.second.chunks_mut()));
    for ((p, g), (m, v)) in chunks {
        for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::nn::{Activation, Dense};
    use crate::rng::RngState;

    fn scalar(w: f64) -> MlpParams {
        MlpParams::from_layers(
            vec![Dense {
                weights: Matrix::from_rows(&[[w]]),
                bias: vec![0.0],
            }],
            Activation::Identity,
        )
        .unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut rng = RngState::new(0);
        let mut p = MlpParams::init(&[3, 4, 2], Activation::Silu, &mut rng).unwrap();
        let before = p.clone();
        let mut opt = OptimizerState::new(&p, 1e-3);
        let zero = p.zeros_like();
        adam_step(&mut p, &zero, &mut opt).unwrap();
        assert_eq!(p, before);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        let mut rng = RngState::new(1);
        let mut p = MlpParams::init(&[2, 3, 1], Activation::Tanh, &mut rng).unwrap();
        let before = p.to_flat();
        let mut g = p.zeros_like();
        for (i, c) in g.chunks_mut().flatten().enumerate() {
            *c = if i % 2 == 0 { 0.3 + i as f64 } else { -0.02 * (i as f64 + 1.0) };
        }
        let mut opt = OptimizerState::new(&p, 0.01);
        adam_step(&mut p, &g, &mut opt).unwrap();
        for ((a, b), g) in p.to_flat().iter().zip(&before).zip(g.to_flat()) {
            let delta = a - b;
            assert!((delta + 0.01 * g.signum()).abs() < 1e-7, "{delta}");
        }
    }

    #[test]
    fn scalar_descent_is_monotone() {
        // f(w) = (w - 3)^2
        let mut p = scalar(0.0);
        let mut opt = OptimizerState::new(&p, 0.1);
        let mut prev = 0.0;
        for _ in 0..10 {
            let w = p.layers()[0].weights[(0, 0)];
            let mut g = p.zeros_like();
            g.layers_mut()[0].weights[(0, 0)] = 2.0 * (w - 3.0);
            adam_step(&mut p, &g, &mut opt).unwrap();
            let next = p.layers()[0].weights[(0, 0)];
            assert!(next > prev && next < 3.0, "{prev} -> {next}");
            prev = next;
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = scalar(1.0);
        let mut opt = OptimizerState::new(&p, 0.1);
        let mut g = p.zeros_like();
        g.layers_mut()[0].bias[0] = f64::NAN;
        let err = adam_step(&mut p, &g, &mut opt).unwrap_err();
        assert!(matches!(err, MiriError::Training { step: 1, .. }));
        assert_eq!(p, scalar(1.0));
    }
}
