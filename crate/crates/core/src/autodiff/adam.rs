//! Adam with decoupled weight decay.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moments per parameter plus the step count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
        Self { m: zeros(), v: zeros(), step: 0 }
    }
}

/// One Adam update in place. Weight decay is applied directly to the
/// parameters (`p -= lr * wd * p`), not folded into the gradient.
pub fn adam_step(cfg: &Adam, params: &mut [&mut Tensor], grads: &[Tensor], state: &mut AdamState, lr: f64, weight_decay: f64) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        assert_eq!(p.shape(), g.shape());
        let (pd, gd) = (p.data_mut(), g.data());
        for k in 0..pd.len() {
            let mk = &mut m.data_mut()[k];
            *mk = cfg.beta1 * *mk + (1.0 - cfg.beta1) * gd[k];
            let vk = &mut v.data_mut()[k];
            *vk = cfg.beta2 * *vk + (1.0 - cfg.beta2) * gd[k] * gd[k];
            let m_hat = m.data()[k] / bc1;
            let v_hat = v.data()[k] / bc2;
            pd[k] -= lr * (m_hat / (v_hat.sqrt() + cfg.eps) + weight_decay * pd[k]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = Tensor::from_vec(1, 3, vec![0.5, -1.0, 2.0]).unwrap();
        let before = p.clone();
        let mut state = AdamState::new(std::slice::from_ref(&p));
        for _ in 0..5 {
            adam_step(&Adam::default(), &mut [&mut p], &[Tensor::zeros(1, 3)], &mut state, 0.1, 0.0);
        }
        assert_eq!(p, before);
        assert_eq!(state.step, 5);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let mut p = Tensor::zeros(1, 3);
        let g = Tensor::from_vec(1, 3, vec![0.3, -2.0, 1e-3]).unwrap();
        let mut state = AdamState::new(std::slice::from_ref(&p));
        let lr = 0.01;
        adam_step(&Adam::default(), &mut [&mut p], std::slice::from_ref(&g), &mut state, lr, 0.0);
        // m_hat = g, v_hat = g^2, so the step is lr * |g| / (|g| + eps)
        for (pk, gk) in p.data().iter().zip(g.data()) {
            let expect = -gk.signum() * lr * gk.abs() / (gk.abs() + 1e-8);
            assert!((pk - expect).abs() < 1e-15 * lr);
            assert!((pk.abs() - lr).abs() < lr * 1e-5);
        }
    }

    #[test]
    fn weight_decay_shrinks_parameters() {
        let mut p = Tensor::filled(1, 2, 1.0);
        let mut state = AdamState::new(std::slice::from_ref(&p));
        adam_step(&Adam::default(), &mut [&mut p], &[Tensor::zeros(1, 2)], &mut state, 0.1, 0.5);
        assert!(p.data().iter().all(|&v| (v - 0.95).abs() < 1e-15));
    }
}
