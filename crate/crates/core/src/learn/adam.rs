//! Bias-corrected Adam, generic over the float type.

use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig<F> {
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
}

impl<F: Float> Default for AdamConfig<F> {
    fn default() -> Self {
        Self {
            beta1: F::from(0.9).unwrap(),
            beta2: F::from(0.999).unwrap(),
            eps: F::from(1e-8).unwrap(),
        }
    }
}

/// First and second moments of one weight tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub m: Vec<F>,
    pub v: Vec<F>,
    pub step: u64,
}

impl<F: Float> AdamState<F> {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![F::zero(); len],
            v: vec![F::zero(); len],
            step: 0,
        }
    }
}

/// One Adam step: `w -= eta * m_hat / (sqrt(v_hat) + eps)`.
///
/// Panics if the three buffers differ in length.
pub fn adam_update<F: Float>(
    w: &mut [F],
    grad: &[F],
    state: &mut AdamState<F>,
    eta: F,
    cfg: &AdamConfig<F>,
) {
    assert!(
        w.len() == grad.len() && w.len() == state.m.len() && w.len() == state.v.len(),
        "adam buffers differ in length"
    );
    state.step += 1;
    let one = F::one();
    let t = state.step as i32;
    let bc1 = one - cfg.beta1.powi(t);
    let bc2 = one - cfg.beta2.powi(t);
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    for ((wi, &g), (m, v)) in w
        .iter_mut()
        .zip(grad)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *wi = *wi - eta * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}
