use crate::error::{Error, Result};
use crate::neuralnet::Param;

/// Adam moment buffers, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimState {
    pub fn new(params: &[Param]) -> Self {
        let zeros = || params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of every parameter from its `grad`.
pub fn adam_step(params: &mut [Param], state: &mut OptimState, lr: f64) -> Result<()> {
    if params.len() != state.m.len()
        || params.iter().zip(&state.m).any(|(p, m)| p.value.len() != m.len())
    {
        return Err(Error::Shape("optimizer state does not match parameters".into()));
    }
    if let Some(p) = params.iter().find(|p| !p.grad.all_finite()) {
        return Err(Error::Numerics {
            iteration: state.t as usize,
            detail: format!("non-finite gradient in {}", p.name),
        });
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let g = p.grad.data();
        let x = p.value.data_mut();
        for i in 0..x.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            x[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}
