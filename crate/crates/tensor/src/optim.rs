use crate::error::{Result, TensorError};

/// Moment estimates for Adam, one pair of buffers per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Zeroed moments shaped like `sizes` with the usual defaults
    /// (0.9, 0.999, 1e-8).
    pub fn new(sizes: &[usize]) -> Self {
        Self {
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update applied in place to `params`.
pub fn adam_step(params: &mut [&mut [f64]], grads: &[&[f64]], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(TensorError::Contract(format!(
            "adam_step: {} params, {} grads, {} moment buffers",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        if p.len() != g.len() || m.len() != g.len() {
            return Err(TensorError::Contract(format!(
                "adam_step: tensor {i} has {} values, {} grads, {} moments",
                p.len(),
                g.len(),
                m.len()
            )));
        }
        for j in 0..g.len() {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_scalar(x: &mut f64, g: f64, state: &mut AdamState, lr: f64) {
        let mut buf = [*x];
        adam_step(&mut [&mut buf[..]], &[&[g][..]], state, lr).unwrap();
        *x = buf[0];
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = vec![1.5, -2.0, 0.25];
        let mut st = AdamState::new(&[3]);
        for _ in 0..5 {
            adam_step(&mut [&mut p[..]], &[&[0.0; 3][..]], &mut st, 0.1).unwrap();
        }
        assert_eq!(p, vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient() {
        for g in [3.0, -0.2, 1e-3] {
            let mut x = 1.0;
            let mut st = AdamState::new(&[1]);
            step_scalar(&mut x, g, &mut st, 0.01);
            let moved = x - 1.0;
            assert!(moved.signum() == -g.signum());
            assert!((moved.abs() - 0.01).abs() < 1e-6, "moved {moved}");
        }
    }

    #[test]
    fn minimizes_square() {
        let mut x = 5.0;
        let mut st = AdamState::new(&[1]);
        for _ in 0..200 {
            let g = 2.0 * x;
            step_scalar(&mut x, g, &mut st, 0.1);
        }
        assert!(x.abs() < 1e-2, "x = {x}");
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let mut p = vec![0.0; 2];
        let mut st = AdamState::new(&[2]);
        assert!(adam_step(&mut [&mut p[..]], &[&[0.0; 3][..]], &mut st, 0.1).is_err());
    }
}
