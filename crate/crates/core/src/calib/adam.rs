use crate::error::{Error, Result};
use crate::scalar::Real;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Moment accumulators for Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Real> {
    pub first: Vec<T>,
    pub second: Vec<T>,
    pub step: u64,
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Real> AdamState<T> {
    pub fn new(n_params: usize, learning_rate: T) -> Self {
        Self {
            first: vec![T::zero(); n_params],
            second: vec![T::zero(); n_params],
            step: 0,
            learning_rate,
            beta1: T::lit(BETA1),
            beta2: T::lit(BETA2),
            eps: T::lit(ADAM_EPS),
        }
    }

    /// One in-place update of `params` along `grad`.
    pub fn step(&mut self, grad: &[T], params: &mut [T]) -> Result<()> {
        if grad.len() != self.first.len() || params.len() != self.first.len() {
            return Err(Error::Dimension(format!(
                "Adam state holds {} parameters, got gradient {} and parameters {}",
                self.first.len(),
                grad.len(),
                params.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = T::one() - self.beta1.powi(t);
        let bc2 = T::one() - self.beta2.powi(t);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            *m = self.beta1 * *m + (T::one() - self.beta1) * g;
            *v = self.beta2 * *v + (T::one() - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Functional form: returns the updated state and parameters.
pub fn adam_step<T: Real>(
    mut state: AdamState<T>,
    grad: &[T],
    params: &[T],
) -> Result<(AdamState<T>, Vec<T>)> {
    let mut p = params.to_vec();
    state.step(grad, &mut p)?;
    Ok((state, p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let (st, p) = adam_step(AdamState::new(3, 0.01), &[0.0; 3], &[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn constant_gradient_gives_unit_steps() {
        // with bias correction, m_hat = g and v_hat = g^2 exactly for a
        // constant gradient, so each step is lr * g / (|g| + eps)
        let lr = 0.01;
        let g = [0.3f64, -2.0];
        let mut st = AdamState::new(2, lr);
        let mut p = vec![0.0, 0.0];
        for t in 1..=200 {
            let before = p.clone();
            st.step(&g, &mut p).unwrap();
            for k in 0..2 {
                let expected = -lr * g[k] / (g[k].abs() + ADAM_EPS);
                let got = p[k] - before[k];
                assert!((got - expected).abs() < 1e-12, "step {t}: {got} vs {expected}");
            }
        }
    }

    #[test]
    fn first_moment_is_linear_in_gradient() {
        let (a, _) = adam_step(AdamState::new(2, 0.1), &[0.5, -1.5], &[0.0, 0.0]).unwrap();
        let (b, _) = adam_step(AdamState::new(2, 0.1), &[-0.5, 1.5], &[0.0, 0.0]).unwrap();
        assert_eq!(a.first[0], -b.first[0]);
        assert_eq!(a.first[1], -b.first[1]);
        assert_eq!(a.second, b.second);
    }

    #[test]
    fn shape_mismatch() {
        assert!(adam_step(AdamState::new(2, 0.1), &[0.0; 3], &[0.0; 2]).is_err());
    }
}
