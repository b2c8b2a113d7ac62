use crate::error::{Error, Result};

use super::array::Array2;

/// Adam optimizer state with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Array2>,
    second: Vec<Array2>,
}

impl AdamState {
    /// Fresh state for parameters with the given shapes.
    pub fn new(learning_rate: f64, shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let (first, second) = shapes
            .into_iter()
            .map(|(r, c)| (Array2::zeros(r, c), Array2::zeros(r, c)))
            .unzip();
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first,
            second,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Array2] {
        &self.first
    }

    /// Applies one update in place.
    pub fn step(&mut self, params: &mut [&mut Array2], grads: &[Array2]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::Config(format!(
                "adam state tracks {} parameters, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(Error::Dimension {
                    op: "adam_step",
                    left: p.shape(),
                    right: g.shape(),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.eps);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            let pd = p.data_mut();
            let (md, vd) = (m.data_mut(), v.data_mut());
            for i in 0..pd.len() {
                let gi = g.data()[i];
                md[i] = b1 * md[i] + (1.0 - b1) * gi;
                vd[i] = b2 * vd[i] + (1.0 - b2) * gi * gi;
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                pd[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = Array2::filled(2, 2, 0.3);
        let mut state = AdamState::new(0.001, [(2, 2)]);
        state.step(&mut [&mut p], &[Array2::filled(2, 2, 1.0)]).unwrap();
        let before = p.clone();
        let m_before = state.first_moments()[0].get(0, 0);
        state.step(&mut [&mut p], &[Array2::zeros(2, 2)]).unwrap();
        // Momentum still moves p; with no prior history, zero gradient is exact.
        assert!(state.first_moments()[0].get(0, 0).abs() < m_before.abs());
        let mut fresh = Array2::filled(2, 2, 0.3);
        let mut s2 = AdamState::new(0.001, [(2, 2)]);
        s2.step(&mut [&mut fresh], &[Array2::zeros(2, 2)]).unwrap();
        assert_eq!(fresh, Array2::filled(2, 2, 0.3));
        assert_ne!(before, p);
    }

    #[test]
    fn first_step_unit_gradient() {
        let mut p = Array2::zeros(1, 3);
        let mut state = AdamState::new(0.001, [(1, 3)]);
        state.step(&mut [&mut p], &[Array2::filled(1, 3, 1.0)]).unwrap();
        let expected = -0.001 * (1.0 / (1.0 + 1e-8));
        for &x in p.data() {
            assert!((x - expected).abs() < 1e-15);
        }
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn repeated_identical_steps_have_equal_magnitude() {
        let mut p = Array2::zeros(1, 1);
        let mut state = AdamState::new(0.001, [(1, 1)]);
        let g = [Array2::scalar(0.7)];
        state.step(&mut [&mut p], &g).unwrap();
        let u1 = p.get(0, 0);
        state.step(&mut [&mut p], &g).unwrap();
        let u2 = p.get(0, 0) - u1;
        assert!((u1.abs() - u2.abs()).abs() < 1e-6);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let mut p = Array2::zeros(1, 2);
        let mut state = AdamState::new(0.001, [(1, 2)]);
        assert!(state.step(&mut [&mut p], &[Array2::zeros(2, 1)]).is_err());
    }
}
