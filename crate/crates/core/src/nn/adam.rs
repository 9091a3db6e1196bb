use serde::{Deserialize, Serialize};

use super::NnError;

/// Bias-corrected Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. Moment buffers are allocated on the first call
    /// and must keep matching the parameter shapes afterwards.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[Vec<f64>]) -> Result<(), NnError> {
        if params.len() != grads.len() {
            return Err(NnError::ShapeMismatch(format!(
                "adam: {} parameter tensors, {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.len() != g.len() {
                return Err(NnError::ShapeMismatch(format!(
                    "adam: parameter of {} values, gradient of {}",
                    p.len(),
                    g.len()
                )));
            }
        }
        if self.first_moment.is_empty() {
            self.first_moment = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.second_moment = self.first_moment.clone();
        } else if self.first_moment.len() != grads.len()
            || self.first_moment.iter().zip(grads).any(|(m, g)| m.len() != g.len())
        {
            return Err(NnError::ShapeMismatch("adam: parameter shapes changed".into()));
        }
        if grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(NnError::NonFinite("adam_step"));
        }

        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_closed_form() {
        let mut adam = Adam::new(0.1);
        let mut p = [1.0, -2.0, 0.5];
        let g = vec![0.3, -4.0, 1e-3];
        adam.step(&mut [&mut p[..]], std::slice::from_ref(&g)).unwrap();
        let start = [1.0, -2.0, 0.5];
        for i in 0..3 {
            let expected = start[i] - 0.1 * g[i] / (g[i].abs() + 1e-8);
            assert!((p[i] - expected).abs() < 1e-15, "{} vs {expected}", p[i]);
            assert!(((p[i] - start[i]) + 0.1 * g[i].signum()).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut adam = Adam::new(0.5);
        let mut p = vec![3.0, 4.0];
        for _ in 0..100 {
            adam.step(&mut [&mut p[..]], &[vec![0.0, 0.0]]).unwrap();
        }
        assert_eq!(p, vec![3.0, 4.0]);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut adam = Adam::new(0.01);
            let mut p = vec![1.0, 2.0, 3.0];
            for k in 0..50 {
                let g: Vec<f64> = p.iter().map(|x| 2.0 * x + k as f64 * 0.01).collect();
                adam.step(&mut [&mut p[..]], &[g]).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch() {
        let mut adam = Adam::new(0.1);
        let mut p = [1.0];
        assert!(adam.step(&mut [&mut p[..]], &[vec![1.0, 2.0]]).is_err());
        assert!(adam.step(&mut [&mut p[..]], &[]).is_err());
    }
}
