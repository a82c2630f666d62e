//! Adam with bias correction, operating on flat parameter slices.

use crate::error::{Error, Result};
use crate::nn::tape::Gradients;

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, param_shapes: &[usize]) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: param_shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: param_shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update applied in place.
    pub fn apply(&mut self, params: &mut [&mut [f64]], grads: &Gradients) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::DimMismatch {
                context: "adam parameter sets",
                expected: self.m.len(),
                actual: params.len().min(grads.len()),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (pid, p) in params.iter_mut().enumerate() {
            let g = grads.get(pid);
            if g.len() != p.len() {
                // an all-zero placeholder for an unbound parameter is fine
                if g.iter().all(|&x| x == 0.0) {
                    continue;
                }
                return Err(Error::DimMismatch {
                    context: "adam gradient shape",
                    expected: p.len(),
                    actual: g.len(),
                });
            }
            let m = &mut self.m[pid];
            let v = &mut self.v[pid];
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tape::Tape;

    fn grads_for(value: f64) -> Gradients {
        // build a one-parameter tape whose gradient is exactly `value`
        let mut tape = Tape::new();
        let w = tape.param(0, &[1.0]);
        let x = tape.constant(vec![value]);
        let y = tape.hadamard(w, x);
        tape.backward(y, 1.0, 1).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut adam = Adam::new(0.1, &[1]);
        let mut p = vec![0.42];
        let zero = grads_for(0.0);
        adam.apply(&mut [&mut p], &zero).unwrap();
        assert_eq!(p, vec![0.42]);
    }

    #[test]
    fn first_step_with_unit_gradient_moves_by_about_lr() {
        // bias correction makes m_hat = g, v_hat = g^2, so the step is
        // lr * g / (|g| + eps) ~= lr for g = 1
        let mut adam = Adam::new(0.1, &[1]);
        let mut p = vec![1.0];
        let g = grads_for(1.0);
        adam.apply(&mut [&mut p], &g).unwrap();
        let moved = 1.0 - p[0];
        assert!((moved - 0.1).abs() < 1e-8, "moved {moved}");
    }

    #[test]
    fn identical_runs_are_bitwise_identical() {
        let run = || {
            let mut adam = Adam::new(0.05, &[1]);
            let mut p = vec![0.3];
            for k in 0..100 {
                let g = grads_for(((k % 7) as f64 - 3.0) * 0.25);
                adam.apply(&mut [&mut p], &g).unwrap();
            }
            p[0]
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }
}
