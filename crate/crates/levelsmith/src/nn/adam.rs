//! Adam with optional global-norm gradient clipping.

use super::params::ParamVector;
use super::tape::NnError;

#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(param_len: usize, lr: f64, eps: f64) -> Adam {
        Adam {
            m: vec![0.0; param_len],
            v: vec![0.0; param_len],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps,
        }
    }

    /// Clips the gradient's global L2 norm to `max_norm` (when given) before
    /// the moment updates, then applies one bias-corrected Adam step.
    pub fn step(
        &mut self,
        params: &mut ParamVector,
        grads: &mut [f64],
        max_norm: Option<f64>,
    ) -> Result<(), NnError> {
        if grads.len() != params.len() || grads.len() != self.m.len() {
            return Err(NnError::ShapeMismatch {
                op: "adam_step",
                a: vec![grads.len()],
                b: vec![params.len()],
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(NnError::NonFiniteValue { op: "adam_step" });
        }
        if let Some(max_norm) = max_norm {
            let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > max_norm {
                let s = max_norm / norm;
                for g in grads.iter_mut() {
                    *g *= s;
                }
            }
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let data = params.data_mut();
        for i in 0..grads.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            data[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
        if !params.all_finite() {
            return Err(NnError::NonFiniteValue { op: "adam_step" });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(x: f64) -> ParamVector {
        let mut pv = ParamVector::new();
        pv.register("x", &[1], || x);
        pv
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut pv = one_param(3.0);
        let mut adam = Adam::new(1, 0.1, 1e-8);
        adam.step(&mut pv, &mut [0.0], Some(0.5)).unwrap();
        assert_eq!(pv.data(), &[3.0]);
    }

    #[test]
    fn clip_scales_gradient_norm() {
        // Norm 5 clipped to 0.5 scales the gradient by 0.1.
        let mut grads = vec![3.0, 4.0];
        let mut pv = ParamVector::new();
        pv.register("w", &[2], || 0.0);
        let mut adam = Adam::new(2, 0.1, 1e-8);
        adam.step(&mut pv, &mut grads, Some(0.5)).unwrap();
        assert!((grads[0] - 0.3).abs() < 1e-12);
        assert!((grads[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn descends_quadratic() {
        // d(x²)/dx at x=3 is 6; the step must decrease x.
        let mut pv = one_param(3.0);
        let mut adam = Adam::new(1, 0.1, 1e-8);
        adam.step(&mut pv, &mut [6.0], None).unwrap();
        assert!(pv.data()[0] < 3.0);
        assert!((pv.data()[0] - (3.0 - 0.1)).abs() < 1e-6, "first step ≈ lr");
    }

    #[test]
    fn rejects_non_finite() {
        let mut pv = one_param(0.0);
        let mut adam = Adam::new(1, 0.1, 1e-8);
        assert!(matches!(
            adam.step(&mut pv, &mut [f64::NAN], None),
            Err(NnError::NonFiniteValue { .. })
        ));
    }
}
