use crate::error::{check_len, NnError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(num_params: usize, lr: f64) -> Adam {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; num_params], v: vec![0.0; num_params], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// One bias-corrected update of `params` against `grads`. Non-finite
    /// gradients leave everything untouched and return an error.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check_len("parameters", self.m.len(), params.len())?;
        check_len("gradients", self.m.len(), grads.len())?;
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(NnError::NonFinite(format!("gradient {i} = {} at Adam step {}", grads[i], self.t + 1)));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_sign_like() {
        let mut opt = Adam::new(3, 0.01);
        let mut p = vec![1.0, 1.0, 1.0];
        let g = [2.0, -0.5, 0.0];
        opt.step(&mut p, &g).unwrap();
        for i in 0..3 {
            let want = 1.0 - 0.01 * g[i] / (g[i].abs() + 1e-8);
            assert!((p[i] - want).abs() < 1e-15);
        }
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn zero_gradients_leave_params_and_decay_moments() {
        let mut opt = Adam::new(2, 0.1);
        let mut p = vec![0.5, -0.5];
        opt.step(&mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![0.5, -0.5]);
        opt.step(&mut p, &[1.0, -1.0]).unwrap();
        let (m, v) = (opt.first_moment().to_vec(), opt.second_moment().to_vec());
        opt.step(&mut p, &[0.0, 0.0]).unwrap();
        for i in 0..2 {
            assert!((opt.first_moment()[i] - 0.9 * m[i]).abs() < 1e-15);
            assert!((opt.second_moment()[i] - 0.999 * v[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_gradient_step_approaches_lr() {
        // With a constant gradient both bias-corrected moments equal the
        // gradient exactly, so every step is lr·g/(|g|+eps).
        let mut opt = Adam::new(1, 1e-3);
        let mut p = vec![0.0];
        let mut last = 0.0;
        for _ in 0..500 {
            let before = p[0];
            opt.step(&mut p, &[0.3]).unwrap();
            last = before - p[0];
        }
        assert!((last - 1e-3 * 0.3 / (0.3 + 1e-8)).abs() < 1e-12);
    }

    #[test]
    fn nan_gradient_is_rejected() {
        let mut opt = Adam::new(2, 0.1);
        let mut p = vec![0.0, 0.0];
        assert!(matches!(opt.step(&mut p, &[0.0, f64::NAN]), Err(NnError::NonFinite(_))));
        assert_eq!(p, vec![0.0, 0.0]);
        assert_eq!(opt.steps(), 0);
    }
}
