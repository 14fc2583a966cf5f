//! Bias-corrected Adam, applied as descent.

use crate::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

#[derive(Clone, Debug, Default)]
pub struct Adam {
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update `x ← x - lr·m̂/(√v̂ + ε)` for every parameter.
    ///
    /// Panics if the parameter and gradient lists disagree in length or shape.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient count");
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Tensor::zeros(g.rows(), g.cols())).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let (c1, c2) = (1.0 - BETA1.powi(t), 1.0 - BETA2.powi(t));
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            assert_eq!(p.shape(), g.shape(), "parameter/gradient shape");
            let pd = p.data_mut();
            for (i, &gi) in g.data().iter().enumerate() {
                let mi = &mut m.data_mut()[i];
                *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
                let vi = &mut v.data_mut()[i];
                *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
                let m_hat = m.data()[i] / c1;
                let v_hat = v.data()[i] / c2;
                pd[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_lr_times_normalized_gradient() {
        let mut x = Tensor::from_rows(&[[1.0, 2.0, 3.0]]);
        let g = Tensor::from_rows(&[[0.5, -2.0, 0.0]]);
        let mut adam = Adam::new();
        adam.step(&mut [&mut x], std::slice::from_ref(&g), 0.1);
        for (i, (&xi, &x0)) in x.data().iter().zip(&[1.0, 2.0, 3.0]).enumerate() {
            let gi = g.data()[i];
            let expected = -0.1 * gi / (gi.abs() + EPS);
            assert!(((xi - x0) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_gradient_is_no_update() {
        let mut x = Tensor::from_rows(&[[4.0, -1.0]]);
        let mut adam = Adam::new();
        for _ in 0..3 {
            adam.step(&mut [&mut x], &[Tensor::zeros(1, 2)], 0.5);
        }
        assert_eq!(x.data(), &[4.0, -1.0]);
    }

    #[test]
    fn descends_a_parabola() {
        let mut x = Tensor::scalar(1.0);
        let mut adam = Adam::new();
        let mut prev = 1.0f64;
        for _ in 0..10 {
            let g = Tensor::scalar(2.0 * x.data()[0]);
            adam.step(&mut [&mut x], &[g], 0.1);
            let now = x.data()[0].abs();
            assert!(now < prev);
            prev = now;
        }
    }
}
