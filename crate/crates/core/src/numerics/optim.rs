//! Parameter initialization and optimizers.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::matrix::Matrix;
use super::NumericsError;

/// Glorot-uniform samples in +-sqrt(6 / (fan_in + fan_out)).
pub fn glorot_uniform(
    rows: usize,
    cols: usize,
    fan_in: usize,
    fan_out: usize,
    rng: &mut ChaCha8Rng,
) -> Matrix {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

/// Seeded convenience wrapper used by tests and the spec-level init contract.
pub fn glorot_uniform_seeded(
    rows: usize,
    cols: usize,
    fan_in: usize,
    fan_out: usize,
    seed: u64,
) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    glorot_uniform(rows, cols, fan_in, fan_out, &mut rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Adam with bias correction. Moment buffers are allocated lazily on the
/// first step and must keep matching the parameter shapes afterwards.
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: Vec<(Matrix, Matrix)>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(
        &mut self,
        params: &mut [&mut Matrix],
        grads: &[Matrix],
    ) -> Result<(), NumericsError> {
        if params.len() != grads.len() {
            return Err(NumericsError::OptimizerState(format!(
                "{} parameters but {} gradient buffers",
                params.len(),
                grads.len()
            )));
        }
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| (Matrix::zeros(p.rows(), p.cols()), Matrix::zeros(p.rows(), p.cols())))
                .collect();
        }
        if self.moments.len() != params.len() {
            return Err(NumericsError::OptimizerState(
                "parameter count changed between steps".into(),
            ));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((param, grad), (m, v)) in params.iter_mut().zip(grads).zip(&mut self.moments) {
            if param.shape() != grad.shape() {
                return Err(NumericsError::ShapeMismatch {
                    op: "adam_step",
                    lhs: param.shape(),
                    rhs: grad.shape(),
                });
            }
            for i in 0..param.data().len() {
                let g = grad.data()[i];
                let mi = self.beta1 * m.data()[i] + (1.0 - self.beta1) * g;
                let vi = self.beta2 * v.data()[i] + (1.0 - self.beta2) * g * g;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let update = self.lr * (mi / bc1) / ((vi / bc2).sqrt() + self.eps);
                param.data_mut()[i] -= update;
            }
        }
        Ok(())
    }
}

/// Plain gradient descent, selectable through config.
pub struct Sgd {
    pub lr: f64,
}

impl Sgd {
    pub fn new(lr: f64) -> Self {
        Self { lr }
    }

    pub fn step(
        &mut self,
        params: &mut [&mut Matrix],
        grads: &[Matrix],
    ) -> Result<(), NumericsError> {
        if params.len() != grads.len() {
            return Err(NumericsError::OptimizerState(format!(
                "{} parameters but {} gradient buffers",
                params.len(),
                grads.len()
            )));
        }
        for (param, grad) in params.iter_mut().zip(grads) {
            if param.shape() != grad.shape() {
                return Err(NumericsError::ShapeMismatch {
                    op: "sgd_step",
                    lhs: param.shape(),
                    rhs: grad.shape(),
                });
            }
            param.add_scaled(grad, -self.lr);
        }
        Ok(())
    }
}

pub enum Optimizer {
    Adam(Adam),
    Sgd(Sgd),
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        match kind {
            OptimizerKind::Adam => Self::Adam(Adam::new(lr)),
            OptimizerKind::Sgd => Self::Sgd(Sgd::new(lr)),
        }
    }

    pub fn step(
        &mut self,
        params: &mut [&mut Matrix],
        grads: &[Matrix],
    ) -> Result<(), NumericsError> {
        match self {
            Self::Adam(a) => a.step(params, grads),
            Self::Sgd(s) => s.step(params, grads),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glorot_respects_bound_and_seed() {
        let m = glorot_uniform_seeded(8, 4, 8, 4, 7);
        let bound = (6.0 / 12.0_f64).sqrt();
        assert!(m.data().iter().all(|&x| x.abs() < bound));
        assert_eq!(m, glorot_uniform_seeded(8, 4, 8, 4, 7));
        assert_ne!(m, glorot_uniform_seeded(8, 4, 8, 4, 8));
    }

    #[test]
    fn glorot_sample_mean_near_zero() {
        // 10^4 draws: |mean| should sit within 3 standard errors of 0.
        let n = 10_000;
        let m = glorot_uniform_seeded(n, 1, 50, 50, 123);
        let bound = (6.0 / 100.0_f64).sqrt();
        let se = bound / (3.0_f64.sqrt() * (n as f64).sqrt());
        let mean = m.data().iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 * se, "mean {mean} vs 3se {}", 3.0 * se);
    }

    #[test]
    fn adam_first_step_magnitude_is_lr() {
        // With bias correction the first update is lr * g / (|g| + eps').
        let mut p = Matrix::from_vec(1, 3, vec![1.0, 2.0, -3.0]);
        let g = Matrix::from_vec(1, 3, vec![0.5, -0.01, 4.0]);
        let mut adam = Adam::new(0.01);
        adam.step(&mut [&mut p], &[g.clone()]).unwrap();
        let expect = [1.0 - 0.01, 2.0 + 0.01, -3.0 - 0.01];
        for (got, want) in p.data().iter().zip(expect) {
            assert!((got - want).abs() < 1e-5, "{got} vs {want}");
        }
    }

    #[test]
    fn zero_grad_leaves_parameter_unchanged() {
        let mut p = Matrix::from_vec(1, 2, vec![0.25, -0.75]);
        let before = p.clone();
        let mut adam = Adam::new(0.01);
        adam.step(&mut [&mut p], &[Matrix::zeros(1, 2)]).unwrap();
        assert_eq!(p, before);
        let mut sgd = Sgd::new(0.5);
        sgd.step(&mut [&mut p], &[Matrix::zeros(1, 2)]).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn missing_grad_buffer_is_an_error() {
        let mut p = Matrix::zeros(2, 2);
        let mut adam = Adam::new(0.01);
        assert!(adam.step(&mut [&mut p], &[]).is_err());
    }
}
