use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::tensor::RealTensor;

/// Update rule and its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd { lr: f32, momentum: f32 },
    Adam { lr: f32, beta1: f32, beta2: f32, eps: f32 },
}

impl OptimizerKind {
    pub fn adam(lr: f32) -> Self {
        OptimizerKind::Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn sgd(lr: f32, momentum: f32) -> Self {
        OptimizerKind::Sgd { lr, momentum }
    }

    pub fn lr(&self) -> f32 {
        match *self {
            OptimizerKind::Sgd { lr, .. } | OptimizerKind::Adam { lr, .. } => lr,
        }
    }
}

/// Per-parameter optimizer state. Parameters are matched by position, so the
/// same ordering must be passed on every step.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    first: Vec<Vec<f32>>,
    second: Vec<Vec<f32>>,
    beta1_t: f32,
    beta2_t: f32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Optimizer { kind, first: Vec::new(), second: Vec::new(), beta1_t: 1.0, beta2_t: 1.0 }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    /// Applies one update using the gradients stored on each tensor.
    pub fn step(&mut self, params: Vec<&mut RealTensor>) {
        if self.first.len() != params.len() {
            self.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        match self.kind {
            OptimizerKind::Sgd { lr, momentum } => {
                for (p, vel) in params.into_iter().zip(&mut self.first) {
                    let (w, g) = p.values_and_grad_mut();
                    for ((w, &g), v) in w.iter_mut().zip(g.iter()).zip(vel.iter_mut()) {
                        *v = momentum * *v + g;
                        *w -= lr * *v;
                    }
                }
            }
            OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                self.beta1_t *= beta1;
                self.beta2_t *= beta2;
                let c1 = 1.0 - self.beta1_t;
                let c2 = 1.0 - self.beta2_t;
                for ((p, m), v) in params.into_iter().zip(&mut self.first).zip(&mut self.second) {
                    let (w, g) = p.values_and_grad_mut();
                    for i in 0..w.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        w[i] -= lr * (m[i] / c1) / (math::sqrtf(v[i] / c2) + eps);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = RealTensor::vector(&[1.0, -1.0]);
        p.grad_mut().copy_from_slice(&[0.5, -3.0]);
        let mut opt = Optimizer::new(OptimizerKind::adam(0.1));
        opt.step(vec![&mut p]);
        assert!((p.values()[0] - 0.9).abs() < 1e-5);
        assert!((p.values()[1] + 0.9).abs() < 1e-5);
    }

    #[test]
    fn sgd_plain_step() {
        let mut p = RealTensor::vector(&[1.0]);
        p.grad_mut()[0] = 2.0;
        let mut opt = Optimizer::new(OptimizerKind::sgd(0.25, 0.0));
        opt.step(vec![&mut p]);
        assert_eq!(p.values()[0], 0.5);
    }
}
