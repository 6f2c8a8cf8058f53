//! First-order optimizers over flat parameter slices.

use crate::error::{check_dim, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err(Error::invalid(format!("unknown optimizer {s:?}"))),
        }
    }
}

/// Minimizes: `step` moves parameters against `grad`.
#[derive(Clone, Debug)]
pub enum Optimizer {
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
        m: Vec<f64>,
        v: Vec<f64>,
        t: u64,
    },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, n_params: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => Optimizer::Adam {
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                m: vec![0.0; n_params],
                v: vec![0.0; n_params],
                t: 0,
            },
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        check_dim("gradient", params.len(), grad.len())?;
        match self {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            Optimizer::Adam { beta1, beta2, eps, m, v, t } => {
                check_dim("optimizer state", m.len(), params.len())?;
                *t += 1;
                let c1 = 1.0 - beta1.powi(*t as i32);
                let c2 = 1.0 - beta2.powi(*t as i32);
                for i in 0..params.len() {
                    m[i] = *beta1 * m[i] + (1.0 - *beta1) * grad[i];
                    v[i] = *beta2 * v[i] + (1.0 - *beta2) * grad[i] * grad[i];
                    params[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + *eps);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_is_plain_descent() {
        let mut p = vec![1.0, -2.0];
        Optimizer::new(OptimizerKind::Sgd, 2).step(&mut p, &[0.5, -1.0], 0.1).unwrap();
        assert_eq!(p, vec![0.95, -1.9]);
    }

    #[test]
    fn adam_first_step_has_size_lr() {
        let mut p = vec![0.0, 0.0];
        Optimizer::new(OptimizerKind::Adam, 2).step(&mut p, &[3.0, -0.01], 0.1).unwrap();
        assert!((p[0] + 0.1).abs() < 1e-6);
        assert!((p[1] - 0.1).abs() < 1e-4);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut p = vec![0.3, 0.7];
            Optimizer::new(kind, 2).step(&mut p, &[1.0, 2.0], 0.0).unwrap();
            assert_eq!(p, vec![0.3, 0.7]);
        }
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut p = vec![2.0, -3.0];
        let mut opt = Optimizer::new(OptimizerKind::Adam, 2);
        for _ in 0..3000 {
            let g = vec![2.0 * p[0], 8.0 * p[1]];
            opt.step(&mut p, &g, 0.01).unwrap();
        }
        assert!(p[0].abs() < 1e-2 && p[1].abs() < 1e-2);
    }
}
