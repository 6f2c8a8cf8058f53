//! Tabular stand-ins for smooth continuous environments (state dim ≤ 2).
//!
//! States live on a uniform grid of cell centres over the state box. From
//! a cell centre `s` under action `a = clip(π(s))` the next state is
//! `clamp(mean_next(s, a) + σ ⊙ z)`; the Gaussian `z` is integrated with a
//! tensor Gauss–Hermite rule and each node is assigned to its nearest cell.

use crate::env::{Interval, SmoothDynamics};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::policy::Policy;

use super::tabular::TabularMdp;

/// Nodes and weights for `E[f(Z)]`, `Z ~ N(0, 1)`, via Golub–Welsch.
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    // Jacobi matrix of the probabilists' Hermite polynomials
    let jac = Matrix::from_fn(order, order, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = jac.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    (pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1 / total).collect())
}

/// Uniform grid of cell centres over a box.
#[derive(Clone, Debug)]
pub struct Grid {
    bounds: Vec<Interval>,
    per_dim: usize,
}

impl Grid {
    pub fn new(bounds: Vec<Interval>, per_dim: usize) -> Result<Self> {
        if bounds.is_empty() || bounds.len() > 2 {
            return Err(Error::invalid("grid tabularization supports state dim 1 or 2"));
        }
        if per_dim < 2 {
            return Err(Error::invalid("grid needs at least 2 cells per dimension"));
        }
        Ok(Grid { bounds, per_dim })
    }

    pub fn n_cells(&self) -> usize {
        self.per_dim.pow(self.bounds.len() as u32)
    }

    fn coord(&self, dim: usize, k: usize) -> f64 {
        let b = self.bounds[dim];
        b.lo + (k as f64 + 0.5) * b.width() / self.per_dim as f64
    }

    fn cell_along(&self, dim: usize, x: f64) -> usize {
        let b = self.bounds[dim];
        let t = ((x - b.lo) / b.width() * self.per_dim as f64).floor();
        t.clamp(0.0, (self.per_dim - 1) as f64) as usize
    }

    pub fn center(&self, index: usize) -> Vector {
        let mut rest = index;
        Vector::from_fn(self.bounds.len(), |dim, _| {
            let k = rest % self.per_dim;
            rest /= self.per_dim;
            self.coord(dim, k)
        })
    }

    /// Nearest cell; points outside the box map to the boundary cells.
    pub fn index(&self, state: &Vector) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for dim in 0..self.bounds.len() {
            idx += self.cell_along(dim, state[dim]) * stride;
            stride *= self.per_dim;
        }
        idx
    }
}

/// Quadrature order used per noise dimension.
pub const QUADRATURE_ORDER: usize = 33;

pub fn tabularize(env: &dyn SmoothDynamics, policy: &dyn Policy, theta: &Vector, grid: &Grid) -> Result<TabularMdp> {
    let spec = env.spec_ref();
    if spec.state_dim != grid.bounds.len() {
        return Err(Error::invalid("grid dimension does not match the environment"));
    }
    let n = grid.n_cells();
    let (nodes, weights) = gauss_hermite(QUADRATURE_ORDER);
    let std = env.noise_std();
    let mut p = Matrix::zeros(n, n);
    let mut r = Vector::zeros(n);
    for i in 0..n {
        let s = grid.center(i);
        let a = spec.clip_action(&policy.action_unchecked(theta, &s));
        r[i] = env.reward_at(&s, &a);
        let mean = env.mean_next(&s, &a);
        let noisy: Vec<bool> = std.iter().map(|x| *x > 0.0).collect();
        // tensor product over the noisy dimensions only
        let dims: Vec<usize> = (0..spec.state_dim).filter(|&d| noisy[d]).collect();
        let count = nodes.len().pow(dims.len() as u32);
        for c in 0..count {
            let mut rest = c;
            let mut next = mean.clone();
            let mut weight = 1.0;
            for &d in &dims {
                let k = rest % nodes.len();
                rest /= nodes.len();
                next[d] += std[d] * nodes[k];
                weight *= weights[k];
            }
            let next = env.clamp_state(next);
            p[(i, grid.index(&next))] += weight;
        }
    }
    for i in 0..n {
        let s: f64 = p.row(i).sum();
        p.row_mut(i).scale_mut(1.0 / s);
        let s: f64 = p.row(i).sum();
        p[(i, i)] += 1.0 - s;
    }
    TabularMdp::new(p, r)
}
