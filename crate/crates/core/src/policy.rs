//! Deterministic parameterized policies and the projection ball.

use std::sync::Arc;

use crate::env::{box_max_norm, Interval};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{Matrix, Vector};

/// A deterministic policy `π(s; θ)`.
///
/// The Jacobian is returned as a `d×m` matrix whose column `j` is
/// `∂π_j/∂θ`.
pub trait Policy: Send + Sync + std::fmt::Debug {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn param_dim(&self) -> usize;

    fn action_unchecked(&self, theta: &Vector, state: &Vector) -> Vector;
    fn jacobian_unchecked(&self, theta: &Vector, state: &Vector) -> Matrix;

    /// Upper bound on the spectral norm of the Jacobian over `state_box`.
    fn jacobian_bound(&self, state_box: &[Interval]) -> f64;

    fn check(&self, theta: &Vector, state: &Vector) -> Result<()> {
        check_dim("policy parameters", self.param_dim(), theta.len())?;
        check_dim("policy state", self.state_dim(), state.len())
    }

    fn action(&self, theta: &Vector, state: &Vector) -> Result<Vector> {
        self.check(theta, state)?;
        Ok(self.action_unchecked(theta, state))
    }

    fn jacobian(&self, theta: &Vector, state: &Vector) -> Result<Matrix> {
        self.check(theta, state)?;
        Ok(self.jacobian_unchecked(theta, state))
    }
}

pub type SharedPolicy = Arc<dyn Policy>;

/// `π(s) = Θ s` with `Θ` of shape `m×n` and `θ` its row-major vectorization,
/// so `∂π_j/∂θ = e_j ⊗ s`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearPolicy {
    state_dim: usize,
    action_dim: usize,
}

impl LinearPolicy {
    pub fn new(state_dim: usize, action_dim: usize) -> Self {
        LinearPolicy {
            state_dim,
            action_dim,
        }
    }

    /// Gain matrix `Θ` for a parameter vector.
    pub fn gain(&self, theta: &Vector) -> Matrix {
        Matrix::from_row_slice(self.action_dim, self.state_dim, theta.as_slice())
    }
}

impl Policy for LinearPolicy {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn param_dim(&self) -> usize {
        self.state_dim * self.action_dim
    }

    fn action_unchecked(&self, theta: &Vector, state: &Vector) -> Vector {
        self.gain(theta) * state
    }

    fn jacobian_unchecked(&self, _theta: &Vector, state: &Vector) -> Matrix {
        let n = self.state_dim;
        let mut jac = Matrix::zeros(self.param_dim(), self.action_dim);
        for j in 0..self.action_dim {
            for l in 0..n {
                jac[(j * n + l, j)] = state[l];
            }
        }
        jac
    }

    /// `‖I_m ⊗ s‖₂ = ‖s‖`.
    fn jacobian_bound(&self, state_box: &[Interval]) -> f64 {
        box_max_norm(state_box)
    }
}

/// `π(s) = W k(s)` with Gaussian kernels `k_c(s) = exp(-‖s - c‖² / 2ℓ²)`;
/// `W` is `m×K`, `θ` its row-major vectorization.
#[derive(Clone, Debug, PartialEq)]
pub struct RbfPolicy {
    centers: Vec<Vector>,
    length_scale: f64,
    action_dim: usize,
}

impl RbfPolicy {
    pub fn new(centers: Vec<Vector>, length_scale: f64, action_dim: usize) -> Result<Self> {
        let n = centers
            .first()
            .map(|c| c.len())
            .ok_or_else(|| Error::invalid("RBF policy needs at least one center"))?;
        if centers.iter().any(|c| c.len() != n) {
            return Err(Error::invalid("RBF centers must share one dimension"));
        }
        if !(length_scale > 0.0) {
            return Err(Error::invalid("RBF length scale must be positive"));
        }
        Ok(RbfPolicy {
            centers,
            length_scale,
            action_dim,
        })
    }

    /// Centers on a regular grid over the box.
    pub fn grid(state_box: &[Interval], per_dim: usize, length_scale: f64, action_dim: usize) -> Result<Self> {
        RbfPolicy::new(grid_points(state_box, per_dim), length_scale, action_dim)
    }

    pub fn kernels(&self, state: &Vector) -> Vector {
        let denom = 2.0 * self.length_scale * self.length_scale;
        Vector::from_iterator(
            self.centers.len(),
            self.centers
                .iter()
                .map(|c| (-(state - c).norm_squared() / denom).exp()),
        )
    }
}

impl Policy for RbfPolicy {
    fn state_dim(&self) -> usize {
        self.centers[0].len()
    }

    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn param_dim(&self) -> usize {
        self.centers.len() * self.action_dim
    }

    fn action_unchecked(&self, theta: &Vector, state: &Vector) -> Vector {
        let w = Matrix::from_row_slice(self.action_dim, self.centers.len(), theta.as_slice());
        w * self.kernels(state)
    }

    fn jacobian_unchecked(&self, _theta: &Vector, state: &Vector) -> Matrix {
        let k = self.kernels(state);
        let nk = k.len();
        let mut jac = Matrix::zeros(self.param_dim(), self.action_dim);
        for j in 0..self.action_dim {
            for c in 0..nk {
                jac[(j * nk + c, j)] = k[c];
            }
        }
        jac
    }

    /// Kernels lie in (0, 1], so `‖k(s)‖ ≤ √K`.
    fn jacobian_bound(&self, _state_box: &[Interval]) -> f64 {
        (self.centers.len() as f64).sqrt()
    }
}

/// Regular grid with `per_dim` points per axis (the midpoint if `per_dim == 1`).
pub fn grid_points(bounds: &[Interval], per_dim: usize) -> Vec<Vector> {
    let axes: Vec<Vec<f64>> = bounds
        .iter()
        .map(|iv| {
            if per_dim <= 1 {
                vec![0.5 * (iv.lo + iv.hi)]
            } else {
                (0..per_dim)
                    .map(|i| iv.lo + iv.width() * i as f64 / (per_dim - 1) as f64)
                    .collect()
            }
        })
        .collect();
    let mut out = vec![Vec::new()];
    for axis in &axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |x| {
                    let mut p = prefix.clone();
                    p.push(*x);
                    p
                })
            })
            .collect();
    }
    out.into_iter().map(Vector::from_vec).collect()
}

/// Euclidean ball of radius `radius` centred at the origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionBall {
    radius: f64,
}

impl ProjectionBall {
    pub fn new(radius: f64) -> Result<Self> {
        if radius > 0.0 && !radius.is_nan() {
            Ok(ProjectionBall { radius })
        } else {
            Err(Error::invalid(format!("projection radius must be > 0, got {radius}")))
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn project(&self, x: &Vector) -> Vector {
        let mut y = x.clone();
        self.project_in_place(&mut y);
        y
    }

    /// The rescaled vector is nudged inwards until its computed norm is
    /// within the radius, so `‖project(x)‖ ≤ radius` holds in floating point.
    pub fn project_in_place(&self, x: &mut Vector) {
        let norm = x.norm();
        if norm > self.radius {
            *x *= self.radius / norm;
            while x.norm() > self.radius {
                *x *= 1.0 - f64::EPSILON;
            }
        }
    }
}

/// Actor parameters with their Polyak-averaged target.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorState {
    pub theta: Vector,
    pub theta_target: Vector,
}

impl ActorState {
    pub fn new(theta: Vector) -> Self {
        ActorState {
            theta_target: theta.clone(),
            theta,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fd_jacobian(policy: &dyn Policy, theta: &Vector, s: &Vector, h: f64) -> Matrix {
        let mut jac = Matrix::zeros(policy.param_dim(), policy.action_dim());
        for i in 0..theta.len() {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[i] += h;
            tm[i] -= h;
            let d = (policy.action(&tp, s).unwrap() - policy.action(&tm, s).unwrap()) / (2.0 * h);
            for j in 0..policy.action_dim() {
                jac[(i, j)] = d[j];
            }
        }
        jac
    }

    #[test]
    fn linear_policy_examples() {
        let p = LinearPolicy::new(2, 1);
        let theta = Vector::from_vec(vec![0.2, -0.1]);
        let s = Vector::from_vec(vec![1.0, 2.0]);
        assert!(p.action(&theta, &s).unwrap()[0].abs() < 1e-16);
        assert_eq!(p.action(&Vector::zeros(2), &s).unwrap(), Vector::zeros(1));
        let jac = p.jacobian(&theta, &s).unwrap();
        assert_eq!(jac.as_slice(), &[1.0, 2.0]);
        assert_eq!(p.jacobian(&theta, &Vector::zeros(2)).unwrap(), Matrix::zeros(2, 1));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let p = LinearPolicy::new(2, 1);
        let err = p.action(&Vector::zeros(3), &Vector::zeros(2)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
        let err = p.action(&Vector::zeros(2), &Vector::zeros(1)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn rbf_policy_at_single_center_returns_weight() {
        let c = Vector::from_vec(vec![0.3, -0.2]);
        let p = RbfPolicy::new(vec![c.clone()], 0.5, 2).unwrap();
        let theta = Vector::from_vec(vec![1.5, -0.7]);
        let a = p.action(&theta, &c).unwrap();
        assert_eq!(a, theta);
    }

    #[test]
    fn jacobians_match_central_differences() {
        let lin = LinearPolicy::new(3, 2);
        let rbf = RbfPolicy::grid(&[Interval::symmetric(1.0); 2], 3, 0.6, 2).unwrap();
        let mut rng = crate::rng::stream(5, 0);
        use rand::Rng as _;
        for policy in [&lin as &dyn Policy, &rbf] {
            for _ in 0..20 {
                let theta = Vector::from_fn(policy.param_dim(), |_, _| rng.random_range(-1.0..1.0));
                let s = Vector::from_fn(policy.state_dim(), |_, _| rng.random_range(-1.0..1.0));
                let fd = fd_jacobian(policy, &theta, &s, 1e-5);
                let an = policy.jacobian(&theta, &s).unwrap();
                assert!((fd - an).amax() < 1e-6);
            }
        }
    }

    #[test]
    fn jacobian_bound_holds_on_box() {
        let bx = [Interval::symmetric(1.5), Interval::new(-0.5, 2.0)];
        let lin = LinearPolicy::new(2, 2);
        let rbf = RbfPolicy::grid(&bx, 4, 0.7, 2).unwrap();
        let mut rng = crate::rng::stream(6, 0);
        use rand::Rng as _;
        for policy in [&lin as &dyn Policy, &rbf] {
            let bound = policy.jacobian_bound(&bx);
            let theta = Vector::zeros(policy.param_dim());
            for _ in 0..2000 {
                let s = Vector::from_iterator(2, bx.iter().map(|iv| rng.random_range(iv.lo..=iv.hi)));
                let jac = policy.jacobian(&theta, &s).unwrap();
                let spec_norm = jac.singular_values().max();
                assert!(spec_norm <= bound + 1e-12);
            }
        }
    }

    #[test]
    fn projection_examples() {
        let ball = ProjectionBall::new(1.0).unwrap();
        let inside = Vector::from_vec(vec![0.3, 0.4]);
        assert_eq!(ball.project(&inside), inside);
        let p = ball.project(&Vector::from_vec(vec![3.0, 4.0]));
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        assert!(ProjectionBall::new(0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn projection_is_idempotent(xs in proptest::collection::vec(-50.0f64..50.0, 1..6), r in 0.1f64..10.0) {
            let ball = ProjectionBall::new(r).unwrap();
            let x = Vector::from_vec(xs);
            let p = ball.project(&x);
            prop_assert!(p.norm() <= r);
            prop_assert_eq!(ball.project(&p), p);
        }

        #[test]
        fn projection_is_non_expansive(
            pair in (1usize..6).prop_flat_map(|n| (
                proptest::collection::vec(-20.0f64..20.0, n),
                proptest::collection::vec(-20.0f64..20.0, n),
            )),
            r in 0.1f64..10.0,
        ) {
            let ball = ProjectionBall::new(r).unwrap();
            let x = Vector::from_vec(pair.0);
            let y = Vector::from_vec(pair.1);
            let lhs = (ball.project(&x) - ball.project(&y)).norm();
            prop_assert!(lhs <= (x - y).norm() + 1e-12);
        }
    }
}
