//! State features `ψ(s)` and critic features `φ(s, a)`.
//!
//! Two critic feature maps are provided:
//!
//! * [`CompatibleFeatures`]: `φ(s, a) = [c ∇_θπ(s)(a − π(s)) ; ψ(s)]`. The
//!   first block is affine in the action with `∂/∂a = c ∇_θπ(s)`, so the
//!   critic's action gradient at `a = π(s)` is `c ∇_θπ(s)ᵀ w_adv` where
//!   `w_adv` is the first `d = dim θ` coordinates of `w`. The state block
//!   carries the differential value.
//! * [`GenericRbfFeatures`]: Gaussian kernels on the joint `(s, a)` space.
//!   Not compatible, so the induced gradient carries an approximation error.
//!
//! Both are normalized so that `‖φ‖ ≤ 1` on the declared boxes.

use std::sync::Arc;

use crate::env::{box_max_norm, Interval};
use crate::linalg::{Matrix, Vector};
use crate::policy::{grid_points, Policy, SharedPolicy};

pub trait StateFeatures: Send + Sync + std::fmt::Debug {
    fn dim(&self) -> usize;
    fn eval(&self, state: &Vector) -> Vector;
}

pub type SharedStateFeatures = Arc<dyn StateFeatures>;

/// No state block.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoStateFeatures;

impl StateFeatures for NoStateFeatures {
    fn dim(&self) -> usize {
        0
    }

    fn eval(&self, _state: &Vector) -> Vector {
        Vector::zeros(0)
    }
}

/// Constant feature plus Gaussian bumps on a grid, rescaled to norm exactly 1/2.
#[derive(Clone, Debug)]
pub struct RbfStateFeatures {
    centers: Vec<Vector>,
    length_scale: f64,
}

impl RbfStateFeatures {
    pub fn grid(state_box: &[Interval], per_dim: usize, length_scale: f64) -> Self {
        RbfStateFeatures {
            centers: grid_points(state_box, per_dim),
            length_scale,
        }
    }
}

impl StateFeatures for RbfStateFeatures {
    fn dim(&self) -> usize {
        self.centers.len() + 1
    }

    fn eval(&self, state: &Vector) -> Vector {
        let denom = 2.0 * self.length_scale * self.length_scale;
        let mut v = Vector::zeros(self.dim());
        v[0] = 1.0;
        for (i, c) in self.centers.iter().enumerate() {
            v[i + 1] = (-(state - c).norm_squared() / denom).exp();
        }
        let norm = v.norm();
        v * (0.5 / norm)
    }
}

/// `scale · s` for one-hot encoded finite states.
#[derive(Clone, Debug)]
pub struct OneHotFeatures {
    n: usize,
    scale: f64,
}

impl OneHotFeatures {
    pub fn new(n: usize, scale: f64) -> Self {
        OneHotFeatures { n, scale }
    }
}

impl StateFeatures for OneHotFeatures {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, state: &Vector) -> Vector {
        state * self.scale
    }
}

/// Constant and all degree-2 monomials `s_i s_j (i ≤ j)`, each divided by
/// its maximum over the box and the whole vector scaled so the norm is at
/// most 1/2 on the box. Exactly represents quadratic value functions.
#[derive(Clone, Debug)]
pub struct QuadraticFeatures {
    pairs: Vec<(usize, usize)>,
    norms: Vec<f64>,
    overall: f64,
}

impl QuadraticFeatures {
    pub fn new(state_box: &[Interval]) -> Self {
        let n = state_box.len();
        let mut pairs = Vec::new();
        let mut norms = Vec::new();
        for i in 0..n {
            for j in i..n {
                pairs.push((i, j));
                norms.push((state_box[i].max_abs() * state_box[j].max_abs()).max(1e-12));
            }
        }
        let overall = 0.5 / ((pairs.len() + 1) as f64).sqrt();
        QuadraticFeatures {
            pairs,
            norms,
            overall,
        }
    }
}

impl StateFeatures for QuadraticFeatures {
    fn dim(&self) -> usize {
        self.pairs.len() + 1
    }

    fn eval(&self, state: &Vector) -> Vector {
        let mut v = Vector::zeros(self.dim());
        v[0] = self.overall;
        for (k, ((i, j), norm)) in self.pairs.iter().zip(&self.norms).enumerate() {
            v[k + 1] = self.overall * state[*i] * state[*j] / norm;
        }
        v
    }
}

/// Linear critic features `φ(s, a)` tied to a policy.
pub trait CriticFeatures: Send + Sync + std::fmt::Debug {
    fn dim(&self) -> usize;
    fn policy(&self) -> &dyn Policy;

    fn phi(&self, theta: &Vector, state: &Vector, action: &Vector) -> Vector;

    /// `∂φ/∂a` as a `k×m` matrix.
    fn action_jacobian(&self, theta: &Vector, state: &Vector, action: &Vector) -> Matrix;

    /// `φ^π(s) = φ(s, π(s))`.
    fn state_phi(&self, theta: &Vector, state: &Vector) -> Vector {
        let a = self.policy().action_unchecked(theta, state);
        self.phi(theta, state, &a)
    }

    /// `∇_a (φ(s, a)ᵀ w)` at `a = π(s)`.
    fn action_gradient(&self, theta: &Vector, state: &Vector, w: &Vector) -> Vector {
        let a = self.policy().action_unchecked(theta, state);
        self.action_jacobian(theta, state, &a).transpose() * w
    }
}

pub type SharedCriticFeatures = Arc<dyn CriticFeatures>;

#[derive(Clone, Debug)]
pub struct CompatibleFeatures {
    policy: SharedPolicy,
    state_features: SharedStateFeatures,
    scale: f64,
}

impl CompatibleFeatures {
    pub fn new(policy: SharedPolicy, state_features: SharedStateFeatures, scale: f64) -> Self {
        assert!(scale > 0.0, "compatible feature scale must be positive");
        CompatibleFeatures {
            policy,
            state_features,
            scale,
        }
    }

    /// Picks the scale so the action block has norm ≤ 1/2 for states in
    /// `state_box`, clipped actions in `action_box` and `‖θ‖ ≤ theta_radius`.
    /// Both shipped policies are linear in `θ`, so `‖π(s)‖ ≤ L_π ‖θ‖`.
    pub fn normalized(
        policy: SharedPolicy,
        state_features: SharedStateFeatures,
        state_box: &[Interval],
        action_box: &[Interval],
        theta_radius: f64,
    ) -> Self {
        let l_pi = policy.jacobian_bound(state_box).max(1e-12);
        let deviation = box_max_norm(action_box) + l_pi * theta_radius;
        let scale = 0.5 / (l_pi * deviation.max(1e-12));
        CompatibleFeatures::new(policy, state_features, scale)
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Number of leading coordinates that form the advantage block (`dim θ`).
    pub fn advantage_dim(&self) -> usize {
        self.policy.param_dim()
    }

    pub fn state_features(&self) -> &dyn StateFeatures {
        self.state_features.as_ref()
    }
}

impl CriticFeatures for CompatibleFeatures {
    fn dim(&self) -> usize {
        self.policy.param_dim() + self.state_features.dim()
    }

    fn policy(&self) -> &dyn Policy {
        self.policy.as_ref()
    }

    fn phi(&self, theta: &Vector, state: &Vector, action: &Vector) -> Vector {
        let d = self.policy.param_dim();
        let jac = self.policy.jacobian_unchecked(theta, state);
        let dev = action - self.policy.action_unchecked(theta, state);
        let adv = jac * dev * self.scale;
        let psi = self.state_features.eval(state);
        let mut out = Vector::zeros(self.dim());
        out.rows_mut(0, d).copy_from(&adv);
        out.rows_mut(d, psi.len()).copy_from(&psi);
        out
    }

    fn action_jacobian(&self, theta: &Vector, state: &Vector, _action: &Vector) -> Matrix {
        let d = self.policy.param_dim();
        let m = self.policy.action_dim();
        let mut out = Matrix::zeros(self.dim(), m);
        out.view_mut((0, 0), (d, m))
            .copy_from(&(self.policy.jacobian_unchecked(theta, state) * self.scale));
        out
    }

    fn action_gradient(&self, theta: &Vector, state: &Vector, w: &Vector) -> Vector {
        let d = self.policy.param_dim();
        self.policy.jacobian_unchecked(theta, state).transpose() * w.rows(0, d) * self.scale
    }
}

/// Gaussian kernels on the joint `(s, a)` space, divided by `√K`.
#[derive(Clone, Debug)]
pub struct GenericRbfFeatures {
    policy: SharedPolicy,
    state_centers: Vec<Vector>,
    action_centers: Vec<Vector>,
    length_scale: f64,
}

impl GenericRbfFeatures {
    /// Full product of a state grid and an action grid.
    pub fn grid(
        policy: SharedPolicy,
        state_box: &[Interval],
        action_box: &[Interval],
        per_dim: usize,
        length_scale: f64,
    ) -> Self {
        let sc = grid_points(state_box, per_dim);
        let ac = grid_points(action_box, per_dim);
        Self::from_centers(policy, sc, ac, length_scale)
    }

    /// Product of explicit state and action centers.
    pub fn from_centers(
        policy: SharedPolicy,
        state_points: Vec<Vector>,
        action_points: Vec<Vector>,
        length_scale: f64,
    ) -> Self {
        let mut state_centers = Vec::new();
        let mut action_centers = Vec::new();
        for s in &state_points {
            for a in &action_points {
                state_centers.push(s.clone());
                action_centers.push(a.clone());
            }
        }
        GenericRbfFeatures {
            policy,
            state_centers,
            action_centers,
            length_scale,
        }
    }

    fn kernels(&self, state: &Vector, action: &Vector) -> Vector {
        let denom = 2.0 * self.length_scale * self.length_scale;
        let norm = (self.state_centers.len() as f64).sqrt();
        Vector::from_iterator(
            self.state_centers.len(),
            self.state_centers
                .iter()
                .zip(&self.action_centers)
                .map(|(sc, ac)| {
                    let d2 = (state - sc).norm_squared() + (action - ac).norm_squared();
                    (-d2 / denom).exp() / norm
                }),
        )
    }
}

impl CriticFeatures for GenericRbfFeatures {
    fn dim(&self) -> usize {
        self.state_centers.len()
    }

    fn policy(&self) -> &dyn Policy {
        self.policy.as_ref()
    }

    fn phi(&self, _theta: &Vector, state: &Vector, action: &Vector) -> Vector {
        self.kernels(state, action)
    }

    fn action_jacobian(&self, _theta: &Vector, state: &Vector, action: &Vector) -> Matrix {
        let k = self.kernels(state, action);
        let m = action.len();
        let l2 = self.length_scale * self.length_scale;
        let mut jac = Matrix::zeros(k.len(), m);
        for (c, ac) in self.action_centers.iter().enumerate() {
            for j in 0..m {
                jac[(c, j)] = -k[c] * (action[j] - ac[j]) / l2;
            }
        }
        jac
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{LinearPolicy, RbfPolicy};
    use rand::Rng as _;

    fn compat_linear(n: usize, m: usize, psi: SharedStateFeatures, scale: f64) -> CompatibleFeatures {
        CompatibleFeatures::new(Arc::new(LinearPolicy::new(n, m)), psi, scale)
    }

    #[test]
    fn on_policy_action_gives_state_features() {
        let bx = [Interval::symmetric(1.0); 2];
        let psi: SharedStateFeatures = Arc::new(RbfStateFeatures::grid(&bx, 3, 0.5));
        let f = compat_linear(2, 1, psi.clone(), 0.3);
        let theta = Vector::from_vec(vec![0.4, -0.2]);
        let s = Vector::from_vec(vec![0.1, 0.7]);
        let phi = f.state_phi(&theta, &s);
        assert!(phi.rows(0, 2).amax() == 0.0);
        assert_eq!(phi.rows(2, psi.dim()).into_owned(), psi.eval(&s));
    }

    #[test]
    fn scalar_arithmetic_example() {
        let f = compat_linear(1, 1, Arc::new(NoStateFeatures), 1.0);
        let phi = f.phi(
            &Vector::from_element(1, 0.5),
            &Vector::from_element(1, 2.0),
            &Vector::from_element(1, 1.5),
        );
        assert_eq!(phi.as_slice(), &[1.0]);
    }

    #[test]
    fn action_derivative_matches_finite_differences() {
        let bx = [Interval::symmetric(1.0); 2];
        let policy: SharedPolicy = Arc::new(RbfPolicy::grid(&bx, 2, 0.8, 2).unwrap());
        let psi: SharedStateFeatures = Arc::new(RbfStateFeatures::grid(&bx, 2, 0.5));
        let compat = CompatibleFeatures::new(policy.clone(), psi, 0.7);
        let generic = GenericRbfFeatures::grid(policy.clone(), &bx, &[Interval::symmetric(1.0); 2], 2, 0.9);
        let mut rng = crate::rng::stream(2, 0);
        for f in [&compat as &dyn CriticFeatures, &generic] {
            for _ in 0..20 {
                let theta = Vector::from_fn(policy.param_dim(), |_, _| rng.random_range(-1.0..1.0));
                let s = Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
                let a = policy.action_unchecked(&theta, &s);
                let jac = f.action_jacobian(&theta, &s, &a);
                let h = 1e-6;
                for j in 0..2 {
                    let mut ap = a.clone();
                    let mut am = a.clone();
                    ap[j] += h;
                    am[j] -= h;
                    let fd = (f.phi(&theta, &s, &ap) - f.phi(&theta, &s, &am)) / (2.0 * h);
                    assert!((fd - jac.column(j)).amax() < 1e-8);
                }
            }
        }
        // the action block of compatible features is exactly c ∇_θπ
        let theta = Vector::from_element(policy.param_dim(), 0.3);
        let s = Vector::from_vec(vec![0.2, -0.6]);
        let a = policy.action_unchecked(&theta, &s);
        let jac = compat.action_jacobian(&theta, &s, &a);
        let expect = policy.jacobian_unchecked(&theta, &s) * 0.7;
        assert_eq!(jac.view((0, 0), (policy.param_dim(), 2)).into_owned(), expect);
    }

    #[test]
    fn compatibility_identity_on_random_instances() {
        let mut rng = crate::rng::stream(4, 0);
        let bx = [Interval::symmetric(1.0); 3];
        let psi: SharedStateFeatures = Arc::new(QuadraticFeatures::new(&bx));
        let f = compat_linear(3, 2, psi, 0.25);
        let policy = LinearPolicy::new(3, 2);
        for _ in 0..200 {
            let theta = Vector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
            let s = Vector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let w = Vector::from_fn(f.dim(), |_, _| rng.random_range(-3.0..3.0));
            let lhs = f.action_gradient(&theta, &s, &w);
            let jac = policy.jacobian(&theta, &s).unwrap();
            let rhs = jac.transpose() * w.rows(0, 6) * 0.25;
            assert!((lhs - rhs).amax() < 1e-10);
        }
    }

    #[test]
    fn feature_norm_bound_on_declared_boxes() {
        let sb = [Interval::symmetric(1.5)];
        let ab = [Interval::symmetric(2.0)];
        let policy: SharedPolicy = Arc::new(LinearPolicy::new(1, 1));
        let psi: SharedStateFeatures = Arc::new(QuadraticFeatures::new(&sb));
        let theta_radius = 2.0;
        let compat = CompatibleFeatures::normalized(policy.clone(), psi, &sb, &ab, theta_radius);
        let generic = GenericRbfFeatures::grid(policy, &sb, &ab, 4, 0.7);
        let mut rng = crate::rng::stream(8, 0);
        for f in [&compat as &dyn CriticFeatures, &generic] {
            let mut sup: f64 = 0.0;
            for _ in 0..100_000 {
                let theta = Vector::from_element(1, rng.random_range(-theta_radius..=theta_radius));
                let s = Vector::from_element(1, rng.random_range(-1.5..=1.5));
                let a = Vector::from_element(1, rng.random_range(-2.0..=2.0));
                sup = sup.max(f.phi(&theta, &s, &a).norm());
            }
            assert!(sup <= 1.0, "sup norm {sup}");
        }
    }

    #[test]
    fn state_feature_norms() {
        let bx = [Interval::symmetric(2.0); 2];
        let rbf = RbfStateFeatures::grid(&bx, 4, 0.5);
        let quad = QuadraticFeatures::new(&bx);
        let mut rng = crate::rng::stream(9, 0);
        for _ in 0..1000 {
            let s = Vector::from_fn(2, |_, _| rng.random_range(-2.0..=2.0));
            assert!((rbf.eval(&s).norm() - 0.5).abs() < 1e-12);
            assert!(quad.eval(&s).norm() <= 0.5 + 1e-12);
        }
    }
}
