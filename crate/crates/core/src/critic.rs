//! Linear differential-Q critic and average-reward estimator.
//!
//! One step of the coupled iteration, for a batch of `M` transitions with
//! features `φ_i = φ(s_i, a_i)` and `φ'_i = φ(s'_i, π(s'_i, θ̄))`:
//!
//! ```text
//! w   ← Γ_Cw( w + α/M Σ (r_i − ρ̄ + φ'_iᵀw̄ − φ_iᵀw) φ_i − α η w )
//! ρ   ← ρ + α/M Σ (r_i − ρ + φ'_iᵀw̄ − φ_iᵀw̄)
//! w̄   ← w̄ + β (w − w̄),   ρ̄ ← ρ̄ + β (ρ − ρ̄)
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::env::Transition;
use crate::error::{check_dim, Error, Result};
use crate::features::CriticFeatures;
use crate::linalg::{Matrix, Vector};
use crate::policy::ProjectionBall;

#[derive(Clone, Debug, PartialEq)]
pub struct CriticState {
    pub w1: Vector,
    /// Second head. Mirrors `w1` in single-head linear mode.
    pub w2: Vector,
    pub rho: f64,
    pub w1_target: Vector,
    pub w2_target: Vector,
    pub rho_target: f64,
    pub eta: f64,
    pub ball: ProjectionBall,
    /// Number of completed update steps.
    pub t: u64,
}

impl CriticState {
    pub fn zeros(dim: usize, eta: f64, ball: ProjectionBall) -> Result<Self> {
        Self::new(Vector::zeros(dim), 0.0, eta, ball)
    }

    /// Targets start equal to the online values; `w` is projected first.
    pub fn new(w: Vector, rho: f64, eta: f64, ball: ProjectionBall) -> Result<Self> {
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::invalid(format!("eta must be finite and >= 0, got {eta}")));
        }
        if !rho.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("initial critic values must be finite"));
        }
        let w = ball.project(&w);
        Ok(CriticState {
            w2: w.clone(),
            w1_target: w.clone(),
            w2_target: w.clone(),
            w1: w,
            rho,
            rho_target: rho,
            eta,
            ball,
            t: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.w1.len()
    }

    /// Bound on `|ρ|` and `|ρ̄|` implied by `‖φ‖ ≤ 1`, `|r| ≤ C_r` and the ball.
    pub fn rho_bound(&self, reward_bound: f64) -> f64 {
        reward_bound + 2.0 * self.ball.radius()
    }

    /// Checks the invariants that the projection and step-size bounds guarantee.
    pub fn within_bounds(&self, reward_bound: f64) -> bool {
        let c = self.ball.radius();
        let rb = self.rho_bound(reward_bound);
        self.w1.norm() <= c
            && self.w2.norm() <= c
            && self.w1_target.norm() <= c
            && self.w2_target.norm() <= c
            && self.rho.abs() <= rb
            && self.rho_target.abs() <= rb
    }

    /// `φ(s, π(s))ᵀ w` for the first head.
    pub fn value(&self, phi: &Vector) -> f64 {
        phi.dot(&self.w1)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Line-oriented dump. Field order: header, `t`, `eta`, `radius`, `rho`,
    /// `rho_target`, then `w1`, `w2`, `w1_target`, `w2_target` each as
    /// `name len v0 v1 …`. Floats use shortest round-trip formatting.
    pub fn to_text(&self) -> String {
        let mut s = String::from(CHECKPOINT_HEADER);
        s.push('\n');
        let _ = writeln!(s, "t {}", self.t);
        let _ = writeln!(s, "eta {}", self.eta);
        let _ = writeln!(s, "radius {}", self.ball.radius());
        let _ = writeln!(s, "rho {}", self.rho);
        let _ = writeln!(s, "rho_target {}", self.rho_target);
        for (name, v) in [
            ("w1", &self.w1),
            ("w2", &self.w2),
            ("w1_target", &self.w1_target),
            ("w2_target", &self.w2_target),
        ] {
            let _ = write!(s, "{name} {}", v.len());
            for x in v.iter() {
                let _ = write!(s, " {x}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let mut lines = text.lines();
        if lines.next() != Some(CHECKPOINT_HEADER) {
            return Err(bad("missing or unsupported header"));
        }
        let mut field = |name: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| bad(&format!("missing field {name}")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(name) {
                return Err(bad(&format!("expected field {name}")));
            }
            Ok(parts.map(str::to_string).collect())
        };
        let num = |v: &[String], name: &str| -> Result<f64> {
            v.first()
                .and_then(|x| x.parse().ok())
                .ok_or_else(|| bad(&format!("bad value for {name}")))
        };
        let t: u64 = field("t")?
            .first()
            .and_then(|x| x.parse().ok())
            .ok_or_else(|| bad("bad value for t"))?;
        let eta = num(&field("eta")?, "eta")?;
        let radius = num(&field("radius")?, "radius")?;
        let rho = num(&field("rho")?, "rho")?;
        let rho_target = num(&field("rho_target")?, "rho_target")?;
        let mut vecs = Vec::new();
        for name in ["w1", "w2", "w1_target", "w2_target"] {
            let parts = field(name)?;
            let len: usize = parts
                .first()
                .and_then(|x| x.parse().ok())
                .ok_or_else(|| bad(&format!("bad length for {name}")))?;
            let vals: Vec<f64> = parts[1..]
                .iter()
                .map(|x| x.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(&format!("bad value in {name}")))?;
            if vals.len() != len {
                return Err(bad(&format!("length mismatch in {name}")));
            }
            vecs.push(Vector::from_vec(vals));
        }
        let ball = ProjectionBall::new(radius).map_err(|_| bad("bad radius"))?;
        let mut it = vecs.into_iter();
        Ok(CriticState {
            w1: it.next().unwrap(),
            w2: it.next().unwrap(),
            w1_target: it.next().unwrap(),
            w2_target: it.next().unwrap(),
            rho,
            rho_target,
            eta,
            ball,
            t,
        })
    }
}

const CHECKPOINT_HEADER: &str = "ardpg-critic v1";

/// Features and rewards of a batch, columns are samples.
#[derive(Clone, Debug)]
pub struct FeatureBatch {
    pub phi: Matrix,
    pub phi_next: Matrix,
    pub rewards: Vector,
}

impl FeatureBatch {
    pub fn new(phi: Matrix, phi_next: Matrix, rewards: Vector) -> Result<Self> {
        if phi.ncols() == 0 {
            return Err(Error::invalid("empty batch"));
        }
        check_dim("next-state feature rows", phi.nrows(), phi_next.nrows())?;
        check_dim("next-state feature columns", phi.ncols(), phi_next.ncols())?;
        check_dim("batch rewards", phi.ncols(), rewards.len())?;
        Ok(FeatureBatch { phi, phi_next, rewards })
    }

    /// `φ(s, a)` under the online actor `θ` at the stored action and
    /// `φ(s', π(s', θ̄))` under the target actor.
    pub fn from_transitions(
        batch: &[Transition],
        features: &dyn CriticFeatures,
        theta: &Vector,
        theta_target: &Vector,
    ) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let policy = features.policy();
        check_dim("actor parameters", policy.param_dim(), theta.len())?;
        check_dim("target actor parameters", policy.param_dim(), theta_target.len())?;
        let k = features.dim();
        let mut phi = Matrix::zeros(k, batch.len());
        let mut phi_next = Matrix::zeros(k, batch.len());
        for (i, tr) in batch.iter().enumerate() {
            check_dim("transition state", policy.state_dim(), tr.state.len())?;
            check_dim("transition action", policy.action_dim(), tr.action.len())?;
            phi.set_column(i, &features.phi(theta, &tr.state, &tr.action));
            phi_next.set_column(i, &features.state_phi(theta_target, &tr.next_state));
        }
        let rewards = Vector::from_iterator(batch.len(), batch.iter().map(|t| t.reward));
        FeatureBatch::new(phi, phi_next, rewards)
    }

    pub fn len(&self) -> usize {
        self.phi.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_step(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("step size must be finite and >= 0, got {alpha}")))
    }
}

/// Projected, l2-regularized TD(0) step on the first head; the second
/// head mirrors the first.
pub fn td_update(cs: &mut CriticState, batch: &FeatureBatch, alpha: f64) -> Result<()> {
    check_step(alpha)?;
    check_dim("critic features", cs.dim(), batch.phi.nrows())?;
    let m = batch.len() as f64;
    let next = batch.phi_next.transpose() * &cs.w1_target;
    let cur = batch.phi.transpose() * &cs.w1;
    let delta = &batch.rewards - Vector::from_element(batch.len(), cs.rho_target) + next - cur;
    let step = &batch.phi * delta * (alpha / m) - &cs.w1 * (alpha * cs.eta);
    let mut w = &cs.w1 + step;
    cs.ball.project_in_place(&mut w);
    cs.w2.copy_from(&w);
    cs.w1 = w;
    Ok(())
}

/// Average-reward step; both bootstrap terms use the target critic.
pub fn rho_update(cs: &mut CriticState, batch: &FeatureBatch, alpha: f64) -> Result<()> {
    check_step(alpha)?;
    check_dim("critic features", cs.dim(), batch.phi.nrows())?;
    let m = batch.len() as f64;
    let diff = (&batch.phi_next - &batch.phi).transpose() * &cs.w1_target;
    let total: f64 = batch.rewards.iter().zip(diff.iter()).map(|(r, d)| r - cs.rho + d).sum();
    cs.rho += alpha / m * total;
    Ok(())
}

pub fn polyak_scalar(current: f64, target: f64, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok(target + beta * (current - target))
}

pub fn polyak_vector(current: &Vector, target: &Vector, beta: f64) -> Result<Vector> {
    check_beta(beta)?;
    check_dim("polyak target", current.len(), target.len())?;
    Ok(target + (current - target) * beta)
}

fn check_beta(beta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&beta) {
        Ok(())
    } else {
        Err(Error::invalid(format!("averaging weight must lie in [0, 1], got {beta}")))
    }
}

/// Moves `w̄` and `ρ̄` towards the online values. The convex combination
/// of two points of the ball stays in the ball; projecting afterwards only
/// absorbs rounding.
pub fn update_targets(cs: &mut CriticState, beta: f64) -> Result<()> {
    cs.w1_target = polyak_vector(&cs.w1, &cs.w1_target, beta)?;
    cs.w2_target = polyak_vector(&cs.w2, &cs.w2_target, beta)?;
    cs.ball.project_in_place(&mut cs.w1_target);
    cs.ball.project_in_place(&mut cs.w2_target);
    cs.rho_target = polyak_scalar(cs.rho, cs.rho_target, beta)?;
    Ok(())
}

pub fn double_q_min(q1: f64, q2: f64) -> f64 {
    q1.min(q2)
}
