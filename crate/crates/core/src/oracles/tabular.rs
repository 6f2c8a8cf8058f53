//! Finite Markov chains under a fixed policy: stationary distribution,
//! average reward, Poisson equation, differential Q and TD fixed points.

use std::collections::VecDeque;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{max_sym_eigenvalue, solve, Matrix, Vector};

/// States up to this count use a direct linear solve for `d`.
pub const DIRECT_SOLVE_LIMIT: usize = 512;

/// A chain `P` with per-state rewards `R`, verified ergodic on construction.
#[derive(Clone, Debug)]
pub struct TabularMdp {
    p: Matrix,
    r: Vector,
}

#[derive(Clone, Debug)]
pub struct PoissonSolution {
    /// Differential values with `Σ d(s) V(s) = 0`.
    pub v: Vector,
    /// The unique constant solving the equation; equals `ρ`.
    pub k: f64,
}

/// `w* = −A⁻¹ b` together with the operator it came from.
#[derive(Clone, Debug)]
pub struct FixedPointResult {
    pub w_star: Vector,
    pub rho_star: f64,
    pub a_mat: Matrix,
    pub b_vec: Vector,
}

impl TabularMdp {
    pub fn new(p: Matrix, r: Vector) -> Result<Self> {
        let n = p.nrows();
        if n == 0 || !p.is_square() {
            return Err(Error::invalid("transition matrix must be square and non-empty"));
        }
        check_dim("reward vector", n, r.len())?;
        if p.iter().chain(r.iter()).any(|x| !x.is_finite()) {
            return Err(Error::invalid("transition matrix and rewards must be finite"));
        }
        if p.iter().any(|&x| x < 0.0) {
            return Err(Error::invalid("transition probabilities must be >= 0"));
        }
        for i in 0..n {
            let s: f64 = p.row(i).sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("row {i} sums to {s}, not 1")));
            }
        }
        check_ergodic(&p)?;
        Ok(TabularMdp { p, r })
    }

    pub fn n_states(&self) -> usize {
        self.p.nrows()
    }

    pub fn transition(&self) -> &Matrix {
        &self.p
    }

    pub fn rewards(&self) -> &Vector {
        &self.r
    }

    /// `dᵀP = dᵀ`, `Σ d = 1`.
    pub fn stationary_distribution(&self) -> Result<Vector> {
        let n = self.n_states();
        let d = if n <= DIRECT_SOLVE_LIMIT {
            // (I − P)ᵀ d = 0 with the last equation replaced by Σ d = 1
            let mut lhs = Matrix::identity(n, n) - self.p.transpose();
            lhs.row_mut(n - 1).fill(1.0);
            let mut rhs = Vector::zeros(n);
            rhs[n - 1] = 1.0;
            let d = solve(&lhs, &rhs, "stationary distribution")?;
            if d.iter().all(|&x| x > 0.0) {
                d
            } else {
                // states with vanishing mass can come out as tiny negatives;
                // a few multiplications by P restore positivity
                polish(&self.p, d)?
            }
        } else {
            power_iteration(&self.p, 1e-13)?
        };
        if d.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::NonErgodic("stationary distribution has non-positive entries".into()));
        }
        Ok(d)
    }

    pub fn average_reward(&self) -> Result<f64> {
        Ok(self.stationary_distribution()?.dot(&self.r))
    }

    /// Solves `[I − P, 1; dᵀ, 0] [V; k] = [R; 0]`.
    pub fn solve_poisson(&self) -> Result<PoissonSolution> {
        let n = self.n_states();
        let d = self.stationary_distribution()?;
        let mut lhs = Matrix::zeros(n + 1, n + 1);
        lhs.view_mut((0, 0), (n, n)).copy_from(&(Matrix::identity(n, n) - &self.p));
        lhs.view_mut((0, n), (n, 1)).fill(1.0);
        lhs.view_mut((n, 0), (1, n)).copy_from(&d.transpose());
        let mut rhs = Vector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(&self.r);
        let sol = solve(&lhs, &rhs, "Poisson equation")?;
        Ok(PoissonSolution {
            v: sol.rows(0, n).into_owned(),
            k: sol[n],
        })
    }

    /// `‖V − (R − k·1 + P V)‖_∞`.
    pub fn poisson_residual(&self, v: &Vector, k: f64) -> f64 {
        let rhs = &self.r - Vector::from_element(self.n_states(), k) + &self.p * v;
        (v - rhs).amax()
    }

    /// Least-squares residual of `(I − P) V = R − k·1` over all `V`.
    /// Zero only when `k = ρ`. For an irreducible chain the range of `I − P`
    /// is the orthogonal complement of one left null vector `ℓ`, taken here
    /// as the bottom eigenvector of `(I − P)(I − P)ᵀ`, and the residual is
    /// `|ℓᵀ(R − k·1)|`.
    pub fn poisson_inconsistency(&self, k: f64) -> f64 {
        let n = self.n_states();
        let lhs = Matrix::identity(n, n) - &self.p;
        let rhs = &self.r - Vector::from_element(n, k);
        let eig = (&lhs * lhs.transpose()).symmetric_eigen();
        let (idx, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, v)| if *v < best.1 { (i, *v) } else { best });
        eig.eigenvectors.column(idx).dot(&rhs).abs()
    }

    /// `A = Fᵀ D (P F − F) − η I` and `b = Fᵀ D (R − ρ 1)` for per-state
    /// features given as the rows of `features`, then `w* = −A⁻¹ b`.
    pub fn td_fixed_point(&self, features: &Matrix, eta: f64, rho_star: f64) -> Result<FixedPointResult> {
        let (a_mat, b_vec) = self.td_system(features, eta, rho_star)?;
        let w_star = -solve(&a_mat, &b_vec, "TD fixed point")?;
        Ok(FixedPointResult {
            w_star,
            rho_star,
            a_mat,
            b_vec,
        })
    }

    /// `(A, b)` without solving; `A` may be singular.
    pub fn td_system(&self, features: &Matrix, eta: f64, rho_star: f64) -> Result<(Matrix, Vector)> {
        check_dim("feature rows", self.n_states(), features.nrows())?;
        let k = features.ncols();
        let d = self.stationary_distribution()?;
        let a_mat = self.td_operator(features, &d) - Matrix::identity(k, k) * eta;
        let centered = &self.r - Vector::from_element(self.n_states(), rho_star);
        let b_vec = features.transpose() * centered.component_mul(&d);
        Ok((a_mat, b_vec))
    }

    /// Largest eigenvalue of the symmetric part of `A' = Fᵀ D (P F − F)`.
    pub fn lambda_max_sym(&self, features: &Matrix) -> Result<f64> {
        check_dim("feature rows", self.n_states(), features.nrows())?;
        let d = self.stationary_distribution()?;
        Ok(max_sym_eigenvalue(&self.td_operator(features, &d)))
    }

    fn td_operator(&self, features: &Matrix, d: &Vector) -> Matrix {
        let diff = &self.p * features - features;
        let mut weighted = features.transpose();
        for (j, dj) in d.iter().enumerate() {
            weighted.column_mut(j).scale_mut(*dj);
        }
        weighted * diff
    }
}

fn polish(p: &Matrix, d: Vector) -> Result<Vector> {
    if d.iter().any(|&x| x < -1e-9) {
        return Err(Error::NonErgodic("stationary distribution has negative entries".into()));
    }
    let pt = p.transpose();
    let mut d = d.map(|x| x.max(f64::MIN_POSITIVE));
    d /= d.sum();
    for _ in 0..100 {
        d = &pt * &d;
        d /= d.sum();
    }
    Ok(d)
}

fn power_iteration(p: &Matrix, tol: f64) -> Result<Vector> {
    let n = p.nrows();
    let pt = p.transpose();
    let mut d = Vector::from_element(n, 1.0 / n as f64);
    for _ in 0..10_000_000 {
        let mut next = &pt * &d;
        next /= next.sum();
        let diff = (&next - &d).amax();
        d = next;
        if diff < tol {
            return Ok(d);
        }
    }
    Err(Error::NonErgodic("power iteration did not converge".into()))
}

/// Irreducibility via forward and backward reachability from state 0,
/// aperiodicity via the gcd of BFS level differences over all edges.
fn check_ergodic(p: &Matrix) -> Result<()> {
    let n = p.nrows();
    let adj: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| p[(i, j)] > 0.0).collect()).collect();
    let radj: Vec<Vec<usize>> = (0..n).map(|j| (0..n).filter(|&i| p[(i, j)] > 0.0).collect()).collect();
    let levels = bfs_levels(&adj);
    if levels.iter().any(Option::is_none) || bfs_levels(&radj).iter().any(Option::is_none) {
        return Err(Error::NonErgodic("chain is not irreducible".into()));
    }
    let mut period = 0i64;
    for (u, outs) in adj.iter().enumerate() {
        for &v in outs {
            let diff = levels[u].unwrap() as i64 + 1 - levels[v].unwrap() as i64;
            period = gcd(period, diff.abs());
        }
    }
    if period != 1 {
        return Err(Error::NonErgodic(format!("chain is periodic with period {period}")));
    }
    Ok(())
}

fn bfs_levels(adj: &[Vec<usize>]) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    let mut queue = VecDeque::from([0usize]);
    level[0] = Some(0);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if level[v].is_none() {
                level[v] = Some(level[u].unwrap() + 1);
                queue.push_back(v);
            }
        }
    }
    level
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Finite states and finite actions: `P(s'|s, a)` per action, `R(s, a)`.
#[derive(Clone, Debug)]
pub struct FiniteActionMdp {
    /// One `n×n` row-stochastic matrix per action.
    pub p: Vec<Matrix>,
    /// `n×|A|`.
    pub r: Matrix,
}

impl FiniteActionMdp {
    pub fn new(p: Vec<Matrix>, r: Matrix) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::invalid("at least one action required"));
        }
        let n = p[0].nrows();
        for pa in &p {
            if pa.shape() != (n, n) {
                return Err(Error::invalid("all action matrices must be n×n"));
            }
        }
        if r.shape() != (n, p.len()) {
            return Err(Error::invalid("reward table must be n×|A|"));
        }
        Ok(FiniteActionMdp { p, r })
    }

    pub fn n_states(&self) -> usize {
        self.r.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.p.len()
    }

    /// Chain induced by a deterministic policy given as action indices.
    pub fn induced(&self, policy: &[usize]) -> Result<TabularMdp> {
        let n = self.n_states();
        check_dim("policy table", n, policy.len())?;
        let mut p = Matrix::zeros(n, n);
        let mut r = Vector::zeros(n);
        for (s, &a) in policy.iter().enumerate() {
            if a >= self.n_actions() {
                return Err(Error::invalid(format!("action index {a} out of range")));
            }
            p.row_mut(s).copy_from(&self.p[a].row(s));
            r[s] = self.r[(s, a)];
        }
        TabularMdp::new(p, r)
    }

    /// `Q(s, a) = R(s, a) − ρ + Σ_{s'} P(s'|s, a) V(s')`.
    pub fn differential_q(&self, policy: &[usize]) -> Result<Matrix> {
        let sol = self.induced(policy)?.solve_poisson()?;
        let n = self.n_states();
        let mut q = Matrix::zeros(n, self.n_actions());
        for a in 0..self.n_actions() {
            let next = &self.p[a] * &sol.v;
            for s in 0..n {
                q[(s, a)] = self.r[(s, a)] - sol.k + next[s];
            }
        }
        Ok(q)
    }
}
