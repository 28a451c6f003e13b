//! Dense primal log-barrier interior-point solver for small convex
//! quadratically-constrained quadratic programs, with second-order-cone
//! constraints for the SINR-constrained subproblems.
//!
//! Problems are stated over complex or real variables; complex data is
//! realified once at construction (`[Re; Im]` stacking, see [`crate::linalg`])
//! and solved along a single real path. The canonical form is
//!
//! ```text
//!     minimize    1/2 x^T P x - q^T x + constant
//!     subject to  1/2 x^T C_i x - l_i^T x <= b_i          (P, C_i PSD)
//!                 || F_j x + g_j || <= d_j^T x + e_j
//! ```
//!
//! Newton steps on `t f0 + barrier` with backtracking line search, barrier
//! schedule `mu <- mu/10`, and a phase-I minimize-max-violation pass when no
//! strictly feasible start is available. Data is equilibrated internally
//! (per-constraint plus optional per-variable scales) so the tolerances
//! behave sensibly on badly scaled physical inputs.

use nalgebra::linalg::Cholesky;

use crate::error::{Result, RisError};
use crate::linalg::{
    complexify_vec, max_abs, realify_herm, realify_vec, CMat, CVec, RMat, RVec,
};

/// Termination state of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QcqpStatus {
    /// Converged with certified KKT residual.
    Optimal,
    /// Phase-I proved there is no strictly feasible point.
    Infeasible,
    /// Newton budget exhausted; best iterate returned.
    MaxIter,
}

/// Variable space of the original problem statement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Space {
    Real,
    Complex,
}

#[derive(Debug, Clone)]
enum Constraint {
    /// `1/2 x^T P x - l^T x <= b` with dense PSD `P`.
    Quad { p: RMat, l: RVec, b: f64 },
    /// `1/2 sum_i d_i x_i^2 - l^T x <= b` (covers linear constraints via d = 0).
    DiagQuad { d: RVec, l: RVec, b: f64 },
    /// `|| F x + g || <= d^T x + e`.
    Soc { f: RMat, g: RVec, d: RVec, e: f64 },
}

/// Convex QCQP/SOCP instance over real or complex variables.
#[derive(Debug, Clone)]
pub struct QcqpProblem {
    n: usize,
    space: Space,
    p: RMat,
    q: RVec,
    constant: f64,
    constraints: Vec<Constraint>,
    var_scale: Option<RVec>,
}

/// Result of a solve. Multipliers and the KKT residual refer to the original
/// (unscaled) problem data.
#[derive(Debug, Clone)]
pub struct QcqpSolution {
    x: RVec,
    space: Space,
    pub objective: f64,
    pub status: QcqpStatus,
    /// `max(stationarity norm, complementary slackness)` at the returned point.
    pub kkt_residual: f64,
    /// Dual multipliers, one per constraint, nonnegative.
    pub multipliers: Vec<f64>,
    pub newton_iters: usize,
    /// Worst constraint violation at the phase-I optimum when infeasible.
    pub max_violation: Option<f64>,
}

impl QcqpSolution {
    pub fn x_real(&self) -> &RVec {
        &self.x
    }

    /// Solution mapped back to complex variables. Panics when the problem was
    /// stated over real variables.
    pub fn x_complex(&self) -> CVec {
        match self.space {
            Space::Complex => complexify_vec(&self.x),
            Space::Real => panic!("problem was stated over real variables"),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == QcqpStatus::Optimal
    }
}

impl QcqpProblem {
    /// Problem over `n` real variables, zero objective until set.
    pub fn new_real(n: usize) -> Self {
        QcqpProblem {
            n,
            space: Space::Real,
            p: RMat::zeros(n, n),
            q: RVec::zeros(n),
            constant: 0.0,
            constraints: Vec::new(),
            var_scale: None,
        }
    }

    /// Problem over `n` complex variables (realified to `2n` internally).
    pub fn new_complex(n: usize) -> Self {
        QcqpProblem { space: Space::Complex, ..Self::new_real(2 * n) }
    }

    pub fn n_real(&self) -> usize {
        self.n
    }

    pub fn n_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Objective `1/2 x^T P x - q^T x + constant` over the real variables.
    pub fn set_objective_real(&mut self, p: RMat, q: RVec, constant: f64) -> Result<()> {
        self.check_dims(p.nrows(), q.len())?;
        self.p = p;
        self.q = q;
        self.constant = constant;
        Ok(())
    }

    /// Objective `1/2 z^H P z - Re{q^H z} + constant` with Hermitian PSD `P`.
    pub fn set_objective_complex(&mut self, p: &CMat, q: &CVec, constant: f64) -> Result<()> {
        if self.space != Space::Complex {
            return Err(RisError::Dimension("problem is over real variables".into()));
        }
        if 2 * p.nrows() != self.n || p.ncols() != p.nrows() || 2 * q.len() != self.n {
            return Err(RisError::Dimension("complex objective dimension mismatch".into()));
        }
        self.p = realify_herm(p);
        self.q = realify_vec(q);
        self.constant = constant;
        Ok(())
    }

    /// `1/2 x^T C x - l^T x <= b` over the real variables.
    pub fn add_quad_real(&mut self, c: RMat, l: RVec, b: f64) -> Result<()> {
        self.check_dims(c.nrows(), l.len())?;
        self.constraints.push(Constraint::Quad { p: c, l, b });
        Ok(())
    }

    /// `1/2 z^H C z - Re{l^H z} <= b` with Hermitian PSD `C`.
    pub fn add_quad_complex(&mut self, c: &CMat, l: &CVec, b: f64) -> Result<()> {
        if self.space != Space::Complex {
            return Err(RisError::Dimension("problem is over real variables".into()));
        }
        if 2 * c.nrows() != self.n || c.ncols() != c.nrows() || 2 * l.len() != self.n {
            return Err(RisError::Dimension("complex constraint dimension mismatch".into()));
        }
        self.constraints.push(Constraint::Quad { p: realify_herm(c), l: realify_vec(l), b });
        Ok(())
    }

    /// `1/2 sum d_i x_i^2 - l^T x <= b` (cheap diagonal form).
    pub fn add_diag_quad(&mut self, d: RVec, l: RVec, b: f64) -> Result<()> {
        self.check_dims(d.len(), l.len())?;
        self.constraints.push(Constraint::DiagQuad { d, l, b });
        Ok(())
    }

    /// Linear constraint `a^T x <= b`.
    pub fn add_linear(&mut self, a: RVec, b: f64) -> Result<()> {
        self.check_dims(a.len(), a.len())?;
        self.constraints.push(Constraint::DiagQuad { d: RVec::zeros(self.n), l: -a, b });
        Ok(())
    }

    /// Second-order cone constraint `|| F x + g || <= d^T x + e`.
    pub fn add_soc(&mut self, f: RMat, g: RVec, d: RVec, e: f64) -> Result<()> {
        if f.ncols() != self.n || d.len() != self.n || f.nrows() != g.len() {
            return Err(RisError::Dimension("SOC constraint dimension mismatch".into()));
        }
        self.constraints.push(Constraint::Soc { f, g, d, e });
        Ok(())
    }

    /// Typical variable magnitudes, used for internal equilibration.
    pub fn set_var_scale(&mut self, s: RVec) -> Result<()> {
        self.check_dims(s.len(), s.len())?;
        if s.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(RisError::Config("variable scales must be positive and finite".into()));
        }
        self.var_scale = Some(s);
        Ok(())
    }

    fn check_dims(&self, rows: usize, len: usize) -> Result<()> {
        if rows != self.n || len != self.n {
            return Err(RisError::Dimension(format!(
                "expected (realified) dimension {}, got {rows}/{len}",
                self.n
            )));
        }
        Ok(())
    }

    /// Original-unit objective value.
    pub fn objective_at(&self, x: &RVec) -> f64 {
        0.5 * x.dot(&(&self.p * x)) - self.q.dot(x) + self.constant
    }

    /// Per-constraint violations `c_i(x) - b_i` (SOC in norm form); negative
    /// entries mean satisfied.
    pub fn violations(&self, x: &RVec) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|c| match c {
                Constraint::Quad { p, l, b } => 0.5 * x.dot(&(p * x)) - l.dot(x) - b,
                Constraint::DiagQuad { d, l, b } => {
                    0.5 * x.iter().zip(d.iter()).map(|(xi, di)| di * xi * xi).sum::<f64>()
                        - l.dot(x)
                        - b
                }
                Constraint::Soc { f, g, d, e } => (f * x + g).norm() - d.dot(x) - e,
            })
            .collect()
    }

    pub fn solve(&self, tol: f64, max_iter: usize) -> Result<QcqpSolution> {
        self.solve_with_start(tol, max_iter, None)
    }

    /// Solve with an optional warm start in original units; a strictly
    /// feasible start skips phase-I.
    pub fn solve_with_start(
        &self,
        tol: f64,
        max_iter: usize,
        x0: Option<&RVec>,
    ) -> Result<QcqpSolution> {
        if !(tol > 0.0) {
            return Err(RisError::Config("tolerance must be positive".into()));
        }
        if let Some(x) = x0 {
            if x.len() != self.n {
                return Err(RisError::Dimension("warm start dimension mismatch".into()));
            }
        }

        let s = self.var_scale.clone().unwrap_or_else(|| RVec::from_element(self.n, 1.0));
        let (core, obj_scale, con_scales) = scale_problem(self, &s);
        let to_scaled = |x: &RVec| RVec::from_fn(self.n, |i, _| x[i] / s[i]);
        let to_original = |x: &RVec| RVec::from_fn(self.n, |i, _| x[i] * s[i]);

        // Unconstrained: one normal-equation solve on the original data (the
        // flat-direction ridge is not needed and would bias the answer).
        if core.constraints.is_empty() {
            let x = solve_spd(&self.p, &self.q)
                .ok_or_else(|| RisError::Numerical("singular unconstrained system".into()))?;
            let resid = (&self.p * &x - &self.q).norm();
            return Ok(QcqpSolution {
                objective: self.objective_at(&x),
                x,
                space: self.space,
                status: QcqpStatus::Optimal,
                kkt_residual: resid,
                multipliers: Vec::new(),
                newton_iters: 1,
                max_violation: None,
            });
        }

        let mut newton_used = 0usize;
        let strict = 1e-9;

        // Strictly feasible start: warm start, the origin, or phase-I.
        let mut start = None;
        if let Some(x) = x0 {
            let xs = to_scaled(x);
            if core.min_slack(&xs) > strict {
                start = Some(xs);
            }
        }
        if start.is_none() {
            let zero = RVec::zeros(self.n);
            if core.min_slack(&zero) > strict {
                start = Some(zero);
            }
        }
        let x_start = match start {
            Some(x) => x,
            None => {
                let seed = x0.map(to_scaled).unwrap_or_else(|| RVec::zeros(self.n));
                match phase_one(&core, &seed, max_iter, &mut newton_used) {
                    PhaseOne::Feasible(x) => x,
                    PhaseOne::Infeasible(max_viol_scaled) => {
                        let worst = con_scales.iter().fold(0.0f64, |a, s| a.max(*s));
                        return Ok(QcqpSolution {
                            x: RVec::zeros(self.n),
                            space: self.space,
                            objective: f64::NAN,
                            status: QcqpStatus::Infeasible,
                            kkt_residual: f64::NAN,
                            multipliers: Vec::new(),
                            newton_iters: newton_used,
                            max_violation: Some(max_viol_scaled * worst),
                        });
                    }
                }
            }
        };

        // Main barrier path. Complementarity per constraint is 1/t; drive it
        // one decade below tol in original objective units, within numerical
        // reason.
        let t_target = (10.0 * obj_scale.max(1.0) / tol).min(1e15);
        let outcome = barrier_path(&core, x_start, t_target, max_iter, &mut newton_used, None);

        let x = to_original(&outcome.x);
        let slacks = core.slacks(&outcome.x);
        let mut multipliers = Vec::with_capacity(core.constraints.len());
        for (i, s_i) in slacks.iter().enumerate() {
            let lam_scaled = 1.0 / (outcome.t * s_i.max(1e-300));
            multipliers.push(lam_scaled * obj_scale / con_scales[i]);
        }
        // The barrier multipliers certify complementarity but their
        // stationarity degrades with the final-stage conditioning; a
        // least-squares reconstruction over the active set tightens it.
        let refined = self.refine_multipliers(&x, &multipliers);
        let mut multipliers = if self.kkt_residual(&x, &refined)
            <= self.kkt_residual(&x, &multipliers)
        {
            refined
        } else {
            multipliers
        };
        // Active-set KKT polish: a couple of Newton steps on the stationarity
        // + active-constraint system push the residual to machine precision.
        let mut x = x;
        if self.kkt_residual(&x, &multipliers) > tol {
            if let Some((xp, lp)) = self.kkt_polish(&x, &multipliers) {
                let feasible = self
                    .violations(&xp)
                    .iter()
                    .zip(&con_scales)
                    .all(|(v, s)| *v <= 1e-9 * s.max(1.0));
                if feasible && self.kkt_residual(&xp, &lp) < self.kkt_residual(&x, &multipliers) {
                    x = xp;
                    multipliers = lp;
                }
            }
        }
        let kkt_residual = self.kkt_residual(&x, &multipliers);
        let status = if outcome.converged && outcome.t >= t_target {
            QcqpStatus::Optimal
        } else {
            QcqpStatus::MaxIter
        };
        Ok(QcqpSolution {
            objective: self.objective_at(&x),
            x,
            space: self.space,
            status,
            kkt_residual,
            multipliers,
            newton_iters: newton_used,
            max_violation: None,
        })
    }

    /// Gradient of constraint `i` at `x` (SOC in the squared difference form
    /// `||Fx+g||^2 - (d^T x + e)^2`).
    fn constraint_gradient(&self, i: usize, x: &RVec) -> RVec {
        match &self.constraints[i] {
            Constraint::Quad { p, l, .. } => p * x - l,
            Constraint::DiagQuad { d, l, .. } => {
                RVec::from_fn(self.n, |j, _| d[j] * x[j] - l[j])
            }
            Constraint::Soc { f, g, d, e } => {
                let u = f * x + g;
                let tv = d.dot(x) + e;
                f.transpose() * (&u * 2.0) - d * (2.0 * tv)
            }
        }
    }

    /// Nonnegative least-squares fit of the dual multipliers over the
    /// constraints the barrier marked as active.
    fn refine_multipliers(&self, x: &RVec, barrier_lams: &[f64]) -> Vec<f64> {
        let g0 = &self.p * x - &self.q;
        let lam_max = barrier_lams.iter().fold(0.0f64, |a, l| a.max(*l));
        let mut active: Vec<usize> = (0..self.constraints.len())
            .filter(|i| barrier_lams[*i] > 1e-6 * lam_max.max(1e-300))
            .collect();
        let mut out = vec![0.0; self.constraints.len()];
        for _ in 0..self.constraints.len() + 1 {
            if active.is_empty() {
                return out;
            }
            let grads: Vec<RVec> = active.iter().map(|i| self.constraint_gradient(*i, x)).collect();
            let k = active.len();
            let mut gram = RMat::zeros(k, k);
            let mut rhs = RVec::zeros(k);
            for a in 0..k {
                for b in a..k {
                    let v = grads[a].dot(&grads[b]);
                    gram[(a, b)] = v;
                    gram[(b, a)] = v;
                }
                rhs[a] = -grads[a].dot(&g0);
            }
            let Some(lams) = solve_spd(&gram, &rhs) else {
                return barrier_lams.to_vec();
            };
            if let Some(worst) = (0..k).filter(|a| lams[*a] < 0.0).min_by(|a, b| {
                lams[*a].partial_cmp(&lams[*b]).unwrap_or(std::cmp::Ordering::Equal)
            }) {
                active.remove(worst);
                continue;
            }
            for (a, i) in active.iter().enumerate() {
                out[*i] = lams[a];
            }
            return out;
        }
        barrier_lams.to_vec()
    }

    /// Newton iterations on the active-set KKT system
    /// `[grad f0 + sum lambda grad c; c_i(x) - b_i = 0 for active i]`.
    fn kkt_polish(&self, x0: &RVec, lams: &[f64]) -> Option<(RVec, Vec<f64>)> {
        let active: Vec<usize> =
            (0..self.constraints.len()).filter(|i| lams[*i] > 0.0).collect();
        let k = active.len();
        if k == 0 {
            return None;
        }
        let n = self.n;
        let mut x = x0.clone();
        let mut lam: Vec<f64> = active.iter().map(|i| lams[*i]).collect();
        for _ in 0..4 {
            // Residual and Jacobian of the KKT map.
            let mut stat = &self.p * &x - &self.q;
            for (a, &i) in active.iter().enumerate() {
                stat += self.constraint_gradient(i, &x) * lam[a];
            }
            let cons: Vec<f64> = active
                .iter()
                .map(|&i| -self.constraint_value_minus_bound(i, &x))
                .collect();
            let mut jac = RMat::zeros(n + k, n + k);
            let mut hess = self.p.clone();
            for (a, &i) in active.iter().enumerate() {
                match &self.constraints[i] {
                    Constraint::Quad { p, .. } => add_scaled(&mut hess, p, lam[a]),
                    Constraint::DiagQuad { d, .. } => {
                        for j in 0..n {
                            hess[(j, j)] += lam[a] * d[j];
                        }
                    }
                    Constraint::Soc { f, d, .. } => {
                        let ftf = f.transpose() * f;
                        add_scaled(&mut hess, &ftf, 2.0 * lam[a]);
                        hess.ger(-2.0 * lam[a], d, d, 1.0);
                    }
                }
            }
            jac.view_mut((0, 0), (n, n)).copy_from(&hess);
            let mut rhs = RVec::zeros(n + k);
            for j in 0..n {
                rhs[j] = -stat[j];
            }
            for (a, &i) in active.iter().enumerate() {
                let g = self.constraint_gradient(i, &x);
                jac.view_mut((0, n + a), (n, 1)).copy_from(&g);
                jac.view_mut((n + a, 0), (1, n)).copy_from(&g.transpose());
                rhs[n + a] = cons[a];
            }
            let lu = jac.lu();
            let step = lu.solve(&rhs)?;
            for j in 0..n {
                x[j] += step[j];
            }
            for a in 0..k {
                lam[a] += step[n + a];
            }
        }
        if lam.iter().any(|l| *l < -1e-12) {
            return None;
        }
        let mut out = vec![0.0; self.constraints.len()];
        for (a, &i) in active.iter().enumerate() {
            out[i] = lam[a].max(0.0);
        }
        Some((x, out))
    }

    fn constraint_value_minus_bound(&self, i: usize, x: &RVec) -> f64 {
        match &self.constraints[i] {
            Constraint::Quad { p, l, b } => 0.5 * x.dot(&(p * x)) - l.dot(x) - b,
            Constraint::DiagQuad { d, l, b } => {
                0.5 * x.iter().zip(d.iter()).map(|(xi, di)| di * xi * xi).sum::<f64>()
                    - l.dot(x)
                    - b
            }
            Constraint::Soc { f, g, d, e } => {
                let u = f * x + g;
                let tv = d.dot(x) + e;
                u.norm_squared() - tv * tv
            }
        }
    }

    /// `max(|| grad f0 + sum lambda_i grad c_i ||, max_i lambda_i slack_i)` in
    /// original units.
    fn kkt_residual(&self, x: &RVec, multipliers: &[f64]) -> f64 {
        let mut stat = &self.p * x - &self.q;
        let mut comp = 0.0f64;
        for (c, lam) in self.constraints.iter().zip(multipliers) {
            match c {
                Constraint::Quad { p, l, b } => {
                    let gc = p * x - l;
                    stat += &gc * *lam;
                    comp = comp.max(lam * (b + l.dot(x) - 0.5 * x.dot(&(p * x))));
                }
                Constraint::DiagQuad { d, l, b } => {
                    let gc = RVec::from_fn(self.n, |i, _| d[i] * x[i] - l[i]);
                    stat += &gc * *lam;
                    let quad: f64 =
                        x.iter().zip(d.iter()).map(|(xi, di)| di * xi * xi).sum();
                    comp = comp.max(lam * (b + l.dot(x) - 0.5 * quad));
                }
                Constraint::Soc { f, g, d, e } => {
                    // Squared form r(x) = ||Fx+g||^2 - (d^T x + e)^2 <= 0.
                    let u = f * x + g;
                    let tv = d.dot(x) + e;
                    let gr = f.transpose() * (&u * 2.0) - d * (2.0 * tv);
                    stat += &gr * *lam;
                    comp = comp.max(lam * (tv * tv - u.norm_squared()));
                }
            }
        }
        stat.norm().max(comp)
    }
}

/// Free-function form of [`QcqpProblem::solve`].
pub fn solve_qcqp(problem: &QcqpProblem, tol: f64, max_iter: usize) -> Result<QcqpSolution> {
    problem.solve(tol, max_iter)
}

// ---- barrier core -----------------------------------------------------------

/// Equilibrated problem data the Newton machinery operates on.
struct BarrierCore {
    n: usize,
    p: RMat,
    q: RVec,
    constraints: Vec<Constraint>,
    /// Precomputed `F^T F` per SOC constraint (`None` for quadratic kinds).
    soc_ftf: Vec<Option<RMat>>,
}

impl BarrierCore {
    fn new(n: usize, p: RMat, q: RVec, constraints: Vec<Constraint>) -> Self {
        let soc_ftf = constraints
            .iter()
            .map(|c| match c {
                Constraint::Soc { f, .. } => Some(f.transpose() * f),
                _ => None,
            })
            .collect();
        BarrierCore { n, p, q, constraints, soc_ftf }
    }

    fn f0(&self, x: &RVec) -> f64 {
        0.5 * x.dot(&(&self.p * x)) - self.q.dot(x)
    }

    /// Barrier slack per constraint (SOC uses `t^2 - ||u||^2`, forced
    /// nonpositive outside the `t > 0` branch).
    fn slack(&self, c: &Constraint, x: &RVec) -> f64 {
        match c {
            Constraint::Quad { p, l, b } => b + l.dot(x) - 0.5 * x.dot(&(p * x)),
            Constraint::DiagQuad { d, l, b } => {
                let quad: f64 = x.iter().zip(d.iter()).map(|(xi, di)| di * xi * xi).sum();
                b + l.dot(x) - 0.5 * quad
            }
            Constraint::Soc { f, g, d, e } => {
                let tv = d.dot(x) + e;
                if tv <= 0.0 {
                    return -1.0;
                }
                tv * tv - (f * x + g).norm_squared()
            }
        }
    }

    fn slacks(&self, x: &RVec) -> Vec<f64> {
        self.constraints.iter().map(|c| self.slack(c, x)).collect()
    }

    fn min_slack(&self, x: &RVec) -> f64 {
        self.constraints.iter().map(|c| self.slack(c, x)).fold(f64::INFINITY, f64::min)
    }

    fn barrier_value(&self, x: &RVec) -> Option<f64> {
        let mut total = 0.0;
        for c in &self.constraints {
            let s = self.slack(c, x);
            if s <= 0.0 {
                return None;
            }
            total -= s.ln();
        }
        Some(total)
    }

    /// Gradient and Hessian of the merit `t f0 + barrier`, written into the
    /// caller's scratch buffers (this is the hot loop of every solve).
    fn newton_system(&self, x: &RVec, t: f64, ws: &mut NewtonScratch) -> bool {
        let n = self.n;
        ws.grad.gemv(t, &self.p, x, 0.0);
        ws.grad.axpy(-t, &self.q, 1.0);
        ws.hess.copy_from(&self.p);
        ws.hess *= t;
        for (idx, c) in self.constraints.iter().enumerate() {
            match c {
                Constraint::Quad { p, l, b } => {
                    // One matvec serves the slack, the gradient, and the
                    // rank-one Hessian update.
                    ws.gc.gemv(1.0, p, x, 0.0);
                    let s = b + l.dot(x) - 0.5 * ws.gc.dot(x);
                    if s <= 0.0 {
                        return false;
                    }
                    ws.gc.axpy(-1.0, l, 1.0);
                    ws.grad.axpy(1.0 / s, &ws.gc, 1.0);
                    add_scaled(&mut ws.hess, p, 1.0 / s);
                    ws.hess.ger(1.0 / (s * s), &ws.gc, &ws.gc, 1.0);
                }
                Constraint::DiagQuad { d, l, b } => {
                    let mut quad = 0.0;
                    for i in 0..n {
                        let gi = d[i] * x[i];
                        quad += gi * x[i];
                        ws.gc[i] = gi - l[i];
                    }
                    let s = b + l.dot(x) - 0.5 * quad;
                    if s <= 0.0 {
                        return false;
                    }
                    ws.grad.axpy(1.0 / s, &ws.gc, 1.0);
                    for i in 0..n {
                        ws.hess[(i, i)] += d[i] / s;
                    }
                    ws.hess.ger(1.0 / (s * s), &ws.gc, &ws.gc, 1.0);
                }
                Constraint::Soc { f, g, d, e } => {
                    let tv = d.dot(x) + e;
                    if tv <= 0.0 {
                        return false;
                    }
                    let mut u = f * x;
                    u += g;
                    let s = tv * tv - u.norm_squared();
                    if s <= 0.0 {
                        return false;
                    }
                    // gr = 2 (tv d - F^T u); barrier -ln s.
                    ws.gc.gemv_tr(-2.0, f, &u, 0.0);
                    ws.gc.axpy(2.0 * tv, d, 1.0);
                    ws.grad.axpy(-1.0 / s, &ws.gc, 1.0);
                    ws.hess.ger(1.0 / (s * s), &ws.gc, &ws.gc, 1.0);
                    let ftf = self.soc_ftf[idx].as_ref().expect("SOC aux");
                    add_scaled(&mut ws.hess, ftf, 2.0 / s);
                    ws.hess.ger(-2.0 / s, d, d, 1.0);
                }
            }
        }
        true
    }
}

struct NewtonScratch {
    grad: RVec,
    hess: RMat,
    gc: RVec,
}

impl NewtonScratch {
    fn new(n: usize) -> Self {
        NewtonScratch { grad: RVec::zeros(n), hess: RMat::zeros(n, n), gc: RVec::zeros(n) }
    }
}

fn add_scaled(target: &mut RMat, other: &RMat, alpha: f64) {
    for (t, o) in target.as_mut_slice().iter_mut().zip(other.as_slice()) {
        *t += alpha * o;
    }
}

/// Equilibrate: apply variable scales, then normalize the objective and each
/// constraint to unit magnitude. Returns the core plus the applied scales.
fn scale_problem(orig: &QcqpProblem, s: &RVec) -> (BarrierCore, f64, Vec<f64>) {
    let n = orig.n;
    let scale_mat = |m: &RMat| RMat::from_fn(n, n, |i, j| m[(i, j)] * s[i] * s[j]);
    let scale_vec = |v: &RVec| RVec::from_fn(n, |i, _| v[i] * s[i]);

    let p = scale_mat(&orig.p);
    let q = scale_vec(&orig.q);
    let raw = max_abs(&p).max(q.amax());
    let obj_scale = if raw > 1e-150 { raw } else { 1.0 };
    let mut p = p / obj_scale;
    let q = q / obj_scale;
    // Tiny ridge: flat objective directions would otherwise be pinned only
    // by the (arbitrarily weak) barrier, leaving order-one slop there. This
    // ties them off toward the minimum-norm optimum at a 1e-10 relative bias.
    for i in 0..n {
        p[(i, i)] += 1e-10;
    }

    let mut constraints = Vec::with_capacity(orig.constraints.len());
    let mut con_scales = Vec::with_capacity(orig.constraints.len());
    for c in &orig.constraints {
        match c {
            Constraint::Quad { p, l, b } => {
                let ps = scale_mat(p);
                let ls = scale_vec(l);
                let raw = max_abs(&ps).max(ls.amax()).max(b.abs());
                let sc = if raw > 1e-150 { raw } else { 1.0 };
                constraints.push(Constraint::Quad { p: ps / sc, l: ls / sc, b: b / sc });
                con_scales.push(sc);
            }
            Constraint::DiagQuad { d, l, b } => {
                let ds = RVec::from_fn(n, |i, _| d[i] * s[i] * s[i]);
                let ls = scale_vec(l);
                let raw = ds.amax().max(ls.amax()).max(b.abs());
                let sc = if raw > 1e-150 { raw } else { 1.0 };
                constraints.push(Constraint::DiagQuad { d: ds / sc, l: ls / sc, b: b / sc });
                con_scales.push(sc);
            }
            Constraint::Soc { f, g, d, e } => {
                let fs = RMat::from_fn(f.nrows(), n, |i, j| f[(i, j)] * s[j]);
                let ds = scale_vec(d);
                let raw = max_abs(&fs).max(g.amax()).max(ds.amax()).max(e.abs());
                let sc = if raw > 1e-150 { raw } else { 1.0 };
                constraints.push(Constraint::Soc { f: fs / sc, g: g / sc, d: ds / sc, e: e / sc });
                con_scales.push(sc);
            }
        }
    }
    (BarrierCore::new(n, p, q, constraints), obj_scale, con_scales)
}

struct PathOutcome {
    x: RVec,
    t: f64,
    converged: bool,
}

/// Follow the central path from a strictly feasible `x0` until `t` reaches
/// `t_target` (complementarity `1/t` per constraint). `stop_below` aborts as
/// soon as `f0` drops under the threshold (used by phase-I).
fn barrier_path(
    core: &BarrierCore,
    mut x: RVec,
    t_target: f64,
    max_newton: usize,
    newton_used: &mut usize,
    stop_below: Option<f64>,
) -> PathOutcome {
    debug_assert!(core.min_slack(&x) > 0.0, "barrier start must be strictly feasible");
    let mut t = 1.0f64;
    let mut converged = true;
    let mut ws = NewtonScratch::new(core.n);
    loop {
        let final_stage = t >= t_target;
        let inner_cap = if final_stage { 80 } else { 40 };
        let mut stalled = false;
        for _ in 0..inner_cap {
            if *newton_used >= max_newton {
                return PathOutcome { x, t, converged: false };
            }
            if let Some(thresh) = stop_below {
                if core.f0(&x) < thresh {
                    return PathOutcome { x, t, converged: true };
                }
            }
            if !core.newton_system(&x, t, &mut ws) {
                return PathOutcome { x, t, converged: false };
            }
            let Some(step) = solve_spd(&ws.hess, &(-&ws.grad)) else {
                return PathOutcome { x, t, converged: false };
            };
            *newton_used += 1;
            let decrement = -ws.grad.dot(&step);
            if decrement <= 2.0 * newton_eps(t, final_stage) {
                break;
            }
            let merit = t * core.f0(&x) + core.barrier_value(&x).unwrap_or(f64::INFINITY);
            let mut alpha = 1.0f64;
            let mut accepted = false;
            for _ in 0..60 {
                let cand = &x + &step * alpha;
                if let Some(bv) = core.barrier_value(&cand) {
                    let cand_merit = t * core.f0(&cand) + bv;
                    if cand_merit <= merit - 1e-4 * alpha * decrement {
                        // The merit function must decrease at every accepted step.
                        debug_assert!(cand_merit <= merit + 1e-9 * merit.abs().max(1.0));
                        x = cand;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                stalled = true;
                break;
            }
        }
        if final_stage {
            converged = converged && !stalled;
            break;
        }
        t = (t * 10.0).min(t_target);
        let _ = stalled;
    }
    PathOutcome { x, t, converged }
}

fn newton_eps(t: f64, final_stage: bool) -> f64 {
    if final_stage {
        1e-16 * t.max(1.0)
    } else {
        1e-12 * t.max(1.0)
    }
}

enum PhaseOne {
    Feasible(RVec),
    /// Scaled-space minimum of the worst violation (nonnegative).
    Infeasible(f64),
}

/// Minimize the maximum constraint violation with the same barrier machinery
/// over `(x, tau)`; exits as soon as a comfortably interior point appears.
fn phase_one(
    core: &BarrierCore,
    seed: &RVec,
    max_newton: usize,
    newton_used: &mut usize,
) -> PhaseOne {
    let n = core.n;
    let n_aug = n + 1;
    let grow = |v: &RVec, last: f64| {
        let mut out = RVec::zeros(n_aug);
        out.rows_mut(0, n).copy_from(v);
        out[n] = last;
        out
    };

    let mut constraints = Vec::with_capacity(core.constraints.len());
    for c in &core.constraints {
        match c {
            Constraint::Quad { p, l, b } => {
                let mut pa = RMat::zeros(n_aug, n_aug);
                pa.view_mut((0, 0), (n, n)).copy_from(p);
                constraints.push(Constraint::Quad { p: pa, l: grow(l, 1.0), b: *b });
            }
            Constraint::DiagQuad { d, l, b } => {
                constraints.push(Constraint::DiagQuad { d: grow(d, 0.0), l: grow(l, 1.0), b: *b });
            }
            Constraint::Soc { f, g, d, e } => {
                let mut fa = RMat::zeros(f.nrows(), n_aug);
                fa.view_mut((0, 0), (f.nrows(), n)).copy_from(f);
                constraints.push(Constraint::Soc { f: fa, g: g.clone(), d: grow(d, 1.0), e: *e });
            }
        }
    }
    // Keep the search compact: phase-I can otherwise diverge along recession
    // directions of a conic feasible set instead of driving tau down. The
    // trust ball is generous relative to the equilibrated variable scales.
    let radius = 1e5 * (n as f64).sqrt().max(1.0);
    constraints.push(Constraint::DiagQuad {
        d: grow(&RVec::from_element(n, 1.0), 0.0),
        l: grow(seed, 0.0),
        b: 0.5 * radius * radius,
    });
    let mut tau_floor_l = RVec::zeros(n_aug);
    tau_floor_l[n] = 1.0;
    constraints.push(Constraint::DiagQuad { d: RVec::zeros(n_aug), l: tau_floor_l, b: 1e3 });

    // Objective: minimize tau.
    let mut q = RVec::zeros(n_aug);
    q[n] = -1.0;
    let aug = BarrierCore::new(n_aug, RMat::zeros(n_aug, n_aug), q, constraints);

    // tau0 strictly above every violation at the seed.
    let mut tau0 = 1.0f64;
    for c in &core.constraints {
        let viol = match c {
            Constraint::Quad { p, l, b } => 0.5 * seed.dot(&(p * seed)) - l.dot(seed) - b,
            Constraint::DiagQuad { d, l, b } => {
                0.5 * seed.iter().zip(d.iter()).map(|(xi, di)| di * xi * xi).sum::<f64>()
                    - l.dot(seed)
                    - b
            }
            Constraint::Soc { f, g, d, e } => (f * seed + g).norm() - d.dot(seed) - e,
        };
        tau0 = tau0.max(viol + 1.0);
    }
    let x0 = grow(seed, tau0);
    debug_assert!(aug.min_slack(&x0) > 0.0);

    let outcome = barrier_path(&aug, x0, 1e12, max_newton, newton_used, Some(-1e-3));
    let tau = outcome.x[n];
    let x = outcome.x.rows(0, n).into_owned();
    if tau < -1e-12 && core.min_slack(&x) > 0.0 {
        PhaseOne::Feasible(x)
    } else {
        PhaseOne::Infeasible(tau.max(0.0))
    }
}

/// Cholesky solve with escalating ridge regularization.
fn solve_spd(h: &RMat, rhs: &RVec) -> Option<RVec> {
    let scale = max_abs(h).max(1e-300);
    let mut ridge = 0.0f64;
    for _ in 0..10 {
        let sys = if ridge > 0.0 {
            let mut m = h.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += ridge;
            }
            m
        } else {
            h.clone()
        };
        if let Some(ch) = Cholesky::new(sys) {
            return Some(ch.solve(rhs));
        }
        ridge = if ridge == 0.0 { scale * 1e-14 } else { ridge * 100.0 };
    }
    None
}
