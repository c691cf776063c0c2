//! Transcription of the minimum-time tracking problem.
//!
//! Decision vector `xi = [t_F, x_0..x_N, u_0..u_N]` with `x_k = [q; qdot]`
//! and `u_k` the actuated accelerations. The N trapezoidal defects couple
//! adjacent states through the dynamics with sampling time `h = t_F / N`;
//! boundary states are pinned through equal lower/upper bounds, so box
//! projection keeps them bit-exact.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::chain::{ChainSpec, ControlInput, SystemState};
use crate::dynamics::{bias_vector, forward_dynamics, mass_matrix};
use crate::error::{Error, Result};
use crate::path::BSplinePath;

/// Solver and transcription parameters.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NlpConfig {
    /// Grid interval count N; the grid has N+1 points.
    pub n_grid: usize,
    /// Control effort weight.
    pub omega_s: f64,
    /// Reference tracking weight.
    pub omega_t: f64,
    /// Control weighting matrix scale: R = r_weight * I.
    pub r_weight: f64,
    /// Symmetric acceleration bound, one per actuated joint; a single entry
    /// broadcasts to all of them.
    pub u_max: Vec<f64>,
    /// Initial guess for the final time, seconds.
    pub t_f_init: f64,
    pub t_f_min: f64,
    pub t_f_max: f64,
    /// Defect infinity-norm tolerance.
    pub tol_defect: f64,
    /// Projected-gradient stationarity tolerance.
    pub tol_stationarity: f64,
    /// Central-difference step for the dynamics derivative blocks.
    pub fd_step: f64,
    pub rho_init: f64,
    pub rho_max: f64,
    pub max_outer: usize,
    /// Inner quasi-Newton iteration cap per outer iteration.
    pub max_inner: usize,
    pub lbfgs_memory: usize,
}

impl Default for NlpConfig {
    fn default() -> Self {
        NlpConfig {
            n_grid: 100,
            omega_s: 1e-3,
            omega_t: 10.0,
            r_weight: 0.01,
            u_max: vec![1.0],
            t_f_init: 10.0,
            t_f_min: 0.1,
            t_f_max: 120.0,
            tol_defect: 1e-6,
            tol_stationarity: 1e-4,
            fd_step: 1e-6,
            rho_init: 10.0,
            rho_max: 1e8,
            max_outer: 40,
            max_inner: 300,
            lbfgs_memory: 10,
        }
    }
}

impl NlpConfig {
    pub fn u_bounds(&self, n_a: usize) -> Result<DVector<f64>> {
        if self.u_max.len() == 1 {
            return Ok(DVector::from_element(n_a, self.u_max[0]));
        }
        if self.u_max.len() != n_a {
            return Err(Error::Config(format!(
                "u_max has {} entries, chain has {} actuated joints",
                self.u_max.len(),
                n_a
            )));
        }
        Ok(DVector::from_vec(self.u_max.clone()))
    }
}

/// Actuated reference positions `q*_a` sampled from the path at `s = k/N`.
pub fn resample_reference(
    path: &BSplinePath,
    spec: &ChainSpec,
    n_grid: usize,
) -> Result<Vec<DVector<f64>>> {
    let actuated = spec.actuated_indices();
    let mut rows = Vec::with_capacity(n_grid + 1);
    for k in 0..=n_grid {
        let q = path.eval(k as f64 / n_grid as f64)?;
        rows.push(DVector::from_iterator(
            actuated.len(),
            actuated.iter().map(|&i| q[i]),
        ));
    }
    Ok(rows)
}

/// The assembled problem.
#[derive(Debug, Clone)]
pub struct TrajectoryNlp {
    pub spec: ChainSpec,
    pub n_grid: usize,
    pub n_d: usize,
    pub n_a: usize,
    /// Tracking reference, N+1 rows of actuated positions.
    pub reference: Vec<DVector<f64>>,
    pub x_start: DVector<f64>,
    pub x_target: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub initial_guess: DVector<f64>,
    pub omega_s: f64,
    pub omega_t: f64,
    pub r_weight: f64,
    fd_step: f64,
    actuated: Vec<usize>,
}

/// Derivative blocks of the dynamics at one grid point.
pub(crate) struct DynBlocks {
    pub f: DVector<f64>,
    /// d f / d x, (2 n_d) x (2 n_d).
    pub a: DMatrix<f64>,
    /// d f / d u, (2 n_d) x n_a.
    pub b: DMatrix<f64>,
}

impl TrajectoryNlp {
    pub fn dim(&self) -> usize {
        1 + (self.n_grid + 1) * (2 * self.n_d + self.n_a)
    }

    pub fn num_constraints(&self) -> usize {
        self.n_grid * 2 * self.n_d
    }

    pub fn idx_tf(&self) -> usize {
        0
    }

    pub fn idx_x(&self, k: usize) -> usize {
        1 + k * 2 * self.n_d
    }

    pub fn idx_u(&self, k: usize) -> usize {
        1 + (self.n_grid + 1) * 2 * self.n_d + k * self.n_a
    }

    pub fn state_at(&self, xi: &DVector<f64>, k: usize) -> DVector<f64> {
        xi.rows(self.idx_x(k), 2 * self.n_d).into_owned()
    }

    pub fn control_at(&self, xi: &DVector<f64>, k: usize) -> DVector<f64> {
        xi.rows(self.idx_u(k), self.n_a).into_owned()
    }

    /// Clamps every variable into its box.
    pub fn project(&self, xi: &mut DVector<f64>) {
        for i in 0..xi.len() {
            xi[i] = xi[i].clamp(self.lower[i], self.upper[i]);
        }
    }

    pub fn max_bound_violation(&self, xi: &DVector<f64>) -> f64 {
        let mut v: f64 = 0.0;
        for i in 0..xi.len() {
            v = v.max(self.lower[i] - xi[i]).max(xi[i] - self.upper[i]);
        }
        v.max(0.0)
    }

    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> Result<DVector<f64>> {
        let state = SystemState::from_vector(x)?;
        forward_dynamics(&self.spec, &state, &ControlInput::new(u.clone())).map_err(|e| match e {
            Error::SingularConfiguration(msg) => {
                Error::SingularConfiguration(format!("{msg} (grid index {k})"))
            }
            other => other,
        })
    }

    /// Passive accelerations without the public-contract checks; used by the
    /// finite-difference probes.
    fn passive_accel(&self, q: &DVector<f64>, qdot: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        let passive = &self.spec.partition.passive;
        let m = mass_matrix(&self.spec, q)?;
        let b = bias_vector(&self.spec, q, qdot)?;
        let mut rhs = DVector::zeros(passive.len());
        for (r, &pi) in passive.iter().enumerate() {
            rhs[r] = b[pi];
            for (c, &ai) in self.actuated.iter().enumerate() {
                rhs[r] += m[(pi, ai)] * u[c];
            }
        }
        let m_p = DMatrix::from_fn(passive.len(), passive.len(), |r, c| {
            m[(passive[r], passive[c])]
        });
        m_p.cholesky()
            .map(|chol| chol.solve(&(-rhs)))
            .ok_or_else(|| {
                Error::SingularConfiguration("passive block not positive definite".to_string())
            })
    }

    /// Dynamics value and derivative blocks at one grid point. The sparse
    /// structure is analytic; the passive acceleration rows are filled with
    /// central differences at `fd_step`, and the control block with the
    /// exact `-M_p^{-1} M_{p,a}` solve.
    pub(crate) fn dynamics_blocks(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        k: usize,
    ) -> Result<DynBlocks> {
        let n_d = self.n_d;
        let n_a = self.n_a;
        let f = self.dynamics(x, u, k)?;

        let mut a = DMatrix::zeros(2 * n_d, 2 * n_d);
        for i in 0..n_d {
            a[(i, n_d + i)] = 1.0;
        }
        let mut b = DMatrix::zeros(2 * n_d, n_a);
        for (c, &ai) in self.actuated.iter().enumerate() {
            b[(n_d + ai, c)] = 1.0;
        }

        let passive = self.spec.partition.passive.clone();
        if passive.is_empty() {
            return Ok(DynBlocks { f, a, b });
        }

        let q = x.rows(0, n_d).into_owned();
        let qdot = x.rows(n_d, n_d).into_owned();
        let h = self.fd_step;

        // Passive acceleration rows vs q: the mass matrix and bias both move.
        for j in 0..n_d {
            let mut q_plus = q.clone();
            let mut q_minus = q.clone();
            q_plus[j] += h;
            q_minus[j] -= h;
            let p_plus = self.passive_accel(&q_plus, &qdot, u)?;
            let p_minus = self.passive_accel(&q_minus, &qdot, u)?;
            for (r, &pi) in passive.iter().enumerate() {
                a[(n_d + pi, j)] = (p_plus[r] - p_minus[r]) / (2.0 * h);
            }
        }

        // Vs qdot only the bias moves, so the factorization is shared.
        let m = mass_matrix(&self.spec, &q)?;
        let m_p = DMatrix::from_fn(passive.len(), passive.len(), |r, c| {
            m[(passive[r], passive[c])]
        });
        let chol = m_p.cholesky().ok_or_else(|| {
            Error::SingularConfiguration(format!(
                "passive block not positive definite (grid index {k})"
            ))
        })?;
        for j in 0..n_d {
            let mut qd_plus = qdot.clone();
            let mut qd_minus = qdot.clone();
            qd_plus[j] += h;
            qd_minus[j] -= h;
            let b_plus = bias_vector(&self.spec, &q, &qd_plus)?;
            let b_minus = bias_vector(&self.spec, &q, &qd_minus)?;
            let db = DVector::from_iterator(
                passive.len(),
                passive
                    .iter()
                    .map(|&pi| (b_plus[pi] - b_minus[pi]) / (2.0 * h)),
            );
            let dp = chol.solve(&(-db));
            for (r, &pi) in passive.iter().enumerate() {
                a[(n_d + pi, n_d + j)] = dp[r];
            }
        }

        // Control block of the passive rows: -M_p^{-1} M_{p,a}.
        let m_pa = DMatrix::from_fn(passive.len(), n_a, |r, c| {
            m[(passive[r], self.actuated[c])]
        });
        let dpu = -chol.solve(&m_pa);
        for (r, &pi) in passive.iter().enumerate() {
            for c in 0..n_a {
                b[(n_d + pi, c)] = dpu[(r, c)];
            }
        }
        Ok(DynBlocks { f, a, b })
    }

    /// Dynamics at every grid point, evaluated concurrently.
    fn dynamics_all(&self, xi: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        (0..=self.n_grid)
            .into_par_iter()
            .map(|k| self.dynamics(&self.state_at(xi, k), &self.control_at(xi, k), k))
            .collect()
    }

    pub(crate) fn blocks_all(&self, xi: &DVector<f64>) -> Result<Vec<DynBlocks>> {
        (0..=self.n_grid)
            .into_par_iter()
            .map(|k| self.dynamics_blocks(&self.state_at(xi, k), &self.control_at(xi, k), k))
            .collect()
    }

    /// Stacked trapezoidal defects.
    pub fn constraints(&self, xi: &DVector<f64>) -> Result<DVector<f64>> {
        let f = self.dynamics_all(xi)?;
        Ok(self.constraints_from_dynamics(xi, &f))
    }

    fn constraints_from_dynamics(&self, xi: &DVector<f64>, f: &[DVector<f64>]) -> DVector<f64> {
        let h = xi[self.idx_tf()] / self.n_grid as f64;
        let nx = 2 * self.n_d;
        let mut c = DVector::zeros(self.num_constraints());
        for k in 0..self.n_grid {
            let x_k = xi.rows(self.idx_x(k), nx);
            let x_next = xi.rows(self.idx_x(k + 1), nx);
            let defect = &x_next - &x_k - (h / 2.0) * (&f[k] + &f[k + 1]);
            c.rows_mut(k * nx, nx).copy_from(&defect);
        }
        c
    }

    /// Objective per the transcription: `t_F` plus control effort and
    /// reference tracking sums over `k = 1..=N`.
    pub fn objective(&self, xi: &DVector<f64>) -> f64 {
        let mut j = xi[self.idx_tf()];
        for k in 1..=self.n_grid {
            let u = xi.rows(self.idx_u(k), self.n_a);
            j += self.omega_s * self.r_weight * u.norm_squared();
            let x = xi.rows(self.idx_x(k), 2 * self.n_d);
            let mut track = 0.0;
            for (c, &ai) in self.actuated.iter().enumerate() {
                let e = x[ai] - self.reference[k][c];
                track += e * e;
            }
            j += self.omega_t * track;
        }
        j
    }

    pub fn objective_gradient(&self, xi: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim());
        g[self.idx_tf()] = 1.0;
        for k in 1..=self.n_grid {
            let iu = self.idx_u(k);
            for c in 0..self.n_a {
                g[iu + c] = 2.0 * self.omega_s * self.r_weight * xi[iu + c];
            }
            let ix = self.idx_x(k);
            for (c, &ai) in self.actuated.iter().enumerate() {
                g[ix + ai] = 2.0 * self.omega_t * (xi[ix + ai] - self.reference[k][c]);
            }
        }
        g
    }

    /// Augmented-Lagrangian value `J + lambda^T c + (rho/2) |c|^2`.
    pub fn al_value(&self, xi: &DVector<f64>, lambda: &DVector<f64>, rho: f64) -> Result<f64> {
        let f = self.dynamics_all(xi)?;
        let c = self.constraints_from_dynamics(xi, &f);
        Ok(self.objective(xi) + lambda.dot(&c) + 0.5 * rho * c.norm_squared())
    }

    /// Gradient of the augmented Lagrangian, plus the constraint values it
    /// was evaluated with.
    pub fn al_gradient(
        &self,
        xi: &DVector<f64>,
        lambda: &DVector<f64>,
        rho: f64,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let blocks = self.blocks_all(xi)?;
        let f: Vec<DVector<f64>> = blocks.iter().map(|b| b.f.clone()).collect();
        let c = self.constraints_from_dynamics(xi, &f);
        let y = lambda + rho * &c;
        let g = self.lagrangian_gradient_from_blocks(xi, &blocks, &y);
        Ok((g, c))
    }

    /// `J_c v` from cached blocks; `h` must match the `t_F` the blocks were
    /// built at.
    pub(crate) fn jac_vec(
        &self,
        blocks: &[DynBlocks],
        h: f64,
        v: &DVector<f64>,
    ) -> DVector<f64> {
        let nx = 2 * self.n_d;
        let n = self.n_grid;
        let mut out = DVector::zeros(self.num_constraints());
        let v_tf = v[self.idx_tf()];
        for k in 0..n {
            let v_xk = v.rows(self.idx_x(k), nx).into_owned();
            let v_xn = v.rows(self.idx_x(k + 1), nx).into_owned();
            let v_uk = v.rows(self.idx_u(k), self.n_a).into_owned();
            let v_un = v.rows(self.idx_u(k + 1), self.n_a).into_owned();
            let mut row = &v_xn - &v_xk;
            row -= (h / 2.0) * (&blocks[k].a * &v_xk + &blocks[k + 1].a * &v_xn);
            row -= (h / 2.0) * (&blocks[k].b * &v_uk + &blocks[k + 1].b * &v_un);
            row -= (v_tf / (2.0 * n as f64)) * (&blocks[k].f + &blocks[k + 1].f);
            out.rows_mut(k * nx, nx).copy_from(&row);
        }
        out
    }

    /// `J_c^T w` from cached blocks.
    pub(crate) fn jac_transpose_vec(
        &self,
        blocks: &[DynBlocks],
        h: f64,
        w: &DVector<f64>,
    ) -> DVector<f64> {
        let nx = 2 * self.n_d;
        let n = self.n_grid;
        let mut g = DVector::zeros(self.dim());
        for k in 0..n {
            let w_k = w.rows(k * nx, nx).into_owned();

            let fsum = &blocks[k].f + &blocks[k + 1].f;
            g[self.idx_tf()] -= fsum.dot(&w_k) / (2.0 * n as f64);

            let at_w_k = blocks[k].a.transpose() * &w_k;
            let at_w_next = blocks[k + 1].a.transpose() * &w_k;
            {
                let mut gx = g.rows_mut(self.idx_x(k), nx);
                gx -= &w_k;
                gx -= (h / 2.0) * &at_w_k;
            }
            {
                let mut gx = g.rows_mut(self.idx_x(k + 1), nx);
                gx += &w_k;
                gx -= (h / 2.0) * &at_w_next;
            }

            let bt_w_k = blocks[k].b.transpose() * &w_k;
            let bt_w_next = blocks[k + 1].b.transpose() * &w_k;
            {
                let mut gu = g.rows_mut(self.idx_u(k), self.n_a);
                gu -= (h / 2.0) * &bt_w_k;
            }
            {
                let mut gu = g.rows_mut(self.idx_u(k + 1), self.n_a);
                gu -= (h / 2.0) * &bt_w_next;
            }
        }
        g
    }

    /// Diagonal objective Hessian times `v` (the objective is separable).
    pub(crate) fn objective_hessian_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for k in 1..=self.n_grid {
            let iu = self.idx_u(k);
            for c in 0..self.n_a {
                out[iu + c] = 2.0 * self.omega_s * self.r_weight * v[iu + c];
            }
            let ix = self.idx_x(k);
            for &ai in &self.actuated {
                out[ix + ai] = 2.0 * self.omega_t * v[ix + ai];
            }
        }
        out
    }

    /// `grad J + J_c^T y` assembled from per-grid-point blocks.
    fn lagrangian_gradient_from_blocks(
        &self,
        xi: &DVector<f64>,
        blocks: &[DynBlocks],
        y: &DVector<f64>,
    ) -> DVector<f64> {
        let h = xi[self.idx_tf()] / self.n_grid as f64;
        self.objective_gradient(xi) + self.jac_transpose_vec(blocks, h, y)
    }

    /// Gradient of the plain Lagrangian at multipliers `y`.
    pub fn lagrangian_gradient(&self, xi: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        let blocks = self.blocks_all(xi)?;
        Ok(self.lagrangian_gradient_from_blocks(xi, &blocks, y))
    }

    /// Dense constraint Jacobian; test and diagnostics use only.
    pub fn constraint_jacobian_dense(&self, xi: &DVector<f64>) -> Result<DMatrix<f64>> {
        let blocks = self.blocks_all(xi)?;
        let nx = 2 * self.n_d;
        let n = self.n_grid;
        let h = xi[self.idx_tf()] / n as f64;
        let mut jac = DMatrix::zeros(self.num_constraints(), self.dim());
        for k in 0..n {
            let row0 = k * nx;
            let fsum = &blocks[k].f + &blocks[k + 1].f;
            for r in 0..nx {
                jac[(row0 + r, self.idx_tf())] = -fsum[r] / (2.0 * n as f64);
            }
            for r in 0..nx {
                jac[(row0 + r, self.idx_x(k) + r)] -= 1.0;
                jac[(row0 + r, self.idx_x(k + 1) + r)] += 1.0;
                for cc in 0..nx {
                    jac[(row0 + r, self.idx_x(k) + cc)] -= (h / 2.0) * blocks[k].a[(r, cc)];
                    jac[(row0 + r, self.idx_x(k + 1) + cc)] -=
                        (h / 2.0) * blocks[k + 1].a[(r, cc)];
                }
                for cc in 0..self.n_a {
                    jac[(row0 + r, self.idx_u(k) + cc)] -= (h / 2.0) * blocks[k].b[(r, cc)];
                    jac[(row0 + r, self.idx_u(k + 1) + cc)] -=
                        (h / 2.0) * blocks[k + 1].b[(r, cc)];
                }
            }
        }
        Ok(jac)
    }
}

/// Assembles the NLP from a reference path: boundary states at rest on the
/// path endpoints, box bounds from the chain limits and the config, and an
/// initial guess that rides the spline at `t_f_init`.
pub fn build_nlp(
    path: &BSplinePath,
    spec: &ChainSpec,
    config: &NlpConfig,
) -> Result<TrajectoryNlp> {
    let n_d = spec.dof();
    let n_a = spec.num_actuated();
    if path.dim() != n_d {
        return Err(Error::contract(format!(
            "path dimension {} does not match chain dof {}",
            path.dim(),
            n_d
        )));
    }
    if config.n_grid < 2 {
        return Err(Error::contract("n_grid must be at least 2".to_string()));
    }
    let n = config.n_grid;
    let q0 = path.eval(0.0)?;
    let qd = path.eval(1.0)?;
    if !spec.within_limits(&q0) || !spec.within_limits(&qd) {
        return Err(Error::contract(
            "boundary configurations violate the joint limits".to_string(),
        ));
    }

    let mut x_start = DVector::zeros(2 * n_d);
    x_start.rows_mut(0, n_d).copy_from(&q0);
    let mut x_target = DVector::zeros(2 * n_d);
    x_target.rows_mut(0, n_d).copy_from(&qd);

    let reference = resample_reference(path, spec, n)?;
    let u_max = config.u_bounds(n_a)?;
    let lo_q = spec.lower_limits();
    let hi_q = spec.upper_limits();
    let v_lim = spec.velocity_limits();

    let nlp_dim = 1 + (n + 1) * (2 * n_d + n_a);
    let mut lower = DVector::zeros(nlp_dim);
    let mut upper = DVector::zeros(nlp_dim);
    lower[0] = config.t_f_min;
    upper[0] = config.t_f_max;

    let mut nlp = TrajectoryNlp {
        spec: spec.clone(),
        n_grid: n,
        n_d,
        n_a,
        reference,
        x_start: x_start.clone(),
        x_target: x_target.clone(),
        lower: DVector::zeros(nlp_dim),
        upper: DVector::zeros(nlp_dim),
        initial_guess: DVector::zeros(nlp_dim),
        omega_s: config.omega_s,
        omega_t: config.omega_t,
        r_weight: config.r_weight,
        fd_step: config.fd_step,
        actuated: spec.actuated_indices(),
    };

    for k in 0..=n {
        let ix = nlp.idx_x(k);
        for i in 0..n_d {
            lower[ix + i] = lo_q[i];
            upper[ix + i] = hi_q[i];
            lower[ix + n_d + i] = -v_lim[i];
            upper[ix + n_d + i] = v_lim[i];
        }
        let iu = nlp.idx_u(k);
        for i in 0..n_a {
            lower[iu + i] = -u_max[i];
            upper[iu + i] = u_max[i];
        }
    }
    // Pin the boundary states.
    for (k, x) in [(0usize, &x_start), (n, &x_target)] {
        let ix = nlp.idx_x(k);
        for i in 0..2 * n_d {
            lower[ix + i] = x[i];
            upper[ix + i] = x[i];
        }
    }

    // Initial guess: positions on the spline, velocities by the chain rule
    // at t_f_init, controls from second differences of the actuated rows.
    let t0 = config.t_f_init.clamp(config.t_f_min, config.t_f_max);
    let mut guess = DVector::zeros(nlp_dim);
    guess[0] = t0;
    let mut qs = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let s = k as f64 / n as f64;
        let q = path.eval(s)?;
        let dq = path.eval_derivative(s)?;
        let ix = nlp.idx_x(k);
        for i in 0..n_d {
            guess[ix + i] = q[i].clamp(lo_q[i], hi_q[i]);
            guess[ix + n_d + i] = (dq[i] / t0).clamp(-v_lim[i], v_lim[i]);
        }
        qs.push(q);
    }
    let h0 = t0 / n as f64;
    let actuated = spec.actuated_indices();
    for k in 0..=n {
        let iu = nlp.idx_u(k);
        // Second differences; the end rows copy their neighbors.
        let kc = k.clamp(1, n - 1);
        for (c, &ai) in actuated.iter().enumerate() {
            let acc = (qs[kc + 1][ai] - 2.0 * qs[kc][ai] + qs[kc - 1][ai]) / (h0 * h0);
            guess[iu + c] = acc.clamp(-u_max[c], u_max[c]);
        }
    }
    // Boundary rows exactly on the pinned values.
    for (k, x) in [(0usize, &x_start), (n, &x_target)] {
        let ix = nlp.idx_x(k);
        for i in 0..2 * n_d {
            guess[ix + i] = x[i];
        }
    }

    nlp.lower = lower;
    nlp.upper = upper;
    nlp.initial_guess = guess;
    Ok(nlp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{DhRow, JointKind, JointSpec, Partition};
    use crate::path::{initial_control_points, BSplinePath};

    pub(crate) fn integrator_chain() -> ChainSpec {
        ChainSpec::new(
            vec![JointSpec {
                kind: JointKind::Prismatic,
                dh: DhRow {
                    a: 0.0,
                    alpha: 0.0,
                    d: 0.0,
                    theta_offset: 0.0,
                },
                limits: (-5.0, 5.0),
                velocity_limit: 5.0,
                mass: 1.0,
                com: [0.0, 0.0, 0.0],
                inertia: [[0.01, 0.0, 0.0], [0.0, 0.01, 0.0], [0.0, 0.0, 0.01]],
            }],
            [0.0, 0.0, 0.0],
            Partition {
                boom: vec![0],
                passive: vec![],
                gripper: vec![],
            },
        )
        .unwrap()
    }

    fn line_path(from: f64, to: f64) -> BSplinePath {
        let q0 = DVector::from_vec(vec![from]);
        let q1 = DVector::from_vec(vec![to]);
        BSplinePath::new(initial_control_points(&q0, &q1, 12).unwrap()).unwrap()
    }

    #[test]
    fn dimension_formula() {
        let spec = integrator_chain();
        let config = NlpConfig {
            n_grid: 100,
            ..NlpConfig::default()
        };
        let nlp = build_nlp(&line_path(0.0, 1.0), &spec, &config).unwrap();
        // 1 + 101 * (2 + 1)
        assert_eq!(nlp.dim(), 304);
        assert_eq!(nlp.num_constraints(), 200);
    }

    #[test]
    fn boundary_rows_are_pinned_bitwise() {
        let spec = integrator_chain();
        let config = NlpConfig {
            n_grid: 10,
            ..NlpConfig::default()
        };
        let nlp = build_nlp(&line_path(0.0, 1.0), &spec, &config).unwrap();
        let g = &nlp.initial_guess;
        assert_eq!(nlp.state_at(g, 0), nlp.x_start);
        assert_eq!(nlp.state_at(g, 10), nlp.x_target);
        let ix = nlp.idx_x(0);
        assert_eq!(nlp.lower[ix], nlp.upper[ix]);
    }

    #[test]
    fn defects_vanish_on_an_exact_linear_solution() {
        // Constant acceleration from rest: x(t) = [0.5 u t^2, u t] solves the
        // double integrator exactly and the trapezoidal rule is exact for it.
        let spec = integrator_chain();
        let config = NlpConfig {
            n_grid: 10,
            ..NlpConfig::default()
        };
        let nlp = build_nlp(&line_path(0.0, 0.5), &spec, &config).unwrap();
        let mut xi = nlp.initial_guess.clone();
        let tf = 1.0;
        let u = 1.0;
        xi[0] = tf;
        for k in 0..=10 {
            let t = tf * k as f64 / 10.0;
            let ix = nlp.idx_x(k);
            xi[ix] = 0.5 * u * t * t;
            xi[ix + 1] = u * t;
            xi[nlp.idx_u(k)] = u;
        }
        let c = nlp.constraints(&xi).unwrap();
        assert!(c.amax() < 1e-12, "defects {}", c.amax());
    }

    #[test]
    fn objective_counts_effort_and_tracking() {
        let spec = integrator_chain();
        let config = NlpConfig {
            n_grid: 4,
            omega_s: 2.0,
            omega_t: 3.0,
            r_weight: 1.0,
            ..NlpConfig::default()
        };
        let nlp = build_nlp(&line_path(0.0, 0.0), &spec, &config).unwrap();
        let mut xi = DVector::zeros(nlp.dim());
        xi[0] = 5.0;
        for k in 1..=4 {
            xi[nlp.idx_u(k)] = 1.0;
            xi[nlp.idx_x(k)] = 0.5; // reference is 0
        }
        // 5 + 2*1*4 + 3*0.25*4
        assert!((nlp.objective(&xi) - 16.0).abs() < 1e-12);
    }
}
