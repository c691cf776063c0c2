//! Collision-free inverse kinematics by nonlinear least squares.
//!
//! The residual stacks four terms: end-effector position error, a scaled
//! SO(3) log of the orientation error, a hinge on scene penetration, and the
//! squared gravity torque on the passive joints (so solutions leave the
//! unactuated joints in equilibrium). Levenberg-Marquardt with a
//! forward-difference Jacobian and box clamping drives it to zero.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chain::{ChainSpec, Pose};
use crate::collision::CollisionScene;
use crate::dynamics::passive_gravity;
use crate::error::{Error, Result};

/// Orthonormality tolerance accepted by [`so3_log`].
const SO3_INPUT_TOL: f64 = 1e-6;

/// Axis-angle vector of a rotation matrix, with angle in `[0, pi]`.
pub fn so3_log(r: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let defect = (r.transpose() * r - Matrix3::identity()).norm();
    if defect > SO3_INPUT_TOL || (r.determinant() - 1.0).abs() > SO3_INPUT_TOL {
        return Err(Error::InvalidRotation(format!(
            "so3_log input deviates from SO(3) by {defect:.2e}"
        )));
    }
    let cos_theta = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let theta = cos_theta.acos();
    let axial = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );

    if theta < 1e-8 {
        // log(R) ~ 0.5 (R - R^T)^vee plus a second-order correction.
        return Ok(0.5 * (1.0 + theta * theta / 6.0) * axial);
    }
    if theta > std::f64::consts::PI - 1e-5 {
        // The antisymmetric part cancels near pi; recover the axis from the
        // symmetric part, R + R^T = 2 cos(theta) I + 2 (1 - cos) n n^T.
        let sym = (r + r.transpose()) * 0.5;
        let one_minus = 1.0 - cos_theta;
        let nn_diag = Vector3::new(
            ((sym[(0, 0)] - cos_theta) / one_minus).max(0.0),
            ((sym[(1, 1)] - cos_theta) / one_minus).max(0.0),
            ((sym[(2, 2)] - cos_theta) / one_minus).max(0.0),
        );
        let k = nn_diag.imax();
        let mut axis = Vector3::zeros();
        axis[k] = nn_diag[k].sqrt();
        for j in 0..3 {
            if j != k {
                axis[j] = sym[(k, j)] / (one_minus * axis[k]);
            }
        }
        axis.normalize_mut();
        if axial.dot(&axis) < 0.0 {
            axis = -axis;
        }
        return Ok(theta * axis);
    }
    Ok(axial * (theta / (2.0 * theta.sin())))
}

/// Rodrigues rotation about `omega = theta * n`.
pub fn so3_exp(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta = omega.norm();
    if theta < 1e-12 {
        return Matrix3::identity() + skew(omega);
    }
    let n = omega / theta;
    let k = skew(&n);
    Matrix3::identity() + theta.sin() * k + (1.0 - theta.cos()) * (k * k)
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Residual scaling factors.
#[derive(Debug, Clone, Copy)]
pub struct IkWeights {
    /// Orientation term scale.
    pub lambda_q: f64,
    /// Collision hinge scale.
    pub lambda_c: f64,
    /// Passive-equilibrium term scale.
    pub lambda_e: f64,
    /// Optional Tikhonov pull toward the seed; zero disables it.
    pub lambda_reg: f64,
}

impl Default for IkWeights {
    fn default() -> Self {
        IkWeights {
            lambda_q: 0.5,
            lambda_c: 10.0,
            lambda_e: 1.0,
            lambda_reg: 0.0,
        }
    }
}

/// One inverse-kinematics query.
#[derive(Debug, Clone)]
pub struct IkProblem {
    /// Desired gripper pose.
    pub target: Pose,
    /// Initial iterate; must lie within the joint limits.
    pub seed: DVector<f64>,
    pub weights: IkWeights,
}

/// Solver knobs. All tolerances apply to the stacked residual.
#[derive(Debug, Clone)]
pub struct IkConfig {
    /// Stop when the squared residual norm drops below this.
    pub residual_tol: f64,
    /// Stop when an accepted step is shorter than this.
    pub step_tol: f64,
    pub max_iterations: usize,
    /// Total seeds tried: the given seed plus uniform redraws within limits.
    pub max_seeds: usize,
    /// Forward-difference step for the Jacobian.
    pub fd_step: f64,
    /// Seed for the restart draws.
    pub rng_seed: u64,
}

impl Default for IkConfig {
    fn default() -> Self {
        IkConfig {
            residual_tol: 1e-8,
            step_tol: 1e-10,
            max_iterations: 200,
            max_seeds: 8,
            fd_step: 1e-6,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IkSolution {
    pub q: DVector<f64>,
    /// Squared norm of the stacked residual at `q`.
    pub residual_norm: f64,
    /// Levenberg-Marquardt iterations summed over restarts.
    pub iterations: usize,
    pub converged: bool,
}

/// Stacked residual `[r_p (3); r_q (3); r_c (1); r_e (1)]`, plus the optional
/// regularization entries when enabled.
pub fn ik_residual(
    spec: &ChainSpec,
    scene: &CollisionScene,
    problem: &IkProblem,
    q: &DVector<f64>,
) -> Result<DVector<f64>> {
    let pose = spec.forward_kinematics(q)?;
    let w = &problem.weights;

    let r_p = pose.position - problem.target.position;
    let r_q = w.lambda_q * so3_log(&(problem.target.rotation.transpose() * pose.rotation))?;
    let d = scene.signed_distance(spec, q)?;
    let r_c = w.lambda_c * (-d).max(0.0);
    let g_p = passive_gravity(spec, q)?;
    let r_e = w.lambda_e * g_p.norm_squared();

    let reg = if w.lambda_reg > 0.0 { q.len() } else { 0 };
    let mut r = DVector::zeros(8 + reg);
    r.fixed_rows_mut::<3>(0).copy_from(&r_p);
    r.fixed_rows_mut::<3>(3).copy_from(&r_q);
    r[6] = r_c;
    r[7] = r_e;
    if reg > 0 {
        for i in 0..q.len() {
            r[8 + i] = w.lambda_reg * (q[i] - problem.seed[i]);
        }
    }
    Ok(r)
}

/// Success conditions every converged solution must satisfy.
fn meets_success_criteria(
    spec: &ChainSpec,
    scene: &CollisionScene,
    problem: &IkProblem,
    q: &DVector<f64>,
) -> Result<bool> {
    if !spec.within_limits(q) {
        return Ok(false);
    }
    let pose = spec.forward_kinematics(q)?;
    if (pose.position - problem.target.position).norm() > 1e-4 {
        return Ok(false);
    }
    let rot_err = so3_log(&(problem.target.rotation.transpose() * pose.rotation))?;
    if rot_err.norm() > 1e-3 {
        return Ok(false);
    }
    if scene.signed_distance(spec, q)? < 0.0 {
        return Ok(false);
    }
    if passive_gravity(spec, q)?.norm_squared() > 1e-4 {
        return Ok(false);
    }
    Ok(true)
}

/// One Levenberg-Marquardt descent from a fixed seed. Accepted steps never
/// increase the squared residual; iterates stay clamped inside the limits.
fn lm_descent(
    spec: &ChainSpec,
    scene: &CollisionScene,
    problem: &IkProblem,
    seed: &DVector<f64>,
    config: &IkConfig,
) -> Result<(DVector<f64>, f64, usize)> {
    let n = spec.dof();
    let mut q = seed.clone();
    spec.clamp_to_limits(&mut q);
    let mut r = ik_residual(spec, scene, problem, &q)?;
    let mut cost = r.norm_squared();
    let mut damping: f64 = 1e-3;
    let mut iterations = 0;

    for _ in 0..config.max_iterations {
        iterations += 1;
        if cost < config.residual_tol {
            break;
        }

        // Forward differences; one-sided by construction, which keeps the
        // hinge term informative from the penetrating side.
        let m = r.len();
        let mut jac = DMatrix::zeros(m, n);
        for c in 0..n {
            let mut qpert = q.clone();
            qpert[c] += config.fd_step;
            let rpert = ik_residual(spec, scene, problem, &qpert)?;
            for rr in 0..m {
                jac[(rr, c)] = (rpert[rr] - r[rr]) / config.fd_step;
            }
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;

        let mut accepted = false;
        for _ in 0..12 {
            let lhs = &jtj + damping * DMatrix::identity(n, n);
            let Some(step) = lhs.lu().solve(&(-&jtr)) else {
                damping *= 10.0;
                continue;
            };
            let mut q_trial = &q + &step;
            spec.clamp_to_limits(&mut q_trial);
            let r_trial = ik_residual(spec, scene, problem, &q_trial)?;
            let cost_trial = r_trial.norm_squared();
            if cost_trial < cost {
                let step_norm = (&q_trial - &q).norm();
                q = q_trial;
                r = r_trial;
                cost = cost_trial;
                damping = (damping / 10.0).max(1e-12);
                accepted = true;
                if step_norm < config.step_tol {
                    return Ok((q, cost, iterations));
                }
                break;
            }
            damping *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    Ok((q, cost, iterations))
}

/// Solves the stacked least-squares problem, restarting from uniform draws
/// within the joint limits if the given seed stalls. The result is flagged
/// converged only when the iterate meets every success criterion: joint
/// limits, `d(q) >= 0`, position within 1e-4 m, orientation within 1e-3 rad,
/// and squared passive gravity norm within 1e-4.
pub fn solve_ik(
    spec: &ChainSpec,
    scene: &CollisionScene,
    problem: &IkProblem,
    config: &IkConfig,
) -> Result<IkSolution> {
    if problem.seed.len() != spec.dof() {
        return Err(Error::contract(format!(
            "IK seed has {} entries, chain has {} joints",
            problem.seed.len(),
            spec.dof()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let lo = spec.lower_limits();
    let hi = spec.upper_limits();

    let mut best_q = problem.seed.clone();
    let mut best_cost = f64::INFINITY;
    let mut iterations = 0;

    for attempt in 0..config.max_seeds.max(1) {
        let seed = if attempt == 0 {
            problem.seed.clone()
        } else {
            DVector::from_fn(spec.dof(), |i, _| rng.random_range(lo[i]..hi[i]))
        };
        let (q, cost, iters) = lm_descent(spec, scene, problem, &seed, config)?;
        iterations += iters;
        if cost < best_cost {
            best_cost = cost;
            best_q = q.clone();
        }
        if cost < config.residual_tol && meets_success_criteria(spec, scene, problem, &q)? {
            return Ok(IkSolution {
                q,
                residual_norm: cost,
                iterations,
                converged: true,
            });
        }
    }

    let converged = best_cost < config.residual_tol
        && meets_success_criteria(spec, scene, problem, &best_q)?;
    Ok(IkSolution {
        q: best_q,
        residual_norm: best_cost,
        iterations,
        converged,
    })
}
