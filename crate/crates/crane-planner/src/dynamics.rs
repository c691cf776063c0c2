//! Rigid-body dynamics of the chain: mass matrix, bias forces, and the
//! partitioned forward dynamics of the actuated/passive split.
//!
//! The mass matrix comes from a composite-rigid-body pass, the bias vector
//! from a recursive Newton-Euler pass; both work directly with world-frame
//! vectors. Actuated joint accelerations are control inputs, so forward
//! dynamics only ever solves for the passive block.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::chain::{ChainSpec, ControlInput, JointKind, Pose, SystemState};
use crate::error::{Error, Result};

/// Condition-number ceiling for the passive mass-matrix block.
pub const PASSIVE_BLOCK_MAX_CONDITION: f64 = 1e12;

/// World-frame kinematic quantities shared by the dynamics passes.
struct FrameData {
    /// Joint axis direction of each joint (z-axis of the preceding frame).
    axes: Vec<Vector3<f64>>,
    /// A point on each joint axis (origin of the preceding frame).
    axis_points: Vec<Vector3<f64>>,
    /// Link frame poses.
    poses: Vec<Pose>,
    /// Link center of mass, world frame.
    coms: Vec<Vector3<f64>>,
    /// Link rotational inertia about the com, world frame.
    inertias: Vec<Matrix3<f64>>,
}

fn frame_data(spec: &ChainSpec, q: &DVector<f64>) -> Result<FrameData> {
    let poses = spec.link_poses(q)?;
    let n = poses.len();
    let mut axes = Vec::with_capacity(n);
    let mut axis_points = Vec::with_capacity(n);
    let mut coms = Vec::with_capacity(n);
    let mut inertias = Vec::with_capacity(n);
    for i in 0..n {
        let (prev_rot, prev_pos) = if i == 0 {
            (Matrix3::identity(), Vector3::zeros())
        } else {
            (poses[i - 1].rotation, poses[i - 1].position)
        };
        axes.push(prev_rot.column(2).into_owned());
        axis_points.push(prev_pos);
        let joint = &spec.joints[i];
        coms.push(poses[i].transform_point(&joint.com_vector()));
        inertias.push(poses[i].rotation * joint.inertia_matrix() * poses[i].rotation.transpose());
    }
    Ok(FrameData {
        axes,
        axis_points,
        poses,
        coms,
        inertias,
    })
}

/// Inverse dynamics: the generalized forces that produce `qddot` at state
/// `(q, qdot)` under gravity. Classical Newton-Euler recursion with all
/// quantities in the world frame; gravity enters as a base acceleration.
pub fn inverse_dynamics(
    spec: &ChainSpec,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    qddot: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = spec.dof();
    if qdot.len() != n || qddot.len() != n {
        return Err(Error::contract(
            "inverse_dynamics: velocity/acceleration dimension mismatch".to_string(),
        ));
    }
    let frames = frame_data(spec, q)?;

    let mut omega = Vec::with_capacity(n);
    let mut alpha = Vec::with_capacity(n);
    let mut acc_origin = Vec::with_capacity(n);
    let mut acc_com = Vec::with_capacity(n);

    let mut omega_prev = Vector3::zeros();
    let mut alpha_prev = Vector3::zeros();
    // Base acceleration -g makes every link "fall upward", which injects the
    // gravity terms without a separate force pass.
    let mut acc_prev = -spec.gravity_vector();

    for i in 0..n {
        let axis = frames.axes[i];
        let s = frames.poses[i].position - frames.axis_points[i];
        let (w, al, a) = match spec.joints[i].kind {
            JointKind::Revolute => {
                let w = omega_prev + qdot[i] * axis;
                let al = alpha_prev + qddot[i] * axis + omega_prev.cross(&(qdot[i] * axis));
                let a = acc_prev + al.cross(&s) + w.cross(&w.cross(&s));
                (w, al, a)
            }
            JointKind::Prismatic => {
                let w = omega_prev;
                let al = alpha_prev;
                let a = acc_prev
                    + al.cross(&s)
                    + w.cross(&w.cross(&s))
                    + 2.0 * qdot[i] * w.cross(&axis)
                    + qddot[i] * axis;
                (w, al, a)
            }
        };
        let r_com = frames.coms[i] - frames.poses[i].position;
        let a_c = a + al.cross(&r_com) + w.cross(&w.cross(&r_com));
        omega.push(w);
        alpha.push(al);
        acc_origin.push(a);
        acc_com.push(a_c);
        omega_prev = w;
        alpha_prev = al;
        acc_prev = a;
    }

    let mut tau = DVector::zeros(n);
    let mut f_child = Vector3::zeros();
    let mut n_child = Vector3::zeros();
    for i in (0..n).rev() {
        let m = spec.joints[i].mass;
        let force_inertial = m * acc_com[i];
        let moment_inertial =
            frames.inertias[i] * alpha[i] + omega[i].cross(&(frames.inertias[i] * omega[i]));

        let f_joint = force_inertial + f_child;
        let child_origin = frames.poses[i].position;
        let n_joint = moment_inertial
            + n_child
            + (child_origin - frames.coms[i]).cross(&f_child)
            - (frames.axis_points[i] - frames.coms[i]).cross(&f_joint);

        tau[i] = match spec.joints[i].kind {
            JointKind::Revolute => frames.axes[i].dot(&n_joint),
            JointKind::Prismatic => frames.axes[i].dot(&f_joint),
        };
        f_child = f_joint;
        n_child = n_joint;
    }
    Ok(tau)
}

/// Coriolis/centrifugal plus gravity generalized forces `b(q, qdot)`.
pub fn bias_vector(spec: &ChainSpec, q: &DVector<f64>, qdot: &DVector<f64>) -> Result<DVector<f64>> {
    inverse_dynamics(spec, q, qdot, &DVector::zeros(spec.dof()))
}

/// Gravity generalized forces `g(q) = b(q, 0)`.
pub fn gravity_vector(spec: &ChainSpec, q: &DVector<f64>) -> Result<DVector<f64>> {
    let zeros = DVector::zeros(spec.dof());
    inverse_dynamics(spec, q, &zeros, &zeros)
}

/// Rows of the gravity vector belonging to the passive joints.
pub fn passive_gravity(spec: &ChainSpec, q: &DVector<f64>) -> Result<DVector<f64>> {
    let g = gravity_vector(spec, q)?;
    Ok(DVector::from_iterator(
        spec.num_passive(),
        spec.partition.passive.iter().map(|&i| g[i]),
    ))
}

/// Joint-space mass matrix by the composite-rigid-body procedure.
pub fn mass_matrix(spec: &ChainSpec, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = spec.dof();
    let frames = frame_data(spec, q)?;

    // Composite mass/com/inertia of the subtree rooted at each link.
    let mut comp_mass = vec![0.0; n];
    let mut comp_com = vec![Vector3::zeros(); n];
    let mut comp_inertia = vec![Matrix3::zeros(); n];
    for i in (0..n).rev() {
        let m_link = spec.joints[i].mass;
        if i == n - 1 {
            comp_mass[i] = m_link;
            comp_com[i] = frames.coms[i];
            comp_inertia[i] = frames.inertias[i];
        } else {
            let m_total = m_link + comp_mass[i + 1];
            let com_total =
                (m_link * frames.coms[i] + comp_mass[i + 1] * comp_com[i + 1]) / m_total;
            let shift = |inertia: &Matrix3<f64>, mass: f64, from: &Vector3<f64>| {
                let d = from - com_total;
                inertia + mass * (d.norm_squared() * Matrix3::identity() - d * d.transpose())
            };
            comp_inertia[i] = shift(&frames.inertias[i], m_link, &frames.coms[i])
                + shift(&comp_inertia[i + 1], comp_mass[i + 1], &comp_com[i + 1]);
            comp_mass[i] = m_total;
            comp_com[i] = com_total;
        }
    }

    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        // Spatial force on composite i from a unit acceleration of joint i
        // at zero velocity: linear force plus moment about the composite com.
        let axis = frames.axes[i];
        let (force, moment_com) = match spec.joints[i].kind {
            JointKind::Revolute => {
                let lever = comp_com[i] - frames.axis_points[i];
                (
                    comp_mass[i] * axis.cross(&lever),
                    comp_inertia[i] * axis,
                )
            }
            JointKind::Prismatic => (comp_mass[i] * axis, Vector3::zeros()),
        };
        for j in (0..=i).rev() {
            let entry = match spec.joints[j].kind {
                JointKind::Revolute => {
                    let moment =
                        moment_com + (comp_com[i] - frames.axis_points[j]).cross(&force);
                    frames.axes[j].dot(&moment)
                }
                JointKind::Prismatic => frames.axes[j].dot(&force),
            };
            m[(j, i)] = entry;
            m[(i, j)] = entry;
        }
    }
    Ok(m)
}

/// Mass-matrix blocks of the boom/passive/gripper partition.
#[derive(Debug, Clone)]
pub struct MassBlocks {
    pub boom: DMatrix<f64>,
    pub passive: DMatrix<f64>,
    pub gripper: DMatrix<f64>,
    pub boom_passive: DMatrix<f64>,
    pub gripper_passive: DMatrix<f64>,
    pub boom_gripper: DMatrix<f64>,
}

fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

pub fn partition_mass(spec: &ChainSpec, m: &DMatrix<f64>) -> MassBlocks {
    let p = &spec.partition;
    MassBlocks {
        boom: submatrix(m, &p.boom, &p.boom),
        passive: submatrix(m, &p.passive, &p.passive),
        gripper: submatrix(m, &p.gripper, &p.gripper),
        boom_passive: submatrix(m, &p.passive, &p.boom),
        gripper_passive: submatrix(m, &p.passive, &p.gripper),
        boom_gripper: submatrix(m, &p.boom, &p.gripper),
    }
}

/// Bias-vector slices of the boom/passive/gripper partition.
#[derive(Debug, Clone)]
pub struct BiasBlocks {
    pub boom: DVector<f64>,
    pub passive: DVector<f64>,
    pub gripper: DVector<f64>,
}

pub fn partition_bias(spec: &ChainSpec, b: &DVector<f64>) -> BiasBlocks {
    let p = &spec.partition;
    BiasBlocks {
        boom: subvector(b, &p.boom),
        passive: subvector(b, &p.passive),
        gripper: subvector(b, &p.gripper),
    }
}

/// State derivative `[qdot; qddot]`: actuated accelerations are copied from
/// `u`, passive accelerations solve the passive rows of the dynamics.
pub fn forward_dynamics(
    spec: &ChainSpec,
    state: &SystemState,
    control: &ControlInput,
) -> Result<DVector<f64>> {
    let n = spec.dof();
    if state.dof() != n {
        return Err(Error::contract(
            "forward_dynamics: state dimension mismatch".to_string(),
        ));
    }
    if control.u.len() != spec.num_actuated() {
        return Err(Error::contract(format!(
            "forward_dynamics: control has {} entries, chain has {} actuated joints",
            control.u.len(),
            spec.num_actuated()
        )));
    }

    let mut qddot = DVector::zeros(n);
    for (k, &idx) in spec.actuated_indices().iter().enumerate() {
        qddot[idx] = control.u[k];
    }

    let passive = &spec.partition.passive;
    if !passive.is_empty() {
        let m = mass_matrix(spec, &state.q)?;
        let b = bias_vector(spec, &state.q, &state.qdot)?;
        let m_p = submatrix(&m, passive, passive);

        let eig = m_p.clone().symmetric_eigen();
        let max_ev = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
        let min_ev = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
        if !(min_ev > 0.0 && max_ev / min_ev <= PASSIVE_BLOCK_MAX_CONDITION) {
            return Err(Error::SingularConfiguration(format!(
                "passive mass block condition number {:.3e} exceeds {:.0e}",
                max_ev / min_ev.max(f64::MIN_POSITIVE),
                PASSIVE_BLOCK_MAX_CONDITION
            )));
        }

        // Passive rows: M_p qdd_p + M_{p,a} qdd_a + b_p = 0.
        let mut rhs = subvector(&b, passive);
        for (r, &pi) in passive.iter().enumerate() {
            for (k, &ai) in spec.actuated_indices().iter().enumerate() {
                rhs[r] += m[(pi, ai)] * control.u[k];
            }
        }
        let qdd_p = eig.recompose().lu().solve(&(-rhs)).ok_or_else(|| {
            Error::SingularConfiguration("passive mass block solve failed".to_string())
        })?;
        for (r, &pi) in passive.iter().enumerate() {
            qddot[pi] = qdd_p[r];
        }
        // Re-copy the actuated rows so they stay bit-exact copies of u.
        for (k, &idx) in spec.actuated_indices().iter().enumerate() {
            qddot[idx] = control.u[k];
        }
    }

    let mut dx = DVector::zeros(2 * n);
    dx.rows_mut(0, n).copy_from(&state.qdot);
    dx.rows_mut(n, n).copy_from(&qddot);
    Ok(dx)
}

/// Gravitational potential energy of the chain at `q`.
pub fn potential_energy(spec: &ChainSpec, q: &DVector<f64>) -> Result<f64> {
    let poses = spec.link_poses(q)?;
    let g = spec.gravity_vector();
    let mut v = 0.0;
    for (joint, pose) in spec.joints.iter().zip(poses.iter()) {
        let com = pose.transform_point(&joint.com_vector());
        v -= joint.mass * g.dot(&com);
    }
    Ok(v)
}

/// Kinetic energy `0.5 qdot^T M(q) qdot`.
pub fn kinetic_energy(spec: &ChainSpec, state: &SystemState) -> Result<f64> {
    let m = mass_matrix(spec, &state.q)?;
    Ok(0.5 * state.qdot.dot(&(&m * &state.qdot)))
}

/// Total mechanical energy.
pub fn total_energy(spec: &ChainSpec, state: &SystemState) -> Result<f64> {
    Ok(kinetic_energy(spec, state)? + potential_energy(spec, &state.q)?)
}

fn rk4_step(
    spec: &ChainSpec,
    state: &SystemState,
    u_start: &ControlInput,
    u_mid: &ControlInput,
    u_end: &ControlInput,
    h: f64,
) -> Result<SystemState> {
    let x0 = state.to_vector();
    let eval = |x: &DVector<f64>, u: &ControlInput| -> Result<DVector<f64>> {
        forward_dynamics(spec, &SystemState::from_vector(x)?, u)
    };
    let k1 = eval(&x0, u_start)?;
    let k2 = eval(&(&x0 + (h / 2.0) * &k1), u_mid)?;
    let k3 = eval(&(&x0 + (h / 2.0) * &k2), u_mid)?;
    let k4 = eval(&(&x0 + h * &k3), u_end)?;
    let x1 = &x0 + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    SystemState::from_vector(&x1)
}

/// Classical fixed-step RK4 rollout with piecewise-constant controls, one
/// control per step. Returns `controls.len() + 1` states including the
/// initial one. A replay/validation integrator; the trajectory NLP never
/// calls it.
pub fn integrate_rk4(
    spec: &ChainSpec,
    initial: &SystemState,
    controls: &[ControlInput],
    h: f64,
) -> Result<Vec<SystemState>> {
    if h <= 0.0 {
        return Err(Error::contract(format!("step size must be positive, got {h}")));
    }
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(initial.clone());
    for u in controls {
        let next = rk4_step(spec, states.last().unwrap(), u, u, u, h)?;
        states.push(next);
    }
    Ok(states)
}

/// RK4 rollout with a time-varying control law `u(t)`; the intermediate
/// stage evaluations sample it at the half step.
pub fn integrate_rk4_with<F>(
    spec: &ChainSpec,
    initial: &SystemState,
    mut control_at: F,
    h: f64,
    steps: usize,
) -> Result<Vec<SystemState>>
where
    F: FnMut(f64) -> ControlInput,
{
    if h <= 0.0 {
        return Err(Error::contract(format!("step size must be positive, got {h}")));
    }
    let mut states = Vec::with_capacity(steps + 1);
    states.push(initial.clone());
    for k in 0..steps {
        let t = k as f64 * h;
        let u0 = control_at(t);
        let um = control_at(t + h / 2.0);
        let u1 = control_at(t + h);
        let next = rk4_step(spec, states.last().unwrap(), &u0, &um, &u1, h)?;
        states.push(next);
    }
    Ok(states)
}

/// Finds passive-joint values that zero the passive gravity torques at the
/// given actuated configuration (damped Newton on `g_p`). The actuated
/// entries of `q` are left untouched.
pub fn settle_passive(spec: &ChainSpec, q: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
    let passive = spec.partition.passive.clone();
    if passive.is_empty() {
        return Ok(q.clone());
    }
    let mut q = q.clone();
    let fd = 1e-6;
    for _ in 0..100 {
        let g = passive_gravity(spec, &q)?;
        if g.norm() <= tol {
            break;
        }
        let mut jac = DMatrix::zeros(passive.len(), passive.len());
        for (c, &pi) in passive.iter().enumerate() {
            let mut qp = q.clone();
            qp[pi] += fd;
            let gp = passive_gravity(spec, &qp)?;
            for r in 0..passive.len() {
                jac[(r, c)] = (gp[r] - g[r]) / fd;
            }
        }
        let step = jac.lu().solve(&(-&g)).ok_or_else(|| {
            Error::SingularConfiguration("passive equilibrium Jacobian singular".to_string())
        })?;
        // Backtrack until the residual actually shrinks.
        let mut scale = 1.0;
        let base_norm = g.norm();
        loop {
            let mut trial = q.clone();
            for (r, &pi) in passive.iter().enumerate() {
                trial[pi] = (q[pi] + scale * step[r])
                    .clamp(spec.joints[pi].limits.0, spec.joints[pi].limits.1);
            }
            if passive_gravity(spec, &trial)?.norm() < base_norm || scale < 1e-4 {
                q = trial;
                break;
            }
            scale *= 0.5;
        }
    }
    Ok(q)
}
