//! Serial-chain description and forward kinematics.
//!
//! A chain is an ordered list of joints in Denavit-Hartenberg (standard,
//! distal) convention. Joint `i` moves about/along the z-axis of the frame
//! produced by rows `0..i`; the base frame is the world frame. Each row
//! contributes the homogeneous transform
//!
//! ```text
//!   H_i(q_i) = RotZ(theta_i) * TransZ(d_i) * TransX(a_i) * RotX(alpha_i)
//! ```
//!
//! with `theta_i = theta_offset + q_i` for revolute joints and
//! `d_i = d + q_i` for prismatic joints.
//!
//! Joints are partitioned into boom (actuated), passive, and gripper
//! (actuated) index sets. Control inputs stack boom accelerations first,
//! then gripper accelerations.

use nalgebra::{DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

/// Orthonormality tolerance for [`Pose`] validation.
const ROTATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

/// Denavit-Hartenberg parameters of one joint/link pair.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DhRow {
    /// Link length along x, meters.
    pub a: f64,
    /// Link twist about x, radians.
    pub alpha: f64,
    /// Link offset along z, meters.
    pub d: f64,
    /// Joint angle offset about z, radians.
    pub theta_offset: f64,
}

/// One joint plus the rigid link that follows it.
///
/// Center of mass and inertia are expressed in the link frame (the DH frame
/// produced by this row), inertia about the center of mass.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    pub kind: JointKind,
    pub dh: DhRow,
    /// Position limits (rad or m). `limits.0 < limits.1`, both finite.
    pub limits: (f64, f64),
    /// Velocity magnitude limit (rad/s or m/s).
    pub velocity_limit: f64,
    /// Link mass, kg. Strictly positive.
    pub mass: f64,
    /// Link center of mass in the link frame, meters.
    pub com: [f64; 3],
    /// Link rotational inertia about the com, link frame, kg m^2.
    /// Row-major 3x3, must be symmetric positive definite.
    pub inertia: [[f64; 3]; 3],
}

impl JointSpec {
    pub fn com_vector(&self) -> Vector3<f64> {
        Vector3::new(self.com[0], self.com[1], self.com[2])
    }

    pub fn inertia_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.inertia[r][c])
    }

    fn validate(&self, index: usize) -> Result<()> {
        let (lo, hi) = self.limits;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidChain(format!(
                "joint {index}: limits must be finite with q_min < q_max, got ({lo}, {hi})"
            )));
        }
        if !(self.velocity_limit.is_finite() && self.velocity_limit > 0.0) {
            return Err(Error::InvalidChain(format!(
                "joint {index}: velocity limit must be positive and finite"
            )));
        }
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::InvalidChain(format!(
                "joint {index}: mass must be positive, got {}",
                self.mass
            )));
        }
        let inertia = self.inertia_matrix();
        let asym = (inertia - inertia.transpose()).norm();
        if asym > 1e-9 {
            return Err(Error::InvalidChain(format!(
                "joint {index}: inertia not symmetric (asymmetry {asym:.2e})"
            )));
        }
        if inertia.cholesky().is_none() {
            return Err(Error::InvalidChain(format!(
                "joint {index}: inertia not positive definite"
            )));
        }
        Ok(())
    }
}

/// Actuated/passive partition of the joint indices.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Partition {
    pub boom: Vec<usize>,
    pub passive: Vec<usize>,
    pub gripper: Vec<usize>,
}

/// Full kinematic/dynamic description of a serial chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub joints: Vec<JointSpec>,
    /// Gravitational acceleration vector, m/s^2 (e.g. `[0, 0, -9.81]`).
    pub gravity: [f64; 3],
    pub partition: Partition,
}

impl ChainSpec {
    pub fn new(joints: Vec<JointSpec>, gravity: [f64; 3], partition: Partition) -> Result<Self> {
        let spec = ChainSpec {
            joints,
            gravity,
            partition,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: ChainSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_json_str(&text)
    }

    fn validate(&self) -> Result<()> {
        let n = self.joints.len();
        if n == 0 {
            return Err(Error::InvalidChain("chain has no joints".into()));
        }
        for (i, joint) in self.joints.iter().enumerate() {
            joint.validate(i)?;
        }
        let mut seen = vec![false; n];
        let sets = [
            ("boom", &self.partition.boom),
            ("passive", &self.partition.passive),
            ("gripper", &self.partition.gripper),
        ];
        for (name, set) in sets {
            for &idx in set {
                if idx >= n {
                    return Err(Error::InvalidChain(format!(
                        "partition set {name} references joint {idx}, chain has {n}"
                    )));
                }
                if seen[idx] {
                    return Err(Error::InvalidChain(format!(
                        "joint {idx} appears in more than one partition set"
                    )));
                }
                seen[idx] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|covered| !covered) {
            return Err(Error::InvalidChain(format!(
                "joint {missing} is missing from the partition"
            )));
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    /// Number of actuated joints (boom + gripper).
    pub fn num_actuated(&self) -> usize {
        self.partition.boom.len() + self.partition.gripper.len()
    }

    pub fn num_passive(&self) -> usize {
        self.partition.passive.len()
    }

    /// Actuated joint indices in control order: boom first, then gripper.
    pub fn actuated_indices(&self) -> Vec<usize> {
        let mut idx = self.partition.boom.clone();
        idx.extend_from_slice(&self.partition.gripper);
        idx
    }

    pub fn gravity_vector(&self) -> Vector3<f64> {
        Vector3::new(self.gravity[0], self.gravity[1], self.gravity[2])
    }

    pub fn lower_limits(&self) -> DVector<f64> {
        DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.limits.0))
    }

    pub fn upper_limits(&self) -> DVector<f64> {
        DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.limits.1))
    }

    pub fn velocity_limits(&self) -> DVector<f64> {
        DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.velocity_limit))
    }

    pub fn within_limits(&self, q: &DVector<f64>) -> bool {
        q.len() == self.dof()
            && self
                .joints
                .iter()
                .zip(q.iter())
                .all(|(j, &qi)| qi >= j.limits.0 && qi <= j.limits.1)
    }

    pub fn clamp_to_limits(&self, q: &mut DVector<f64>) {
        for (i, joint) in self.joints.iter().enumerate() {
            q[i] = q[i].clamp(joint.limits.0, joint.limits.1);
        }
    }

    fn check_dim(&self, q: &DVector<f64>) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::contract(format!(
                "configuration has {} entries, chain has {} joints",
                q.len(),
                self.dof()
            )));
        }
        Ok(())
    }

    /// Pose of every link frame (length `n_d`), world frame.
    pub fn link_poses(&self, q: &DVector<f64>) -> Result<Vec<Pose>> {
        self.check_dim(q)?;
        let mut poses = Vec::with_capacity(self.joints.len());
        let mut rot = Matrix3::identity();
        let mut pos = Vector3::zeros();
        for (joint, &qi) in self.joints.iter().zip(q.iter()) {
            let (local_rot, local_pos) = dh_transform(joint, qi);
            pos += rot * local_pos;
            rot *= local_rot;
            poses.push(Pose {
                rotation: rot,
                position: pos,
            });
        }
        Ok(poses)
    }

    /// Gripper-center pose: the product of all DH transforms.
    pub fn forward_kinematics(&self, q: &DVector<f64>) -> Result<Pose> {
        Ok(self
            .link_poses(q)?
            .pop()
            .expect("chain validated non-empty"))
    }
}

/// Rotation/translation pair, world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub position: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            position: Vector3::zeros(),
        }
    }

    /// Validates orthonormality (`R^T R = I` within 1e-10) and positive
    /// determinant before accepting the matrix.
    pub fn new(rotation: Matrix3<f64>, position: Vector3<f64>) -> Result<Self> {
        let defect = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        if defect > ROTATION_TOL {
            return Err(Error::InvalidRotation(format!(
                "R^T R deviates from identity by {defect:.2e}"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::InvalidRotation(format!(
                "determinant {det} is not +1"
            )));
        }
        Ok(Pose { rotation, position })
    }

    /// Applies this pose to a point expressed in the local frame.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.position
    }

    /// Composition `self * other` (other expressed in this pose's frame).
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            position: self.position + self.rotation * other.position,
        }
    }
}

/// Local DH transform of one row at joint value `q`.
pub(crate) fn dh_transform(joint: &JointSpec, q: f64) -> (Matrix3<f64>, Vector3<f64>) {
    let (theta, d) = match joint.kind {
        JointKind::Revolute => (joint.dh.theta_offset + q, joint.dh.d),
        JointKind::Prismatic => (joint.dh.theta_offset, joint.dh.d + q),
    };
    let (st, ct) = theta.sin_cos();
    let (sa, ca) = joint.dh.alpha.sin_cos();
    let rot = Matrix3::new(
        ct,
        -st * ca,
        st * sa,
        st,
        ct * ca,
        -ct * sa,
        0.0,
        sa,
        ca,
    );
    let pos = Vector3::new(joint.dh.a * ct, joint.dh.a * st, d);
    (rot, pos)
}

/// Joint positions and velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
}

impl SystemState {
    pub fn new(q: DVector<f64>, qdot: DVector<f64>) -> Result<Self> {
        if q.len() != qdot.len() {
            return Err(Error::contract(format!(
                "state dimensions disagree: {} positions, {} velocities",
                q.len(),
                qdot.len()
            )));
        }
        Ok(SystemState { q, qdot })
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        SystemState {
            q,
            qdot: DVector::zeros(n),
        }
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    /// Stacks `[q; qdot]` into one vector.
    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.dof();
        let mut x = DVector::zeros(2 * n);
        x.rows_mut(0, n).copy_from(&self.q);
        x.rows_mut(n, n).copy_from(&self.qdot);
        x
    }

    pub fn from_vector(x: &DVector<f64>) -> Result<Self> {
        if x.len() % 2 != 0 {
            return Err(Error::contract(format!(
                "state vector length {} is odd",
                x.len()
            )));
        }
        let n = x.len() / 2;
        Ok(SystemState {
            q: x.rows(0, n).into_owned(),
            qdot: x.rows(n, n).into_owned(),
        })
    }
}

/// Accelerations of the actuated joints, boom entries first, then gripper.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlInput {
    pub u: DVector<f64>,
}

impl ControlInput {
    pub fn new(u: DVector<f64>) -> Self {
        ControlInput { u }
    }

    pub fn zeros(spec: &ChainSpec) -> Self {
        ControlInput {
            u: DVector::zeros(spec.num_actuated()),
        }
    }
}
