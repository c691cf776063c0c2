//! Shared fixtures and independent oracle implementations.
//!
//! Every oracle here deliberately takes a different computational route from
//! the library: forward kinematics by raw 4x4 homogeneous products, inverse
//! dynamics by the link-frame Newton-Euler recursion, spline evaluation by
//! Cox-de-Boor basis summation, and convex distances by alternating
//! projections / support-function descent.

#![allow(dead_code)]

use crane_planner::chain::{ChainSpec, DhRow, JointKind, JointSpec, Partition, Pose};
use nalgebra::{DVector, Matrix3, Matrix4, Vector3};

// ---------------------------------------------------------------------------
// Fixtures
// ---------------------------------------------------------------------------

pub fn revolute_joint(a: f64, alpha: f64, d: f64, theta_offset: f64) -> JointSpec {
    JointSpec {
        kind: JointKind::Revolute,
        dh: DhRow {
            a,
            alpha,
            d,
            theta_offset,
        },
        limits: (-3.0, 3.0),
        velocity_limit: 2.0,
        mass: 1.0,
        com: [-a / 2.0, 0.0, 0.05],
        inertia: [[0.04, 0.0, 0.0], [0.0, 0.05, 0.0], [0.0, 0.0, 0.06]],
    }
}

/// Spatial 6-joint chain with twists, offsets, and a prismatic joint; used
/// for kinematics/dynamics oracle comparisons.
pub fn spatial_test_chain() -> ChainSpec {
    let mut joints = vec![
        revolute_joint(0.3, std::f64::consts::FRAC_PI_2, 0.8, 0.1),
        revolute_joint(1.2, 0.0, 0.0, -0.4),
        revolute_joint(0.9, -std::f64::consts::FRAC_PI_2, 0.1, 0.25),
        JointSpec {
            kind: JointKind::Prismatic,
            dh: DhRow {
                a: 0.0,
                alpha: std::f64::consts::FRAC_PI_2,
                d: 0.4,
                theta_offset: 0.0,
            },
            limits: (-0.8, 0.8),
            velocity_limit: 1.0,
            mass: 0.7,
            com: [0.0, 0.1, -0.2],
            inertia: [[0.03, 0.0, 0.0], [0.0, 0.025, 0.0], [0.0, 0.0, 0.02]],
        },
        revolute_joint(0.25, std::f64::consts::FRAC_PI_2, 0.0, 0.0),
        revolute_joint(0.2, 0.0, 0.15, 0.7),
    ];
    joints[1].mass = 2.3;
    joints[2].mass = 1.6;
    ChainSpec::new(
        joints,
        [0.0, 0.0, -9.81],
        Partition {
            boom: vec![0, 1, 2, 3],
            passive: vec![4],
            gripper: vec![5],
        },
    )
    .unwrap()
}

/// Planar pendulum chain: all joints rotate about world z, links along x,
/// gravity along -y, point masses at the link tips.
pub fn pendulum_chain(lengths_masses: &[(f64, f64)], passive_from: usize) -> ChainSpec {
    let joints: Vec<_> = lengths_masses
        .iter()
        .map(|&(l, m)| JointSpec {
            kind: JointKind::Revolute,
            dh: DhRow {
                a: l,
                alpha: 0.0,
                d: 0.0,
                theta_offset: 0.0,
            },
            limits: (-7.0, 7.0),
            velocity_limit: 50.0,
            mass: m,
            com: [0.0, 0.0, 0.0],
            inertia: [[1e-8, 0.0, 0.0], [0.0, 1e-8, 0.0], [0.0, 0.0, 1e-8]],
        })
        .collect();
    let n = joints.len();
    ChainSpec::new(
        joints,
        [0.0, -9.81, 0.0],
        Partition {
            boom: (0..passive_from).collect(),
            passive: (passive_from..n).collect(),
            gripper: vec![],
        },
    )
    .unwrap()
}

pub fn manifest_path(rel: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

pub fn reference_crane() -> ChainSpec {
    ChainSpec::load(manifest_path("data/reference_crane.json")).unwrap()
}

// ---------------------------------------------------------------------------
// Forward-kinematics oracle: plain 4x4 homogeneous matrix products.
// ---------------------------------------------------------------------------

fn dh_matrix(joint: &JointSpec, q: f64) -> Matrix4<f64> {
    let (theta, d) = match joint.kind {
        JointKind::Revolute => (joint.dh.theta_offset + q, joint.dh.d),
        JointKind::Prismatic => (joint.dh.theta_offset, joint.dh.d + q),
    };
    let (st, ct) = theta.sin_cos();
    let (sa, ca) = joint.dh.alpha.sin_cos();
    let a = joint.dh.a;
    Matrix4::new(
        ct, -st * ca, st * sa, a * ct,
        st, ct * ca, -ct * sa, a * st,
        0.0, sa, ca, d,
        0.0, 0.0, 0.0, 1.0,
    )
}

/// Product of raw DH matrices, multiplied with an explicit triple loop.
pub fn fk_oracle(spec: &ChainSpec, q: &DVector<f64>) -> (Matrix3<f64>, Vector3<f64>) {
    let mut total = Matrix4::identity();
    for (joint, &qi) in spec.joints.iter().zip(q.iter()) {
        let local = dh_matrix(joint, qi);
        let mut next = Matrix4::zeros();
        for r in 0..4 {
            for c in 0..4 {
                let mut s = 0.0;
                for k in 0..4 {
                    s += total[(r, k)] * local[(k, c)];
                }
                next[(r, c)] = s;
            }
        }
        total = next;
    }
    (
        total.fixed_view::<3, 3>(0, 0).into_owned(),
        Vector3::new(total[(0, 3)], total[(1, 3)], total[(2, 3)]),
    )
}

// ---------------------------------------------------------------------------
// Inverse-dynamics oracle: link-frame recursive Newton-Euler.
// ---------------------------------------------------------------------------

/// Torques for `(q, qdot, qddot)` under gravity, following the classical
/// link-coordinate recursion with all vectors expressed in each link frame.
pub fn rnea_oracle(
    spec: &ChainSpec,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    qddot: &DVector<f64>,
) -> DVector<f64> {
    let n = spec.dof();
    let z = Vector3::z();

    // Per-joint rotation R_{i-1 -> i}^T (i.e. parent vectors into link i) and
    // the link-frame origin offset p_i expressed in frame i-1.
    let mut rot_to_link = Vec::with_capacity(n);
    let mut origin_in_parent = Vec::with_capacity(n);
    for (joint, &qi) in spec.joints.iter().zip(q.iter()) {
        let (theta, d) = match joint.kind {
            JointKind::Revolute => (joint.dh.theta_offset + qi, joint.dh.d),
            JointKind::Prismatic => (joint.dh.theta_offset, joint.dh.d + qi),
        };
        let (st, ct) = theta.sin_cos();
        let (sa, ca) = joint.dh.alpha.sin_cos();
        let r_parent_to_frame = Matrix3::new(
            ct, -st * ca, st * sa,
            st, ct * ca, -ct * sa,
            0.0, sa, ca,
        );
        rot_to_link.push(r_parent_to_frame.transpose());
        origin_in_parent.push(Vector3::new(joint.dh.a * ct, joint.dh.a * st, d));
    }

    // Forward pass, everything expressed in the current link frame. The
    // acceleration recursion transports the parent origin acceleration and
    // adds the joint contribution; the origin of frame i is a material point
    // of link i, so the transport uses the link (not parent) rates.
    let mut omega = vec![Vector3::zeros(); n];
    let mut domega = vec![Vector3::zeros(); n];
    let mut acc = vec![Vector3::zeros(); n];
    let mut acc_com = vec![Vector3::zeros(); n];

    let mut omega_prev = Vector3::zeros();
    let mut domega_prev = Vector3::zeros();
    let mut acc_prev = -spec.gravity_vector(); // base frame == world

    for i in 0..n {
        let rot = rot_to_link[i];
        let r_off = rot * origin_in_parent[i]; // o_i - o_{i-1}, frame i
        match spec.joints[i].kind {
            JointKind::Revolute => {
                omega[i] = rot * (omega_prev + qdot[i] * z);
                domega[i] =
                    rot * (domega_prev + qddot[i] * z + omega_prev.cross(&(qdot[i] * z)));
                acc[i] = rot * acc_prev
                    + domega[i].cross(&r_off)
                    + omega[i].cross(&omega[i].cross(&r_off));
            }
            JointKind::Prismatic => {
                omega[i] = rot * omega_prev;
                domega[i] = rot * domega_prev;
                let axis = rot * z;
                acc[i] = rot * acc_prev
                    + domega[i].cross(&r_off)
                    + omega[i].cross(&omega[i].cross(&r_off))
                    + 2.0 * qdot[i] * omega[i].cross(&axis)
                    + qddot[i] * axis;
            }
        }
        let com = spec.joints[i].com_vector();
        acc_com[i] = acc[i] + domega[i].cross(&com) + omega[i].cross(&omega[i].cross(&com));
        omega_prev = omega[i];
        domega_prev = domega[i];
        acc_prev = acc[i];
    }

    // Backward pass: (f_i, n_i) is the wrench link i-1 applies to link i,
    // expressed in frame i, with the moment taken about the joint point
    // o_{i-1} (frame-i coordinates -r_off).
    let mut tau = DVector::zeros(n);
    let mut f_up = Vector3::zeros();
    let mut n_up = Vector3::zeros();
    for i in (0..n).rev() {
        let inertia = spec.joints[i].inertia_matrix();
        let com = spec.joints[i].com_vector();
        let force = spec.joints[i].mass * acc_com[i];
        let moment = inertia * domega[i] + omega[i].cross(&(inertia * omega[i]));

        let (f_child, n_child) = if i + 1 < n {
            let to_this = rot_to_link[i + 1].transpose();
            (to_this * f_up, to_this * n_up)
        } else {
            (Vector3::zeros(), Vector3::zeros())
        };

        let rot = rot_to_link[i];
        let r_off = rot * origin_in_parent[i];
        let f_joint = force + f_child;
        // Moment balance about the link com; the child moment n_child is
        // referenced to o_i, which sits at the frame-i origin.
        let n_joint = moment + (r_off + com).cross(&f_joint) - com.cross(&f_child) + n_child;

        let axis = rot * z;
        tau[i] = match spec.joints[i].kind {
            JointKind::Revolute => axis.dot(&n_joint),
            JointKind::Prismatic => axis.dot(&f_joint),
        };
        f_up = f_joint;
        n_up = n_joint;
    }
    tau
}

// ---------------------------------------------------------------------------
// Planar double-pendulum oracle (point masses, absolute angles from -y).
// ---------------------------------------------------------------------------

/// State `[th1, th2, w1, w2]` with angles measured from the downward
/// vertical; point masses `m1, m2` at distances `l1, l2`.
pub struct DoublePendulum {
    pub l1: f64,
    pub l2: f64,
    pub m1: f64,
    pub m2: f64,
    pub g: f64,
}

impl DoublePendulum {
    pub fn derivative(&self, s: &[f64; 4]) -> [f64; 4] {
        let (t1, t2, w1, w2) = (s[0], s[1], s[2], s[3]);
        let (l1, l2, m1, m2, g) = (self.l1, self.l2, self.m1, self.m2, self.g);
        let d = t1 - t2;
        let m11 = (m1 + m2) * l1 * l1;
        let m12 = m2 * l1 * l2 * d.cos();
        let m22 = m2 * l2 * l2;
        let c1 = m2 * l1 * l2 * w2 * w2 * d.sin() + (m1 + m2) * g * l1 * t1.sin();
        let c2 = -m2 * l1 * l2 * w1 * w1 * d.sin() + m2 * g * l2 * t2.sin();
        let det = m11 * m22 - m12 * m12;
        let a1 = (-c1 * m22 + c2 * m12) / det;
        let a2 = (c1 * m12 - c2 * m11) / det;
        [w1, w2, a1, a2]
    }

    pub fn rk4(&self, state: [f64; 4], h: f64, steps: usize) -> [f64; 4] {
        let mut s = state;
        for _ in 0..steps {
            let k1 = self.derivative(&s);
            let s2 = add(&s, &k1, h / 2.0);
            let k2 = self.derivative(&s2);
            let s3 = add(&s, &k2, h / 2.0);
            let k3 = self.derivative(&s3);
            let s4 = add(&s, &k3, h);
            let k4 = self.derivative(&s4);
            for i in 0..4 {
                s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        s
    }
}

fn add(s: &[f64; 4], k: &[f64; 4], h: f64) -> [f64; 4] {
    [s[0] + h * k[0], s[1] + h * k[1], s[2] + h * k[2], s[3] + h * k[3]]
}

// ---------------------------------------------------------------------------
// Spline oracle: direct Cox-de-Boor basis summation.
// ---------------------------------------------------------------------------

pub fn bspline_basis(knots: &[f64], i: usize, p: usize, s: f64) -> f64 {
    if p == 0 {
        // Half-open spans, closed at the right end of the last span.
        let last = knots[knots.len() - 1];
        if (knots[i] <= s && s < knots[i + 1]) || (s == last && knots[i] < knots[i + 1] && knots[i + 1] == last)
        {
            1.0
        } else {
            0.0
        }
    } else {
        let mut value = 0.0;
        let d1 = knots[i + p] - knots[i];
        if d1 > 0.0 {
            value += (s - knots[i]) / d1 * bspline_basis(knots, i, p - 1, s);
        }
        let d2 = knots[i + p + 1] - knots[i + 1];
        if d2 > 0.0 {
            value += (knots[i + p + 1] - s) / d2 * bspline_basis(knots, i + 1, p - 1, s);
        }
        value
    }
}

pub fn bspline_eval_oracle(
    control_points: &[DVector<f64>],
    knots: &[f64],
    degree: usize,
    s: f64,
) -> DVector<f64> {
    let dim = control_points[0].len();
    let mut out = DVector::zeros(dim);
    for (i, p) in control_points.iter().enumerate() {
        out += p * bspline_basis(knots, i, degree, s);
    }
    out
}

// ---------------------------------------------------------------------------
// Convex-distance oracles.
// ---------------------------------------------------------------------------

/// Oriented box for oracle-side computations.
#[derive(Clone, Copy)]
pub struct OrientedBox {
    pub half: Vector3<f64>,
    pub pose: Pose,
}

impl OrientedBox {
    /// Euclidean projection of a world point onto the box.
    pub fn project(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let local = self.pose.rotation.transpose() * (p - self.pose.position);
        let clamped = Vector3::new(
            local.x.clamp(-self.half.x, self.half.x),
            local.y.clamp(-self.half.y, self.half.y),
            local.z.clamp(-self.half.z, self.half.z),
        );
        self.pose.rotation * clamped + self.pose.position
    }
}

/// Closest-pair distance between two oriented boxes by alternating
/// projections; exact for disjoint convex sets up to the stall tolerance.
pub fn box_distance_oracle(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let mut pa = a.pose.position;
    let mut pb = b.project(&pa);
    let mut dist = (pa - pb).norm();
    for _ in 0..200_000 {
        pa = a.project(&pb);
        pb = b.project(&pa);
        let next = (pa - pb).norm();
        if dist - next < 1e-14 {
            dist = next;
            break;
        }
        dist = next;
    }
    dist
}

/// Intersection test by dense sampling: a jittered grid of points inside
/// each box, each checked for containment in the other.
pub fn boxes_intersect_sampling(a: &OrientedBox, b: &OrientedBox, per_axis: usize) -> bool {
    let contains = |bx: &OrientedBox, p: &Vector3<f64>| {
        let local = bx.pose.rotation.transpose() * (p - bx.pose.position);
        local.x.abs() <= bx.half.x + 1e-12
            && local.y.abs() <= bx.half.y + 1e-12
            && local.z.abs() <= bx.half.z + 1e-12
    };
    let grid_hits = |src: &OrientedBox, dst: &OrientedBox| {
        let n = per_axis as i64;
        for ix in 0..n {
            for iy in 0..n {
                for iz in 0..n {
                    let f = |k: i64, h: f64| -h + (2.0 * h) * (k as f64 + 0.5) / n as f64;
                    let local = Vector3::new(
                        f(ix, src.half.x),
                        f(iy, src.half.y),
                        f(iz, src.half.z),
                    );
                    let world = src.pose.rotation * local + src.pose.position;
                    if contains(dst, &world) {
                        return true;
                    }
                }
            }
        }
        false
    };
    grid_hits(a, b) || grid_hits(b, a)
}

/// Closest-pair distance between convex vertex sets by Frank-Wolfe descent
/// on the squared distance over the product of hulls. Returns an upper
/// bound and a certified lower bound.
pub fn polytope_distance_bounds(
    verts_a: &[Vector3<f64>],
    verts_b: &[Vector3<f64>],
    iters: usize,
) -> (f64, f64) {
    let support = |verts: &[Vector3<f64>], dir: &Vector3<f64>| -> Vector3<f64> {
        let mut best = verts[0];
        let mut best_dot = dir.dot(&verts[0]);
        for v in &verts[1..] {
            let d = dir.dot(v);
            if d > best_dot {
                best_dot = d;
                best = *v;
            }
        }
        best
    };
    let mut a = verts_a[0];
    let mut b = verts_b[0];
    let mut lower: f64 = 0.0;
    for k in 0..iters {
        let g = a - b;
        let dist2 = g.norm_squared();
        if dist2 < 1e-30 {
            return (0.0, 0.0);
        }
        // Linear minimization over A x B for the gradient (g, -g).
        let sa = support(verts_a, &(-g));
        let sb = support(verts_b, &g);
        let gap = g.dot(&(a - sa)) + g.dot(&(sb - b));
        let certified2 = (dist2 - 2.0 * gap).max(0.0);
        lower = lower.max(certified2.sqrt() * 0.999_999);
        if gap < 1e-15 {
            break;
        }
        let step = (gap / ((sa - a - (sb - b)).norm_squared()).max(1e-30)).min(1.0);
        let gamma = step.max(2.0 / (k as f64 + 2.0)).min(1.0);
        a += gamma * (sa - a);
        b += gamma * (sb - b);
    }
    ((a - b).norm(), lower)
}
