//! Separating-axis narrow phase for convex polytope pairs.

use nalgebra::Vector3;

use crate::chain::Pose;
use crate::collision::mesh::ConvexMesh;

/// Cross products of near-parallel edge pairs are skipped below this
/// sine threshold.
const EDGE_CROSS_MIN_NORM: f64 = 1e-8;

fn project(points: &[Vector3<f64>], axis: &Vector3<f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in points {
        let s = axis.dot(p);
        lo = lo.min(s);
        hi = hi.max(s);
    }
    (lo, hi)
}

fn axis_gap(world_a: &[Vector3<f64>], world_b: &[Vector3<f64>], axis: &Vector3<f64>) -> f64 {
    let (min_a, max_a) = project(world_a, axis);
    let (min_b, max_b) = project(world_b, axis);
    (min_b - max_a).max(min_a - max_b)
}

/// Signed distance between two posed convex meshes: the maximum projection
/// gap over all candidate axes (face normals of both meshes plus pairwise
/// edge-direction cross products).
///
/// Positive values mean the meshes are disjoint; the value is then a lower
/// bound on their Euclidean separation. Negative values mean overlap and the
/// magnitude is the exact minimum translation that separates them.
pub fn pair_signed_distance(
    mesh_a: &ConvexMesh,
    pose_a: &Pose,
    mesh_b: &ConvexMesh,
    pose_b: &Pose,
) -> f64 {
    pair_signed_distance_capped(mesh_a, pose_a, mesh_b, pose_b, f64::INFINITY)
}

/// Same as [`pair_signed_distance`], but may stop early once the running
/// maximum exceeds `cap`. The return value equals the exact signed distance
/// whenever it is `< cap`; otherwise it is some value `>= cap` that is a
/// lower bound on the exact distance.
pub fn pair_signed_distance_capped(
    mesh_a: &ConvexMesh,
    pose_a: &Pose,
    mesh_b: &ConvexMesh,
    pose_b: &Pose,
    cap: f64,
) -> f64 {
    let world_a: Vec<Vector3<f64>> = mesh_a
        .vertices
        .iter()
        .map(|v| pose_a.transform_point(v))
        .collect();
    let world_b: Vec<Vector3<f64>> = mesh_b
        .vertices
        .iter()
        .map(|v| pose_b.transform_point(v))
        .collect();

    let mut best = f64::NEG_INFINITY;

    for n in &mesh_a.unique_normals {
        let axis = pose_a.rotation * n;
        best = best.max(axis_gap(&world_a, &world_b, &axis));
        if best > cap {
            return best;
        }
    }
    for n in &mesh_b.unique_normals {
        let axis = pose_b.rotation * n;
        best = best.max(axis_gap(&world_a, &world_b, &axis));
        if best > cap {
            return best;
        }
    }
    for ea in &mesh_a.edge_directions {
        let ea_world = pose_a.rotation * ea;
        for eb in &mesh_b.edge_directions {
            let eb_world = pose_b.rotation * eb;
            let cross = ea_world.cross(&eb_world);
            let len = cross.norm();
            if len < EDGE_CROSS_MIN_NORM {
                continue;
            }
            let axis = cross / len;
            best = best.max(axis_gap(&world_a, &world_b, &axis));
            if best > cap {
                return best;
            }
        }
    }
    best
}
