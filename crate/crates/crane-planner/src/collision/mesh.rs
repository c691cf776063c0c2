//! Convex polytope geometry for the narrow phase.

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Vertices on or behind every face plane within this tolerance.
const CONVEXITY_TOL: f64 = 1e-9;
/// Two direction vectors are the same SAT candidate if parallel within this.
const PARALLEL_TOL: f64 = 1e-12;

/// A convex polytope in its local frame.
///
/// Face normals and edge directions are precomputed and deduplicated (up to
/// sign) because they are the projection-axis candidates of the narrow phase.
#[derive(Debug, Clone)]
pub struct ConvexMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<Vec<usize>>,
    /// Outward unit normal per face.
    pub face_normals: Vec<Vector3<f64>>,
    /// Face normals deduplicated up to sign.
    pub unique_normals: Vec<Vector3<f64>>,
    /// Edge directions deduplicated up to sign.
    pub edge_directions: Vec<Vector3<f64>>,
}

fn push_unique(list: &mut Vec<Vector3<f64>>, dir: Vector3<f64>) {
    for d in list.iter() {
        if d.dot(&dir).abs() > 1.0 - PARALLEL_TOL {
            return;
        }
    }
    list.push(dir);
}

impl ConvexMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<Vec<usize>>) -> Result<Self> {
        if vertices.len() < 4 {
            return Err(Error::InvalidGeometry(format!(
                "convex mesh needs at least 4 vertices, got {}",
                vertices.len()
            )));
        }
        if faces.is_empty() {
            return Err(Error::InvalidGeometry("mesh has no faces".into()));
        }
        let centroid: Vector3<f64> =
            vertices.iter().sum::<Vector3<f64>>() / vertices.len() as f64;

        let mut face_normals = Vec::with_capacity(faces.len());
        for (fi, face) in faces.iter().enumerate() {
            if face.len() < 3 {
                return Err(Error::InvalidGeometry(format!(
                    "face {fi} has fewer than 3 vertices"
                )));
            }
            for &vi in face {
                if vi >= vertices.len() {
                    return Err(Error::InvalidGeometry(format!(
                        "face {fi} references vertex {vi} out of range"
                    )));
                }
            }
            // Newell's method tolerates collinear leading vertices.
            let mut n = Vector3::zeros();
            for k in 0..face.len() {
                let v0 = vertices[face[k]];
                let v1 = vertices[face[(k + 1) % face.len()]];
                n += (v0 - v1).cross(&(v0 + v1));
            }
            let len = n.norm();
            if len < 1e-12 {
                return Err(Error::InvalidGeometry(format!(
                    "face {fi} has zero area"
                )));
            }
            let mut n = n / len;
            if (centroid - vertices[face[0]]).dot(&n) > 0.0 {
                n = -n;
            }
            face_normals.push(n);
        }

        // Convexity: every vertex behind every face plane.
        for (fi, face) in faces.iter().enumerate() {
            let origin = vertices[face[0]];
            let n = face_normals[fi];
            for (vi, v) in vertices.iter().enumerate() {
                if (v - origin).dot(&n) > CONVEXITY_TOL {
                    return Err(Error::InvalidGeometry(format!(
                        "vertex {vi} lies {:.2e} in front of face {fi}: mesh is not convex",
                        (v - origin).dot(&n)
                    )));
                }
            }
        }

        let mut unique_normals = Vec::new();
        for n in &face_normals {
            push_unique(&mut unique_normals, *n);
        }
        let mut edge_directions = Vec::new();
        for face in &faces {
            for k in 0..face.len() {
                let v0 = vertices[face[k]];
                let v1 = vertices[face[(k + 1) % face.len()]];
                let e = v1 - v0;
                let len = e.norm();
                if len > 1e-12 {
                    push_unique(&mut edge_directions, e / len);
                }
            }
        }

        Ok(ConvexMesh {
            vertices,
            faces,
            face_normals,
            unique_normals,
            edge_directions,
        })
    }

    /// Axis-aligned box centered at the local origin.
    pub fn cuboid(half_extents: Vector3<f64>) -> Result<Self> {
        let (hx, hy, hz) = (half_extents.x, half_extents.y, half_extents.z);
        if hx <= 0.0 || hy <= 0.0 || hz <= 0.0 {
            return Err(Error::InvalidGeometry(format!(
                "box half extents must be positive, got {half_extents:?}"
            )));
        }
        let vertices = vec![
            Vector3::new(-hx, -hy, -hz),
            Vector3::new(hx, -hy, -hz),
            Vector3::new(hx, hy, -hz),
            Vector3::new(-hx, hy, -hz),
            Vector3::new(-hx, -hy, hz),
            Vector3::new(hx, -hy, hz),
            Vector3::new(hx, hy, hz),
            Vector3::new(-hx, hy, hz),
        ];
        let faces = vec![
            vec![0, 3, 2, 1],
            vec![4, 5, 6, 7],
            vec![0, 1, 5, 4],
            vec![2, 3, 7, 6],
            vec![1, 2, 6, 5],
            vec![0, 4, 7, 3],
        ];
        Self::new(vertices, faces)
    }

    /// Regular prism: `sides`-gon of circumradius `radius` in the local xy
    /// plane, extruded symmetrically along z to total `height`.
    pub fn prism(sides: usize, radius: f64, height: f64) -> Result<Self> {
        if sides < 3 {
            return Err(Error::InvalidGeometry(format!(
                "prism needs at least 3 sides, got {sides}"
            )));
        }
        if radius <= 0.0 || height <= 0.0 {
            return Err(Error::InvalidGeometry(
                "prism radius and height must be positive".into(),
            ));
        }
        let hz = height / 2.0;
        let mut vertices = Vec::with_capacity(2 * sides);
        for ring in [-hz, hz] {
            for k in 0..sides {
                let ang = 2.0 * std::f64::consts::PI * k as f64 / sides as f64;
                vertices.push(Vector3::new(radius * ang.cos(), radius * ang.sin(), ring));
            }
        }
        let mut faces = Vec::with_capacity(sides + 2);
        faces.push((0..sides).rev().collect());
        faces.push((sides..2 * sides).collect());
        for k in 0..sides {
            let k1 = (k + 1) % sides;
            faces.push(vec![k, k1, sides + k1, sides + k]);
        }
        Self::new(vertices, faces)
    }

    /// Largest vertex distance from the local origin.
    pub fn circumradius(&self) -> f64 {
        self.vertices
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cuboid_has_three_unique_normals_and_edges() {
        let m = ConvexMesh::cuboid(Vector3::new(1.0, 2.0, 0.5)).unwrap();
        assert_eq!(m.vertices.len(), 8);
        assert_eq!(m.faces.len(), 6);
        assert_eq!(m.unique_normals.len(), 3);
        assert_eq!(m.edge_directions.len(), 3);
    }

    #[test]
    fn prism_face_count() {
        let m = ConvexMesh::prism(6, 0.5, 2.0).unwrap();
        assert_eq!(m.vertices.len(), 12);
        assert_eq!(m.faces.len(), 8);
        // Cap normal plus six side normals, three of which are antiparallel
        // to the others.
        assert_eq!(m.unique_normals.len(), 4);
    }

    #[test]
    fn concave_mesh_is_rejected() {
        // One vertex pushed inside the opposite face.
        let mut m = ConvexMesh::cuboid(Vector3::new(1.0, 1.0, 1.0)).unwrap();
        let vertices = {
            let mut v = m.vertices.clone();
            v[6] = Vector3::new(0.0, 0.0, 0.0);
            v
        };
        let faces = std::mem::take(&mut m.faces);
        assert!(ConvexMesh::new(vertices, faces).is_err());
    }

    #[test]
    fn degenerate_face_is_rejected() {
        let vertices = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
        ];
        let faces = vec![vec![0, 1, 1], vec![0, 2, 1], vec![0, 3, 2], vec![1, 2, 3]];
        assert!(ConvexMesh::new(vertices, faces).is_err());
    }
}
