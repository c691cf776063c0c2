//! Scene-level signed distance `d(q)` and the batch evaluation API.
//!
//! A scene binds convex bodies to chain links or to the world and lists the
//! body pairs that participate in the minimum. All queries are pure; batch
//! queries may evaluate configurations concurrently and must return results
//! identical to sequential evaluation.

mod mesh;
mod sat;

pub use mesh::ConvexMesh;
pub use sat::{pair_signed_distance, pair_signed_distance_capped};

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::Deserialize;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::chain::{ChainSpec, Pose};
use crate::error::{Error, Result};

/// Distance reported for a scene whose active-pair list is empty.
pub const EMPTY_SCENE_DISTANCE: f64 = 1e9;

#[derive(Debug, Clone)]
pub enum Attachment {
    /// Fixed world pose.
    World(Pose),
    /// Rigidly attached to a chain link: world pose = link pose * local.
    Link { index: usize, local: Pose },
}

#[derive(Debug, Clone)]
pub struct CollisionBody {
    pub mesh: ConvexMesh,
    pub attachment: Attachment,
}

impl CollisionBody {
    pub fn link_index(&self) -> Option<usize> {
        match self.attachment {
            Attachment::World(_) => None,
            Attachment::Link { index, .. } => Some(index),
        }
    }
}

/// Convex bodies plus the active pair list.
#[derive(Debug)]
pub struct CollisionScene {
    pub bodies: Vec<CollisionBody>,
    pub active_pairs: Vec<(usize, usize)>,
    eval_count: AtomicU64,
}

impl CollisionScene {
    pub fn new(bodies: Vec<CollisionBody>, active_pairs: Vec<(usize, usize)>) -> Result<Self> {
        for &(i, j) in &active_pairs {
            if i >= bodies.len() || j >= bodies.len() {
                return Err(Error::InvalidGeometry(format!(
                    "pair ({i}, {j}) references a body out of range"
                )));
            }
            if i == j {
                return Err(Error::InvalidGeometry(format!(
                    "pair ({i}, {i}) pairs a body with itself"
                )));
            }
            if let (Some(li), Some(lj)) = (bodies[i].link_index(), bodies[j].link_index()) {
                if li.abs_diff(lj) <= 1 {
                    return Err(Error::InvalidGeometry(format!(
                        "pair ({i}, {j}) joins same or adjacent links {li} and {lj}"
                    )));
                }
            }
        }
        Ok(CollisionScene {
            bodies,
            active_pairs,
            eval_count: AtomicU64::new(0),
        })
    }

    /// Bodies plus the automatic pair list: every robot-obstacle pair and
    /// every robot-robot pair whose links are neither equal nor adjacent.
    pub fn with_auto_pairs(bodies: Vec<CollisionBody>) -> Result<Self> {
        let mut pairs = Vec::new();
        for i in 0..bodies.len() {
            for j in (i + 1)..bodies.len() {
                match (bodies[i].link_index(), bodies[j].link_index()) {
                    (None, None) => {}
                    (Some(li), Some(lj)) => {
                        if li.abs_diff(lj) > 1 {
                            pairs.push((i, j));
                        }
                    }
                    _ => pairs.push((i, j)),
                }
            }
        }
        Self::new(bodies, pairs)
    }

    /// Total scene-level signed-distance evaluations since construction or
    /// the last reset. Instrumentation only; results never depend on it.
    pub fn evaluation_count(&self) -> u64 {
        self.eval_count.load(Ordering::Relaxed)
    }

    pub fn reset_evaluation_count(&self) {
        self.eval_count.store(0, Ordering::Relaxed);
    }

    fn world_poses(&self, spec: &ChainSpec, q: &nalgebra::DVector<f64>) -> Result<Vec<Pose>> {
        let link_poses = spec.link_poses(q)?;
        self.bodies
            .iter()
            .map(|body| match &body.attachment {
                Attachment::World(pose) => Ok(*pose),
                Attachment::Link { index, local } => {
                    let link = link_poses.get(*index).ok_or_else(|| {
                        Error::InvalidGeometry(format!(
                            "body attached to link {index}, chain has {}",
                            link_poses.len()
                        ))
                    })?;
                    Ok(link.compose(local))
                }
            })
            .collect()
    }

    fn min_distance(&self, poses: &[Pose], filtered: bool) -> f64 {
        if self.active_pairs.is_empty() {
            return EMPTY_SCENE_DISTANCE;
        }
        if !filtered {
            return self
                .active_pairs
                .iter()
                .map(|&(i, j)| {
                    pair_signed_distance(
                        &self.bodies[i].mesh,
                        &poses[i],
                        &self.bodies[j].mesh,
                        &poses[j],
                    )
                })
                .fold(f64::INFINITY, f64::min);
        }

        // Cheap conservative proximity ordering so that close pairs set a
        // low running minimum early; each pair evaluation then stops as soon
        // as its running maximum proves it cannot lower the minimum. The
        // result is identical to the unfiltered reduction.
        let mut order: Vec<(f64, usize)> = self
            .active_pairs
            .iter()
            .enumerate()
            .map(|(k, &(i, j))| {
                let centers = (poses[i].position - poses[j].position).norm();
                let slack =
                    self.bodies[i].mesh.circumradius() + self.bodies[j].mesh.circumradius();
                (centers - slack, k)
            })
            .collect();
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));

        let mut best = EMPTY_SCENE_DISTANCE;
        for &(_, k) in &order {
            let (i, j) = self.active_pairs[k];
            let d = pair_signed_distance_capped(
                &self.bodies[i].mesh,
                &poses[i],
                &self.bodies[j].mesh,
                &poses[j],
                best,
            );
            best = best.min(d);
        }
        best
    }

    /// Scene signed distance at configuration `q`: the minimum of
    /// [`pair_signed_distance`] over the active pairs after posing all
    /// link-attached bodies through forward kinematics.
    pub fn signed_distance(&self, spec: &ChainSpec, q: &nalgebra::DVector<f64>) -> Result<f64> {
        let poses = self.world_poses(spec, q)?;
        self.eval_count.fetch_add(1, Ordering::Relaxed);
        Ok(self.min_distance(&poses, true))
    }

    /// Reference evaluation without the proximity ordering or early-out.
    pub fn signed_distance_unfiltered(
        &self,
        spec: &ChainSpec,
        q: &nalgebra::DVector<f64>,
    ) -> Result<f64> {
        let poses = self.world_poses(spec, q)?;
        self.eval_count.fetch_add(1, Ordering::Relaxed);
        Ok(self.min_distance(&poses, false))
    }

    /// Elementwise [`CollisionScene::signed_distance`] over a batch of
    /// configurations. Evaluates concurrently; results are identical to the
    /// sequential loop, and errors carry the offending index.
    pub fn batch_signed_distance(
        &self,
        spec: &ChainSpec,
        configurations: &[nalgebra::DVector<f64>],
    ) -> Result<Vec<f64>> {
        if configurations.is_empty() {
            return Err(Error::contract(
                "batch_signed_distance requires a nonempty batch".to_string(),
            ));
        }
        let results: Vec<Result<f64>> = configurations
            .par_iter()
            .map(|q| self.signed_distance(spec, q))
            .collect();
        let mut out = Vec::with_capacity(results.len());
        for (index, r) in results.into_iter().enumerate() {
            match r {
                Ok(d) => out.push(d),
                Err(e) => {
                    return Err(Error::BatchElement {
                        index,
                        source: Box::new(e),
                    })
                }
            }
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: SceneFile = serde_json::from_str(text)?;
        file.build()
    }
}

// ---------------------------------------------------------------------------
// Scene file schema. Units are meters; poses are a position plus either a
// unit quaternion [w, x, y, z] or a row-major rotation matrix.
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    bodies: Vec<BodyFile>,
    pairs: PairsFile,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BodyFile {
    shape: ShapeFile,
    attach: AttachFile,
    #[serde(default)]
    pose: Option<PoseFile>,
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum ShapeFile {
    Box {
        half_extents: [f64; 3],
    },
    Prism {
        sides: usize,
        radius: f64,
        height: f64,
    },
    Mesh {
        vertices: Vec<[f64; 3]>,
        faces: Vec<Vec<usize>>,
    },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AttachFile {
    Keyword(String),
    Link { link: usize },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseFile {
    position: [f64; 3],
    #[serde(default)]
    quaternion: Option<[f64; 4]>,
    #[serde(default)]
    rotation: Option<[[f64; 3]; 3]>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PairsFile {
    Keyword(String),
    Explicit(Vec<(usize, usize)>),
}

impl PoseFile {
    fn build(&self) -> Result<Pose> {
        let position = Vector3::new(self.position[0], self.position[1], self.position[2]);
        let rotation = match (&self.quaternion, &self.rotation) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidGeometry(
                    "pose specifies both quaternion and rotation".into(),
                ))
            }
            (Some(q), None) => {
                let quat = nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]);
                if (quat.norm() - 1.0).abs() > 1e-6 {
                    return Err(Error::InvalidGeometry(format!(
                        "quaternion norm {} is not 1",
                        quat.norm()
                    )));
                }
                nalgebra::UnitQuaternion::from_quaternion(quat)
                    .to_rotation_matrix()
                    .into_inner()
            }
            (None, Some(rows)) => Matrix3::from_fn(|r, c| rows[r][c]),
            (None, None) => Matrix3::identity(),
        };
        Pose::new(rotation, position)
    }
}

impl SceneFile {
    fn build(self) -> Result<CollisionScene> {
        let mut bodies = Vec::with_capacity(self.bodies.len());
        for (bi, body) in self.bodies.into_iter().enumerate() {
            let mesh = match body.shape {
                ShapeFile::Box { half_extents } => ConvexMesh::cuboid(Vector3::new(
                    half_extents[0],
                    half_extents[1],
                    half_extents[2],
                )),
                ShapeFile::Prism {
                    sides,
                    radius,
                    height,
                } => ConvexMesh::prism(sides, radius, height),
                ShapeFile::Mesh { vertices, faces } => ConvexMesh::new(
                    vertices
                        .into_iter()
                        .map(|v| Vector3::new(v[0], v[1], v[2]))
                        .collect(),
                    faces,
                ),
            }
            .map_err(|e| Error::InvalidGeometry(format!("body {bi}: {e}")))?;
            let pose = match &body.pose {
                Some(p) => p.build()?,
                None => Pose::identity(),
            };
            let attachment = match body.attach {
                AttachFile::Keyword(ref word) if word == "world" => Attachment::World(pose),
                AttachFile::Keyword(word) => {
                    return Err(Error::InvalidGeometry(format!(
                        "body {bi}: unknown attachment '{word}'"
                    )))
                }
                AttachFile::Link { link } => Attachment::Link { index: link, local: pose },
            };
            bodies.push(CollisionBody { mesh, attachment });
        }
        match self.pairs {
            PairsFile::Keyword(ref word) if word == "auto" => {
                CollisionScene::with_auto_pairs(bodies)
            }
            PairsFile::Keyword(word) => Err(Error::InvalidGeometry(format!(
                "unknown pairs keyword '{word}'"
            ))),
            PairsFile::Explicit(pairs) => CollisionScene::new(bodies, pairs),
        }
    }
}
