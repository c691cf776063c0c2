//! Collision-free path search over pinned B-spline control points.
//!
//! The cost is the sum of a squared path-length term over a checkpoint grid,
//! a hinge on scene penetration at the checkpoints, and a quadratic hinge on
//! joint-limit violations. The evolution loop in [`evolution`] minimizes it
//! over the free interior control points; the pinned endpoint rows are never
//! touched, so every candidate path interpolates the query exactly.

mod bspline;
mod evolution;

pub use bspline::{clamped_knots, initial_control_points, BSplinePath, DEGREE, PINNED};
pub use evolution::{
    evolve_step, log_rank_weights, DistributionState, EvolutionConfig, EvolveOutcome,
};

use nalgebra::{DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chain::ChainSpec;
use crate::collision::CollisionScene;
use crate::error::{Error, Result};

/// Cost weights and checkpoint count.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathCostWeights {
    /// Collision-cost scale.
    pub w_c: f64,
    /// Limit-cost scale.
    pub w_l: f64,
    /// Checkpoints along the path; the costs sum over `s_k = k/n_s`,
    /// `k = 1..=n_s`.
    pub n_s: usize,
    /// Clearance below which the collision hinge activates. Zero penalizes
    /// penetration only.
    pub margin: f64,
}

impl Default for PathCostWeights {
    fn default() -> Self {
        PathCostWeights {
            w_c: 20.0,
            w_l: 100.0,
            n_s: 100,
            margin: 0.0,
        }
    }
}

/// Cost breakdown at a path.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct PathCost {
    pub total: f64,
    /// Squared-step path length term.
    pub path_length: f64,
    /// Collision hinge sum (unweighted).
    pub collision: f64,
    /// Joint-limit hinge sum (unweighted).
    pub limits: f64,
}

fn limit_hinge(q: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> f64 {
    let mut j = 0.0;
    for i in 0..q.len() {
        let over = (q[i] - hi[i]).max(0.0);
        let under = (lo[i] - q[i]).max(0.0);
        j += over * over + under * under;
    }
    j
}

/// Evaluates the path cost on the checkpoint grid. Collision terms come from
/// one batched signed-distance call over the `n_s` checkpoints `k = 1..=n_s`.
pub fn path_cost(
    path: &BSplinePath,
    scene: &CollisionScene,
    spec: &ChainSpec,
    weights: &PathCostWeights,
) -> Result<PathCost> {
    if weights.n_s < 2 {
        return Err(Error::contract(
            "checkpoint count must be at least 2".to_string(),
        ));
    }
    let n_s = weights.n_s;
    let mut points = Vec::with_capacity(n_s + 1);
    for k in 0..=n_s {
        points.push(path.eval(k as f64 / n_s as f64)?);
    }
    let distances = scene.batch_signed_distance(spec, &points[1..])?;

    let mut path_length = 0.0;
    for k in 1..=n_s {
        path_length += (&points[k] - &points[k - 1]).norm_squared();
    }
    let collision: f64 = distances
        .iter()
        .map(|&d| (weights.margin - d).max(0.0))
        .sum();
    let lo = spec.lower_limits();
    let hi = spec.upper_limits();
    let limits: f64 = points[1..]
        .iter()
        .map(|q| limit_hinge(q, &lo, &hi))
        .sum();

    Ok(PathCost {
        total: path_length + weights.w_c * collision + weights.w_l * limits,
        path_length,
        collision,
        limits,
    })
}

/// Full optimizer configuration.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathConfig {
    /// Control-point count including the eight pinned rows.
    pub n_c: usize,
    pub weights: PathCostWeights,
    pub lambda: usize,
    pub nu: usize,
    pub max_iters: usize,
    pub cost_tolerance: f64,
    pub epsilon: f64,
    /// Step size; the initial covariance is diagonal in the per-joint limit
    /// ranges, so sampling spreads `sigma * range` per joint.
    pub sigma: f64,
    /// Stop after this many iterations without the best cost improving by
    /// more than `stagnation_improvement`.
    pub stagnation_window: usize,
    pub stagnation_improvement: f64,
    pub rng_seed: u64,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            n_c: 12,
            weights: PathCostWeights::default(),
            lambda: 100,
            nu: 20,
            max_iters: 300,
            cost_tolerance: 0.0,
            epsilon: 1e-8,
            sigma: 0.3,
            stagnation_window: 20,
            stagnation_improvement: 1e-6,
            rng_seed: 0,
        }
    }
}

impl PathConfig {
    fn evolution(&self) -> EvolutionConfig {
        EvolutionConfig {
            lambda: self.lambda,
            nu: self.nu,
            max_iters: self.max_iters,
            cost_tolerance: self.cost_tolerance,
            epsilon: self.epsilon,
            rng_seed: self.rng_seed,
        }
    }
}

/// Optimization outcome. `success` requires zero collision and zero limit
/// cost at every checkpoint of the returned path.
#[derive(Debug, Clone)]
pub struct PathResult {
    pub path: BSplinePath,
    pub cost: PathCost,
    pub iterations: usize,
    pub success: bool,
}

fn flatten(points: &[DVector<f64>]) -> DVector<f64> {
    let dim: usize = points.iter().map(|p| p.len()).sum();
    let mut flat = DVector::zeros(dim);
    let mut at = 0;
    for p in points {
        flat.rows_mut(at, p.len()).copy_from(p);
        at += p.len();
    }
    flat
}

fn unflatten(flat: &DVector<f64>, rows: usize, dim: usize) -> Vec<DVector<f64>> {
    (0..rows)
        .map(|r| flat.rows(r * dim, dim).into_owned())
        .collect()
}

/// Searches for a short collision-free path from `start` to `goal`.
///
/// Both endpoints must lie within the joint limits and clear of collisions.
/// Returns the best sample ever drawn (reshaped into control points with the
/// pinned rows restored), which by construction costs no more than the final
/// distribution mean.
pub fn optimize_path(
    spec: &ChainSpec,
    scene: &CollisionScene,
    start: &DVector<f64>,
    goal: &DVector<f64>,
    config: &PathConfig,
) -> Result<PathResult> {
    let n_d = spec.dof();
    if start.len() != n_d || goal.len() != n_d {
        return Err(Error::contract(
            "path endpoints do not match the chain dimension".to_string(),
        ));
    }
    if !spec.within_limits(start) || !spec.within_limits(goal) {
        return Err(Error::contract(
            "path endpoints must lie within the joint limits".to_string(),
        ));
    }
    if scene.signed_distance(spec, start)? < 0.0 || scene.signed_distance(spec, goal)? < 0.0 {
        return Err(Error::contract(
            "path endpoints must be collision-free".to_string(),
        ));
    }

    let initial = initial_control_points(start, goal, config.n_c)?;
    let straight = BSplinePath::new(initial.clone())?;

    if start == goal {
        // The constant path: zero length exactly, all checkpoints coincide.
        let d = scene.signed_distance(spec, start)?;
        let n_s = config.weights.n_s as f64;
        let collision = n_s * (config.weights.margin - d).max(0.0);
        let limits = n_s * limit_hinge(start, &spec.lower_limits(), &spec.upper_limits());
        let cost = PathCost {
            total: config.weights.w_c * collision + config.weights.w_l * limits,
            path_length: 0.0,
            collision,
            limits,
        };
        let success = collision == 0.0 && limits == 0.0;
        return Ok(PathResult {
            path: straight,
            cost,
            iterations: 0,
            success,
        });
    }

    // No free control points: the pinned straight spline is the only option.
    if config.n_c == 2 * PINNED {
        let cost = path_cost(&straight, scene, spec, &config.weights)?;
        let success = cost.collision == 0.0 && cost.limits == 0.0;
        return Ok(PathResult {
            path: straight,
            cost,
            iterations: 0,
            success,
        });
    }

    let interior = config.n_c - 2 * PINNED;
    let mean = flatten(&initial[PINNED..config.n_c - PINNED]);
    let ranges = DVector::from_iterator(
        n_d,
        spec.joints.iter().map(|j| j.limits.1 - j.limits.0),
    );
    let scales = DVector::from_fn(interior * n_d, |i, _| ranges[i % n_d]);
    let mut state = DistributionState::diagonal(mean, &scales, config.sigma)?;

    let evo = config.evolution();
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let lo = spec.lower_limits();
    let hi = spec.upper_limits();
    let n_s = config.weights.n_s;

    let mut best_cost = f64::INFINITY;
    let mut best_sample = state.mean.clone();
    let mut stale = 0usize;
    let mut iterations = 0usize;

    for _ in 0..config.max_iters {
        iterations += 1;
        let outcome = evolve_step(&state, &evo, &mut rng, |samples| {
            // Spline checkpoints for the whole population, scored through a
            // single batched distance call.
            let mut paths = Vec::with_capacity(samples.len());
            let mut checkpoints = Vec::with_capacity(samples.len() * n_s);
            let mut lengths = Vec::with_capacity(samples.len());
            let mut limit_costs = Vec::with_capacity(samples.len());
            for sample in samples {
                let path =
                    BSplinePath::from_interior(start, goal, &unflatten(sample, interior, n_d))?;
                let mut prev = path.eval(0.0)?;
                let mut length = 0.0;
                let mut limits = 0.0;
                for k in 1..=n_s {
                    let point = path.eval(k as f64 / n_s as f64)?;
                    length += (&point - &prev).norm_squared();
                    limits += limit_hinge(&point, &lo, &hi);
                    prev = point.clone();
                    checkpoints.push(point);
                }
                lengths.push(length);
                limit_costs.push(limits);
                paths.push(path);
            }
            let distances = scene.batch_signed_distance(spec, &checkpoints)?;
            Ok((0..samples.len())
                .map(|i| {
                    let collision: f64 = distances[i * n_s..(i + 1) * n_s]
                        .iter()
                        .map(|&d| (config.weights.margin - d).max(0.0))
                        .sum();
                    lengths[i]
                        + config.weights.w_c * collision
                        + config.weights.w_l * limit_costs[i]
                })
                .collect())
        })?;
        state = outcome.state;

        if outcome.best_cost < best_cost - config.stagnation_improvement {
            stale = 0;
        } else {
            stale += 1;
        }
        if outcome.best_cost < best_cost {
            best_cost = outcome.best_cost;
            best_sample = outcome.best_sample;
        }
        if best_cost <= config.cost_tolerance || stale >= config.stagnation_window {
            break;
        }
    }

    let path = BSplinePath::from_interior(start, goal, &unflatten(&best_sample, interior, n_d))?;
    let cost = path_cost(&path, scene, spec, &config.weights)?;
    let success = cost.collision == 0.0 && cost.limits == 0.0;
    Ok(PathResult {
        path,
        cost,
        iterations,
        success,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{DhRow, JointKind, JointSpec, Partition};

    fn free_chain(n: usize) -> ChainSpec {
        let joint = JointSpec {
            kind: JointKind::Revolute,
            dh: DhRow {
                a: 0.5,
                alpha: 0.0,
                d: 0.0,
                theta_offset: 0.0,
            },
            limits: (-2.0, 2.0),
            velocity_limit: 2.0,
            mass: 1.0,
            com: [-0.25, 0.0, 0.0],
            inertia: [[0.02, 0.0, 0.0], [0.0, 0.02, 0.0], [0.0, 0.0, 0.02]],
        };
        ChainSpec::new(
            vec![joint; n],
            [0.0, -9.81, 0.0],
            Partition {
                boom: (0..n).collect(),
                passive: vec![],
                gripper: vec![],
            },
        )
        .unwrap()
    }

    fn empty_scene() -> CollisionScene {
        CollisionScene::new(vec![], vec![]).unwrap()
    }

    #[test]
    fn straight_line_cost_in_free_space() {
        let spec = free_chain(2);
        let scene = empty_scene();
        let start = DVector::from_vec(vec![0.0, 0.0]);
        let goal = DVector::from_vec(vec![1.0, -0.5]);
        let path =
            BSplinePath::new(initial_control_points(&start, &goal, 12).unwrap()).unwrap();
        let weights = PathCostWeights {
            n_s: 50,
            ..PathCostWeights::default()
        };
        let cost = path_cost(&path, &scene, &spec, &weights).unwrap();
        assert_eq!(cost.collision, 0.0);
        assert_eq!(cost.limits, 0.0);
        assert!(cost.path_length > 0.0);
        assert_eq!(cost.total, cost.path_length);
    }

    #[test]
    fn limit_violation_contributes_quadratically() {
        let q = DVector::from_vec(vec![2.1]);
        let lo = DVector::from_vec(vec![-2.0]);
        let hi = DVector::from_vec(vec![2.0]);
        assert!((limit_hinge(&q, &lo, &hi) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn identical_endpoints_return_immediately() {
        let spec = free_chain(2);
        let scene = empty_scene();
        let q = DVector::from_vec(vec![0.3, -0.3]);
        let result = optimize_path(&spec, &scene, &q, &q, &PathConfig::default()).unwrap();
        assert_eq!(result.iterations, 0);
        assert!(result.success);
        assert_eq!(result.cost.path_length, 0.0);
        assert_eq!(result.path.eval(0.5).unwrap(), q);
    }

    #[test]
    fn colliding_endpoint_is_a_contract_violation() {
        use crate::chain::Pose;
        use crate::collision::{Attachment, CollisionBody, ConvexMesh};
        use nalgebra::Vector3;
        let spec = free_chain(1);
        // A box swallowing the arm tip at q = 0.
        let scene = CollisionScene::new(
            vec![
                CollisionBody {
                    mesh: ConvexMesh::cuboid(Vector3::new(0.1, 0.1, 0.1)).unwrap(),
                    attachment: Attachment::Link {
                        index: 0,
                        local: Pose::identity(),
                    },
                },
                CollisionBody {
                    mesh: ConvexMesh::cuboid(Vector3::new(0.3, 0.3, 0.3)).unwrap(),
                    attachment: Attachment::World(Pose {
                        rotation: nalgebra::Matrix3::identity(),
                        position: Vector3::new(0.5, 0.0, 0.0),
                    }),
                },
            ],
            vec![(0, 1)],
        )
        .unwrap();
        let q0 = DVector::from_vec(vec![0.0]);
        let q1 = DVector::from_vec(vec![1.5]);
        let err = optimize_path(&spec, &scene, &q0, &q1, &PathConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }
}
