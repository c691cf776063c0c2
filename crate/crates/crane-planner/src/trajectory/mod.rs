//! Minimum-time trajectory refinement by direct collocation.
//!
//! Converts a joint-space path into a dynamically feasible trajectory: the
//! path supplies the tracking reference and the initial guess; trapezoidal
//! defect constraints enforce the underactuated dynamics on a grid whose
//! spacing is tied to the free final time.

mod nlp;
mod solver;

pub use nlp::{build_nlp, resample_reference, NlpConfig, TrajectoryNlp};

use nalgebra::DVector;

use crate::chain::ChainSpec;
use crate::collision::CollisionScene;
use crate::error::Result;
use crate::path::BSplinePath;

/// Solved (or best-effort) trajectory.
#[derive(Debug, Clone)]
pub struct TrajectorySolution {
    /// N+1 rows of `[q; qdot]`.
    pub states: Vec<DVector<f64>>,
    /// N+1 rows of actuated accelerations.
    pub controls: Vec<DVector<f64>>,
    pub t_f: f64,
    pub objective: f64,
    /// Defect infinity-norm at the returned point.
    pub max_defect: f64,
    pub max_bound_violation: f64,
    /// Projected-gradient norm of the Lagrangian at the returned point.
    pub stationarity: f64,
    pub converged: bool,
    /// Inner quasi-Newton iterations, summed over the outer loop.
    pub iterations: usize,
    pub outer_iterations: usize,
    /// Set by [`plan_trajectory`]: whether every grid configuration cleared
    /// the scene. `None` when no collision check was requested.
    pub collision_post_check: Option<bool>,
}

impl TrajectorySolution {
    /// Sampling time `h = t_F / N`.
    pub fn grid_step(&self) -> f64 {
        self.t_f / (self.states.len() - 1) as f64
    }

    /// Piecewise-linear control interpolation at time `t`.
    pub fn control_at_time(&self, t: f64) -> DVector<f64> {
        let n = self.controls.len() - 1;
        let h = self.grid_step();
        let s = (t / h).clamp(0.0, n as f64);
        let k = (s.floor() as usize).min(n - 1);
        let w = s - k as f64;
        &self.controls[k] * (1.0 - w) + &self.controls[k + 1] * w
    }
}

/// Solves the assembled NLP.
pub fn solve_nlp(nlp: &TrajectoryNlp, config: &NlpConfig) -> Result<TrajectorySolution> {
    let outcome = solver::minimize(nlp, config)?;
    let xi = outcome.xi;
    let states = (0..=nlp.n_grid).map(|k| nlp.state_at(&xi, k)).collect();
    let controls = (0..=nlp.n_grid).map(|k| nlp.control_at(&xi, k)).collect();
    Ok(TrajectorySolution {
        states,
        controls,
        t_f: xi[nlp.idx_tf()],
        objective: nlp.objective(&xi),
        max_defect: outcome.max_defect,
        max_bound_violation: nlp.max_bound_violation(&xi),
        stationarity: outcome.stationarity,
        converged: outcome.converged,
        iterations: outcome.inner_iterations,
        outer_iterations: outcome.outer_iterations,
        collision_post_check: None,
    })
}

/// Builds and solves the tracking NLP for `path`, then checks every solution
/// grid configuration against the scene. The NLP itself carries no collision
/// constraint; staying collision-free is delegated to tracking the
/// collision-free path, and this post-check guards the output.
///
/// Pass the degenerate straight-line spline as `path` to run the optimizer
/// in naive-initialization mode.
pub fn plan_trajectory(
    path: &BSplinePath,
    spec: &ChainSpec,
    scene: &CollisionScene,
    config: &NlpConfig,
) -> Result<TrajectorySolution> {
    let nlp = build_nlp(path, spec, config)?;
    let mut solution = solve_nlp(&nlp, config)?;
    let configs: Vec<DVector<f64>> = solution
        .states
        .iter()
        .map(|x| x.rows(0, spec.dof()).into_owned())
        .collect();
    let distances = scene.batch_signed_distance(spec, &configs)?;
    solution.collision_post_check = Some(distances.iter().all(|&d| d >= 0.0));
    Ok(solution)
}
