//! Motion planning for underactuated serial-chain manipulators.
//!
//! The planner runs in two stages. A stochastic evolution loop first finds a
//! globally short, collision-free joint-space path represented as a clamped
//! cubic B-spline, seeded by collision-free inverse kinematics. Direct
//! collocation with trapezoidal defects then refines that path into a
//! dynamically feasible, near-time-optimal trajectory for a chain whose
//! passive joints move under gravity alone.
//!
//! Entry points:
//!
//! - [`chain::ChainSpec`] — kinematics, limits, and inertial data of the chain
//! - [`dynamics`] — mass matrix, bias forces, partitioned forward dynamics
//! - [`collision::CollisionScene`] — batch signed-distance queries
//! - [`ik::solve_ik`] — collision-free inverse kinematics
//! - [`path::optimize_path`] — stochastic B-spline path optimization
//! - [`trajectory::plan_trajectory`] — minimum-time direct collocation
//! - [`pipeline`] — end-to-end planner, benchmark harness, and file formats
//!
//! The `examples/` directory has one runnable example per capability; the
//! `crane-planner` binary exposes the same pipeline as `plan`, `bench`, and
//! `validate` subcommands.

pub mod chain;
pub mod collision;
pub mod dynamics;
pub mod error;
pub mod ik;
pub mod path;
pub mod trajectory;

pub use error::{Error, Result};
