use crane_planner::chain::*;
use crane_planner::dynamics::settle_passive;
use crane_planner::path::{initial_control_points, BSplinePath};
use crane_planner::trajectory::*;
use nalgebra::DVector;

fn pendulum_cart() -> ChainSpec {
    // Actuated horizontal slide with a passive pendulum hanging from it:
    // prismatic joint along x, then a revolute joint about z with gravity
    // pulling along -y.
    ChainSpec::new(
        vec![
            JointSpec {
                kind: JointKind::Prismatic,
                dh: DhRow { a: 0.0, alpha: -std::f64::consts::FRAC_PI_2, d: 0.0, theta_offset: -std::f64::consts::FRAC_PI_2 },
                limits: (-3.0, 3.0),
                velocity_limit: 2.0,
                mass: 5.0,
                com: [0.0, 0.0, 0.0],
                inertia: [[0.1, 0.0, 0.0], [0.0, 0.1, 0.0], [0.0, 0.0, 0.1]],
            },
            JointSpec {
                kind: JointKind::Revolute,
                dh: DhRow { a: 0.8, alpha: 0.0, d: 0.0, theta_offset: 0.0 },
                limits: (-3.0, 3.0),
                velocity_limit: 6.0,
                mass: 1.0,
                com: [0.0, 0.0, 0.0],
                inertia: [[1e-4, 0.0, 0.0], [0.0, 1e-4, 0.0], [0.0, 0.0, 1e-4]],
            },
        ],
        [0.0, -9.81, 0.0],
        Partition { boom: vec![0], passive: vec![1], gripper: vec![] },
    )
    .unwrap()
}

fn main() {
    env_logger::init();
    let spec = pendulum_cart();

    // Sanity: the pendulum hangs at some equilibrium angle.
    let settled = settle_passive(&spec, &DVector::from_vec(vec![0.0, -1.0]), 1e-12).unwrap();
    println!("settled passive angle: {:.6}", settled[1]);
    let poses = spec.link_poses(&settled).unwrap();
    println!("tip position at settle: {:?}", poses[1].position);

    let q0 = settled.clone();
    let mut q1 = settled.clone();
    q1[0] += 1.5;
    let q1 = settle_passive(&spec, &q1, 1e-12).unwrap();

    let path = BSplinePath::new(initial_control_points(&q0, &q1, 12).unwrap()).unwrap();
    let config = NlpConfig {
        n_grid: 30,
        u_max: vec![2.0],
        ..NlpConfig::default()
    };
    let nlp = build_nlp(&path, &spec, &config).unwrap();
    let t = std::time::Instant::now();
    let sol = solve_nlp(&nlp, &config).unwrap();
    println!(
        "converged={} t_f={:.4} defect={:.3e} pg={:.3e} inner={} outer={} [{:.2?}]",
        sol.converged, sol.t_f, sol.max_defect, sol.stationarity, sol.iterations, sol.outer_iterations, t.elapsed()
    );

    // Replay through RK4 at h/10 with piecewise-linear u.
    let h = sol.grid_step();
    let x0 = SystemState::from_vector(&sol.states[0]).unwrap();
    let steps = 10 * (sol.states.len() - 1);
    let states = crane_planner::dynamics::integrate_rk4_with(
        &spec,
        &x0,
        |t| ControlInput::new(sol.control_at_time(t)),
        h / 10.0,
        steps,
    )
    .unwrap();
    let last = states.last().unwrap();
    let target = SystemState::from_vector(sol.states.last().unwrap()).unwrap();
    println!(
        "replay: pos err {:.2e}, vel err {:.2e}",
        (&last.q - &target.q).norm(),
        (&last.qdot - &target.qdot).norm()
    );
}
