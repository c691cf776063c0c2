//! Augmented-Lagrangian outer loop with a box-projected Newton-CG inner
//! solver.
//!
//! The augmented Lagrangian `J + lambda^T c + (rho/2)|c|^2` has the
//! Gauss-Newton Hessian `H = (d2 J) + rho J_c^T J_c`, which is positive
//! semidefinite and cheap to apply from the cached per-grid-point dynamics
//! blocks. Each inner iteration solves `H d = -g` by conjugate gradients
//! restricted to the free variables (those not pressed against an active
//! bound by the gradient) and takes a projected Armijo step. Bounds are
//! therefore satisfied exactly at every iterate, and the gradient of the
//! augmented Lagrangian at multipliers `lambda` equals the plain Lagrangian
//! gradient at the first-order estimate `lambda + rho c`, so the final inner
//! projected-gradient norm doubles as the reported stationarity measure.

use nalgebra::DVector;

use super::nlp::{NlpConfig, TrajectoryNlp};
use crate::error::Result;

pub(crate) struct AlOutcome {
    pub xi: DVector<f64>,
    pub max_defect: f64,
    pub stationarity: f64,
    pub converged: bool,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
}

fn projected_gradient_norm(nlp: &TrajectoryNlp, xi: &DVector<f64>, g: &DVector<f64>) -> f64 {
    let mut norm: f64 = 0.0;
    for i in 0..xi.len() {
        let moved = (xi[i] - g[i]).clamp(nlp.lower[i], nlp.upper[i]);
        norm = norm.max((xi[i] - moved).abs());
    }
    norm
}

/// Variables allowed to move: not pinned (lo == hi) and not pushed outward
/// against an active bound.
fn free_mask(nlp: &TrajectoryNlp, xi: &DVector<f64>, g: &DVector<f64>) -> Vec<bool> {
    let tol = 1e-12;
    (0..xi.len())
        .map(|i| {
            if nlp.upper[i] - nlp.lower[i] <= tol {
                return false;
            }
            let at_lower = xi[i] - nlp.lower[i] <= tol * (1.0 + xi[i].abs());
            let at_upper = nlp.upper[i] - xi[i] <= tol * (1.0 + xi[i].abs());
            !(at_lower && g[i] > 0.0 || at_upper && g[i] < 0.0)
        })
        .collect()
}

fn mask(v: &mut DVector<f64>, free: &[bool]) {
    for i in 0..v.len() {
        if !free[i] {
            v[i] = 0.0;
        }
    }
}

struct InnerResult {
    xi: DVector<f64>,
    constraints: DVector<f64>,
    pg_norm: f64,
    iterations: usize,
}

/// Minimizes the augmented Lagrangian over the box to projected-gradient
/// tolerance `gtol`.
fn minimize_inner(
    nlp: &TrajectoryNlp,
    start: &DVector<f64>,
    lambda: &DVector<f64>,
    rho: f64,
    gtol: f64,
    max_newton: usize,
    cg_max: usize,
) -> Result<InnerResult> {
    let mut xi = start.clone();
    nlp.project(&mut xi);
    let mut blocks = nlp.blocks_all(&xi)?;
    let mut iterations = 0;
    let mut value = f64::INFINITY;
    let mut constraints = DVector::zeros(nlp.num_constraints());
    let mut pg = f64::INFINITY;

    for _ in 0..max_newton {
        let h = xi[nlp.idx_tf()] / nlp.n_grid as f64;
        let f: Vec<DVector<f64>> = blocks.iter().map(|b| b.f.clone()).collect();
        constraints = {
            // c from the cached dynamics.
            let nx = 2 * nlp.n_d;
            let mut c = DVector::zeros(nlp.num_constraints());
            for k in 0..nlp.n_grid {
                let x_k = xi.rows(nlp.idx_x(k), nx);
                let x_next = xi.rows(nlp.idx_x(k + 1), nx);
                let defect = &x_next - &x_k - (h / 2.0) * (&f[k] + &f[k + 1]);
                c.rows_mut(k * nx, nx).copy_from(&defect);
            }
            c
        };
        let y = lambda + rho * &constraints;
        let g = nlp.objective_gradient(&xi) + nlp.jac_transpose_vec(&blocks, h, &y);
        value = nlp.objective(&xi) + lambda.dot(&constraints)
            + 0.5 * rho * constraints.norm_squared();

        pg = projected_gradient_norm(nlp, &xi, &g);
        if pg <= gtol {
            break;
        }
        iterations += 1;

        // Newton-CG on the free subspace with the Gauss-Newton Hessian.
        let free = free_mask(nlp, &xi, &g);
        let mut rhs = -&g;
        mask(&mut rhs, &free);
        let hess_vec = |v: &DVector<f64>| -> DVector<f64> {
            let mut vv = v.clone();
            mask(&mut vv, &free);
            let jv = nlp.jac_vec(&blocks, h, &vv);
            let mut out = nlp.objective_hessian_vec(&vv) + rho * nlp.jac_transpose_vec(&blocks, h, &jv);
            mask(&mut out, &free);
            out
        };

        let mut d = DVector::zeros(nlp.dim());
        {
            let mut r = rhs.clone();
            let mut p = r.clone();
            let mut rs = r.norm_squared();
            let gnorm = rhs.norm();
            let cg_tol = (gnorm * gnorm.sqrt().min(0.5)).max(1e-14);
            for _ in 0..cg_max {
                if rs.sqrt() <= cg_tol {
                    break;
                }
                let hp = hess_vec(&p);
                let php = p.dot(&hp);
                if php <= 1e-14 * p.norm_squared() {
                    if d.norm() == 0.0 {
                        d = p.clone();
                    }
                    break;
                }
                let alpha = rs / php;
                d += alpha * &p;
                r -= alpha * &hp;
                let rs_new = r.norm_squared();
                p = &r + (rs_new / rs) * &p;
                rs = rs_new;
            }
            if d.norm() == 0.0 {
                d = rhs.clone();
            }
        }

        // Projected Armijo backtracking.
        let mut accepted = false;
        'search: for attempt in 0..2 {
            let dir = if attempt == 0 { d.clone() } else { -&g };
            let mut alpha = 1.0;
            for _ in 0..40 {
                let mut trial = &xi + alpha * &dir;
                nlp.project(&mut trial);
                let step = &trial - &xi;
                if step.norm() < 1e-16 {
                    break;
                }
                let decrease = g.dot(&step);
                if decrease < 0.0 {
                    let trial_value = nlp.al_value(&trial, lambda, rho)?;
                    if trial_value <= value + 1e-4 * decrease {
                        xi = trial;
                        blocks = nlp.blocks_all(&xi)?;
                        accepted = true;
                        break 'search;
                    }
                }
                alpha *= 0.5;
            }
        }
        if !accepted {
            break;
        }
    }

    // Refresh measures at the final iterate.
    if iterations > 0 || value.is_infinite() {
        let h = xi[nlp.idx_tf()] / nlp.n_grid as f64;
        let y_final = {
            constraints = nlp.constraints(&xi)?;
            lambda + rho * &constraints
        };
        let g = nlp.objective_gradient(&xi) + nlp.jac_transpose_vec(&blocks, h, &y_final);
        pg = projected_gradient_norm(nlp, &xi, &g);
    }
    Ok(InnerResult {
        xi,
        constraints,
        pg_norm: pg,
        iterations,
    })
}

/// Full augmented-Lagrangian solve from the NLP's initial guess.
pub(crate) fn minimize(nlp: &TrajectoryNlp, config: &NlpConfig) -> Result<AlOutcome> {
    let m = nlp.num_constraints();
    let mut xi = nlp.initial_guess.clone();
    nlp.project(&mut xi);
    let mut lambda = DVector::zeros(m);
    let mut rho = config.rho_init;
    let mut omega = 1e-2_f64;
    let omega_floor = config.tol_stationarity * 0.5;

    let mut inner_total = 0;
    let mut outer = 0;
    let mut best_xi = xi.clone();
    let mut best_defect = f64::INFINITY;
    let mut best_pg = f64::INFINITY;
    let mut prev_defect = f64::INFINITY;

    while outer < config.max_outer {
        outer += 1;
        let result = minimize_inner(
            nlp,
            &xi,
            &lambda,
            rho,
            omega.max(omega_floor),
            config.max_inner,
            200,
        )?;
        inner_total += result.iterations;
        xi = result.xi;
        let defect = result.constraints.amax();
        log::debug!(
            "outer {outer}: rho={rho:.1e} omega={omega:.1e} defect={defect:.3e} pg={:.3e} inner={}",
            result.pg_norm,
            result.iterations
        );

        if defect < best_defect || (defect <= best_defect && result.pg_norm < best_pg) {
            best_xi = xi.clone();
            best_defect = defect;
            best_pg = result.pg_norm;
        }

        if defect <= config.tol_defect && result.pg_norm <= config.tol_stationarity {
            return Ok(AlOutcome {
                xi,
                max_defect: defect,
                stationarity: result.pg_norm,
                converged: true,
                inner_iterations: inner_total,
                outer_iterations: outer,
            });
        }

        // First-order multiplier update every outer iteration; raise the
        // penalty only while feasibility stalls.
        lambda += rho * &result.constraints;
        if defect > 0.25 * prev_defect && defect > config.tol_defect {
            rho = (rho * 10.0).min(config.rho_max);
        }
        prev_defect = defect;
        omega = (omega / 4.0).max(omega_floor);
    }

    // Recompute the final measures at the best iterate seen.
    let c = nlp.constraints(&best_xi)?;
    let (g, _) = nlp.al_gradient(&best_xi, &lambda, rho)?;
    let pg = projected_gradient_norm(nlp, &best_xi, &g);
    Ok(AlOutcome {
        xi: best_xi,
        max_defect: c.amax(),
        stationarity: pg,
        converged: false,
        inner_iterations: inner_total,
        outer_iterations: outer,
    })
}
