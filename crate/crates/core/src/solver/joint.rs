use nalgebra::{DMatrix, DVector};

use super::objective::{
    decrease_along, hessian_block, increment_integral, moment_residuals, negative_mass, objective_from_field,
    primal_recover, riesz_gradient_from_field, shifted_field,
};
use super::{Solution, SolverConfig};
use crate::error::{Error, Result};
use crate::geometry::assemble_sum_operator;
use crate::linalg;
use crate::measure::PotentialTuple;
use crate::problem::Instance;

/// Newton's method on all potentials at once, restricted to (ker S)^⟂.
///
/// Serves as the reference optimum h̄ for gap computations.
pub fn joint_solve(inst: &Instance, cfg: &SolverConfig) -> Result<Solution> {
    let subs = inst.subspaces();
    let op = assemble_sum_operator(subs, inst.mu(), inst.rank_tol())?;
    let b = op.range_basis();

    let targets = linalg::stack_vectors(inst.targets());
    if op.kernel_dim() > 0 {
        let leak = (op.kernel_basis().transpose() * &targets).norm();
        if leak > 1e-10 * (1.0 + targets.norm()) {
            return Err(Error::Infeasible(format!(
                "targets are inconsistent on the kernel of the sum operator (component {leak:e}); the dual is unbounded"
            )));
        }
    }

    let q_all = linalg::hstack(&subs.iter().map(|s| s.basis()).collect::<Vec<_>>());

    let mut h = inst.initial_potentials();
    let mut s = shifted_field(inst, &h)?;
    let mut grad = riesz_gradient_from_field(inst, &s).stacked();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.joint_max_iter {
        let gnorm = grad.norm();
        if gnorm <= cfg.joint_grad_tol {
            converged = true;
            break;
        }
        let hess: DMatrix<f64> = hessian_block(inst, &s, &q_all);
        let reduced = b.transpose() * &hess * b;
        let g_red = b.transpose() * &grad;
        let chol = reduced.cholesky().ok_or(Error::SingularHessian(0))?;
        let d_red = -chol.solve(&g_red);
        let slope = g_red.dot(&d_red);
        let d: DVector<f64> = b * d_red;
        let dir = &q_all * &d;
        if !(slope < 0.0) {
            break;
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let ds = &dir * alpha;
            let dec = alpha * d.dot(&targets) - increment_integral(inst, &s, &ds);
            let trial = &s + ds;
            if dec.is_finite() && dec >= -cfg.armijo.c1 * alpha * slope {
                accepted = Some(trial);
                break;
            }
            alpha *= cfg.armijo.shrink;
        }
        let trial = match accepted {
            Some(t) => t,
            None => {
                let trial = &s + &dir;
                let g_trial = riesz_gradient_from_field(inst, &trial).stacked();
                if trial.iter().all(|v| v.is_finite()) && g_trial.norm() < gnorm {
                    alpha = 1.0;
                    trial
                } else {
                    break;
                }
            }
        };
        h = PotentialTuple::from_stacked(&(h.stacked() + &d * alpha), subs);
        s = trial;
        grad = riesz_gradient_from_field(inst, &s).stacked();
        iterations += 1;
    }

    let residual = grad.norm();
    if !converged {
        if residual <= 1e3 * cfg.joint_grad_tol {
            converged = true;
        } else {
            return Err(Error::JointNotConverged { iterations, residual });
        }
    }

    let density = primal_recover(inst, &h)?;
    Ok(Solution {
        negative_mass: negative_mass(density.values(), inst),
        moment_residuals: moment_residuals(inst, density.values())?,
        f_value: objective_from_field(inst, &h, &s),
        potentials: h,
        primal_density: density,
        grad_norm: residual,
        iterations,
        converged,
    })
}

/// F(h) − F(h̄) for a reference optimum h̄, free of cancellation.
///
/// The step h̄ − h is taken modulo ker S, on which F is constant.
pub fn optimality_gap(inst: &Instance, h: &PotentialTuple, optimum: &PotentialTuple) -> Result<f64> {
    let s = shifted_field(inst, h)?;
    optimum.check_shape(inst.subspaces())?;
    let op = assemble_sum_operator(inst.subspaces(), inst.mu(), inst.rank_tol())?;
    let step = op.project_off_kernel(&optimum.sub(h).stacked());
    Ok(decrease_along(inst, &s, &PotentialTuple::from_stacked(&step, inst.subspaces())))
}
