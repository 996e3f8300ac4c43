use nalgebra::DVector;

use super::objective::{hessian_block, increment_integral, partial_gradient_from_field, shifted_field};
use super::SolverConfig;
use crate::error::{Error, Result};
use crate::measure::PotentialTuple;
use crate::problem::Instance;

/// Exact minimization of F over the `i`-th component, all others fixed.
///
/// Damped Newton with Armijo backtracking on the moment-matching equation
/// Q_iᵀ diag(μ) ψ′(⊕h − c) = t_i. Returns the new θ_i.
pub fn coordinate_minimize(inst: &Instance, h: &PotentialTuple, i: usize, cfg: &SolverConfig) -> Result<DVector<f64>> {
    if i >= inst.n_subspaces() {
        return Err(Error::InvalidInput(format!("no subspace {i}")));
    }
    let mut h = h.clone();
    let mut s = shifted_field(inst, &h)?;
    minimize_in_place(inst, &mut h, &mut s, i, cfg)?;
    Ok(h.thetas.swap_remove(i))
}

/// Updates `h.thetas[i]` and keeps `s = ⊕h − c` in sync. Returns the
/// number of Newton steps taken.
pub(crate) fn minimize_in_place(
    inst: &Instance,
    h: &mut PotentialTuple,
    s: &mut DVector<f64>,
    i: usize,
    cfg: &SolverConfig,
) -> Result<usize> {
    let q = inst.subspaces()[i].basis();
    let target = &inst.targets()[i];

    let mut g = partial_gradient_from_field(inst, s, i);
    for iter in 0..cfg.inner_max_iter {
        let gnorm = g.norm();
        if gnorm <= cfg.inner_grad_tol {
            return Ok(iter);
        }
        let hess = hessian_block(inst, s, q);
        let chol = hess.cholesky().ok_or(Error::SingularHessian(i))?;
        let d = -chol.solve(&g);
        let slope = g.dot(&d);
        if !(slope < 0.0) {
            return Err(Error::SingularHessian(i));
        }
        let dir = q * &d;

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let ds = &dir * alpha;
            // F(θ) − F(θ + αd), accurate near the optimum
            let dec = alpha * d.dot(target) - increment_integral(inst, s, &ds);
            let trial = &*s + ds;
            if dec.is_finite() && dec >= -cfg.armijo.c1 * alpha * slope {
                accepted = Some(trial);
                break;
            }
            alpha *= cfg.armijo.shrink;
        }
        let trial = match accepted {
            Some(t) => t,
            None => {
                // Round-off floor: the decrease is no longer resolvable.
                // Take the Newton step if it still shrinks the gradient.
                let trial = &*s + &dir;
                let g_trial = partial_gradient_from_field(inst, &trial, i);
                if trial.iter().all(|v| v.is_finite()) && g_trial.norm() < gnorm {
                    alpha = 1.0;
                    trial
                } else if gnorm <= 1e3 * cfg.inner_grad_tol {
                    return Ok(iter);
                } else {
                    return Err(Error::InnerNotConverged {
                        subspace: i,
                        iterations: iter,
                        residual: gnorm,
                    });
                }
            }
        };
        h.thetas[i] += &d * alpha;
        *s = trial;
        g = partial_gradient_from_field(inst, s, i);
    }
    let residual = g.norm();
    if residual <= cfg.inner_grad_tol {
        return Ok(cfg.inner_max_iter);
    }
    Err(Error::InnerNotConverged {
        subspace: i,
        iterations: cfg.inner_max_iter,
        residual,
    })
}
