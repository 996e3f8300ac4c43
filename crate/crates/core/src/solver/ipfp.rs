use nalgebra::DVector;

use super::coordinate::minimize_in_place;
use super::objective::{
    decrease_along, moment_residuals, negative_mass, objective_from_field, primal_recover,
    riesz_gradient_from_field, shifted_field,
};
use super::{FinalState, IterateTrace, Solution, SolverConfig, SweepRecord};
use crate::error::{Error, Result};
use crate::geometry::{assemble_sum_operator, SumOperator};
use crate::measure::PotentialTuple;
use crate::problem::Instance;

fn sup(s: &DVector<f64>) -> f64 {
    s.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Runs the dual IPFP: each sweep minimizes F exactly over H₁, …, H_N in turn.
pub fn run_ipfp(inst: &Instance, cfg: &SolverConfig) -> Result<(IterateTrace, Solution)> {
    drive(inst, cfg, inst.initial_potentials(), |h, s, i| {
        minimize_in_place(inst, h, s, i, cfg).map(|_| ())
    })
}

/// Shared sweep loop. `update` must replace `h.thetas[i]` by the exact
/// minimizer over the `i`-th subspace and refresh `s = ⊕h − c`.
pub(crate) fn drive<U>(inst: &Instance, cfg: &SolverConfig, h0: PotentialTuple, mut update: U) -> Result<(IterateTrace, Solution)>
where
    U: FnMut(&mut PotentialTuple, &mut DVector<f64>, usize) -> Result<()>,
{
    let op: SumOperator = assemble_sum_operator(inst.subspaces(), inst.mu(), inst.rank_tol())?;
    let mut h = h0;
    let mut s = shifted_field(inst, &h)?;
    let mut f = objective_from_field(inst, &h, &s);
    let mut grad = riesz_gradient_from_field(inst, &s);

    let mut sweeps = Vec::new();
    let mut snapshots = cfg.record_intermediates.then(|| vec![h.clone()]);
    let mut converged = false;

    for t in 0..cfg.max_sweeps {
        let grad_stack = grad.stacked();
        let grad_sum_norm = grad_stack.norm();
        let grad_quotient_norm = op.project_off_kernel(&grad_stack).norm();
        let mut radius = sup(&s);
        if radius > cfg.radius_guard {
            return Err(Error::UnboundedIterates { sweep: t, radius, guard: cfg.radius_guard });
        }

        let h_prev = h.clone();
        let s_prev = s.clone();
        for i in 0..inst.n_subspaces() {
            update(&mut h, &mut s, i)?;
            let r = sup(&s);
            if !r.is_finite() || r > cfg.radius_guard {
                return Err(Error::UnboundedIterates { sweep: t, radius: r, guard: cfg.radius_guard });
            }
            radius = radius.max(r);
        }

        let step = h.sub(&h_prev);
        let step_stack = step.stacked();
        let decrease = decrease_along(inst, &s_prev, &step);
        sweeps.push(SweepRecord {
            sweep: t,
            f_value: f,
            grad_sum_norm,
            grad_quotient_norm,
            radius,
            step_sq: step_stack.norm_squared(),
            step_quotient_norm: op.project_off_kernel(&step_stack).norm(),
            step_image_norm: (op.assembled() * &step_stack).norm(),
            decrease,
        });
        if let Some(snaps) = snapshots.as_mut() {
            snaps.push(h.clone());
        }

        f = objective_from_field(inst, &h, &s);
        grad = riesz_gradient_from_field(inst, &s);
        if grad.stacked().norm() <= cfg.sweep_tol {
            converged = true;
            break;
        }
    }

    let grad_stack = grad.stacked();
    let grad_sum_norm = grad_stack.norm();
    let final_state = FinalState {
        sweep: sweeps.len(),
        f_value: f,
        grad_sum_norm,
        grad_quotient_norm: op.project_off_kernel(&grad_stack).norm(),
        radius: sup(&s),
    };
    let density = primal_recover(inst, &h)?;
    let residuals = moment_residuals(inst, density.values())?;
    let solution = Solution {
        negative_mass: negative_mass(density.values(), inst),
        potentials: h,
        f_value: f,
        primal_density: density,
        moment_residuals: residuals,
        grad_norm: grad_sum_norm,
        iterations: sweeps.len(),
        converged,
    };
    let trace = IterateTrace {
        sweeps,
        final_state,
        snapshots,
        converged,
    };
    Ok((trace, solution))
}
