//! Dual IPFP: cyclic exact minimization of F over one subspace at a time,
//! a joint Newton solver used as the reference optimum, and the classical
//! closed-form Sinkhorn iteration for two-marginal KL problems.

mod coordinate;
mod ipfp;
mod joint;
pub mod objective;
mod sinkhorn;

use serde::Serialize;

use crate::measure::{FunctionOnSpace, PotentialTuple};

pub use coordinate::coordinate_minimize;
pub use ipfp::run_ipfp;
pub use joint::{joint_solve, optimality_gap};
pub use objective::{
    dual_decrease, dual_objective, moment_residuals, negative_mass, partial_gradient, primal_recover,
    riesz_gradient, shifted_field,
};
pub use sinkhorn::{sinkhorn_closed_form, ProductShape};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Armijo {
    pub c1: f64,
    pub shrink: f64,
}

impl Default for Armijo {
    fn default() -> Self {
        Self { c1: 1e-4, shrink: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_sweeps: usize,
    /// Stop once ‖dF(h, ·)‖_Σ falls below this.
    pub sweep_tol: f64,
    pub inner_max_iter: usize,
    pub inner_grad_tol: f64,
    pub armijo: Armijo,
    /// Keep h^t for every sweep in the trace.
    pub record_intermediates: bool,
    /// Abort once ‖⊕h − c‖_∞ exceeds this along the iteration.
    pub radius_guard: f64,
    pub joint_grad_tol: f64,
    pub joint_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 10_000,
            sweep_tol: 1e-10,
            inner_max_iter: 100,
            inner_grad_tol: 1e-12,
            armijo: Armijo::default(),
            record_intermediates: false,
            radius_guard: 50.0,
            joint_grad_tol: 1e-12,
            joint_max_iter: 500,
        }
    }
}

/// Quantities measured for one sweep h^t → h^{t+1}.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub sweep: usize,
    /// F(h^t)
    pub f_value: f64,
    /// ‖dF(h^t, ·)‖_Σ
    pub grad_sum_norm: f64,
    /// ‖dF̂([h^t], ·)‖_∼
    pub grad_quotient_norm: f64,
    /// max ‖⊕h − c‖_∞ over h^t and the sweep's intermediate iterates
    pub radius: f64,
    /// ‖h^{t+1} − h^t‖_Σ²
    pub step_sq: f64,
    /// ‖[h^{t+1} − h^t]‖_∼
    pub step_quotient_norm: f64,
    /// ‖S(h^{t+1} − h^t)‖_{L²(μ)}
    pub step_image_norm: f64,
    /// F(h^t) − F(h^{t+1})
    pub decrease: f64,
}

/// State after the last sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalState {
    pub sweep: usize,
    pub f_value: f64,
    pub grad_sum_norm: f64,
    pub grad_quotient_norm: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateTrace {
    pub sweeps: Vec<SweepRecord>,
    pub final_state: FinalState,
    /// h^0, …, h^T when intermediates are recorded.
    pub snapshots: Option<Vec<PotentialTuple>>,
    pub converged: bool,
}

impl IterateTrace {
    pub fn max_radius(&self) -> f64 {
        self.sweeps
            .iter()
            .map(|r| r.radius)
            .fold(self.final_state.radius, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub potentials: PotentialTuple,
    pub f_value: f64,
    pub primal_density: FunctionOnSpace,
    pub moment_residuals: Vec<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// μ-mass of negative density (only possible for the quadratic divergence)
    pub negative_mass: f64,
}
