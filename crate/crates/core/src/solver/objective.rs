//! The dual objective F(h) = Σ_x μ(x) ψ(⊕h(x) − c(x)) − Σ_i ⟨θ_i, t_i⟩,
//! its partial gradients and the primal recovery map.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::measure::{FunctionOnSpace, PotentialTuple};
use crate::problem::Instance;

/// ⊕h − c as a vector over atoms.
pub fn shifted_field(inst: &Instance, h: &PotentialTuple) -> Result<DVector<f64>> {
    h.check_shape(inst.subspaces())?;
    let mut s = -DVector::from_column_slice(inst.cost().values());
    for (theta, sub) in h.thetas.iter().zip(inst.subspaces()) {
        s += sub.basis() * theta;
    }
    Ok(s)
}

fn linear_term(inst: &Instance, h: &PotentialTuple) -> f64 {
    h.thetas.iter().zip(inst.targets()).map(|(th, t)| th.dot(t)).sum()
}

pub(crate) fn objective_from_field(inst: &Instance, h: &PotentialTuple, s: &DVector<f64>) -> f64 {
    let div = inst.divergence();
    let integral: f64 = inst
        .mu()
        .weights()
        .iter()
        .zip(s.iter())
        .map(|(w, &v)| w * div.psi(v))
        .sum();
    integral - linear_term(inst, h)
}

pub fn dual_objective(inst: &Instance, h: &PotentialTuple) -> Result<f64> {
    let s = shifted_field(inst, h)?;
    Ok(objective_from_field(inst, h, &s))
}

/// F(from) − F(to), evaluated without subtracting two large values.
pub fn dual_decrease(inst: &Instance, from: &PotentialTuple, to: &PotentialTuple) -> Result<f64> {
    let s_from = shifted_field(inst, from)?;
    to.check_shape(inst.subspaces())?;
    Ok(decrease_along(inst, &s_from, &to.sub(from)))
}

/// F(h) − F(h + step) given s = ⊕h − c.
///
/// The field increment is rebuilt from `step` itself so that the integral
/// and the linear term cancel consistently.
pub(crate) fn decrease_along(inst: &Instance, s: &DVector<f64>, step: &PotentialTuple) -> f64 {
    let mut ds = DVector::zeros(s.len());
    for (d, sub) in step.thetas.iter().zip(inst.subspaces()) {
        ds += sub.basis() * d;
    }
    let linear: f64 = step.thetas.iter().zip(inst.targets()).map(|(d, t)| d.dot(t)).sum();
    linear - increment_integral(inst, s, &ds)
}

/// Σ_x μ(x)·(ψ(s(x) + d(x)) − ψ(s(x))).
pub(crate) fn increment_integral(inst: &Instance, s: &DVector<f64>, d: &DVector<f64>) -> f64 {
    let div = inst.divergence();
    inst.mu()
        .weights()
        .iter()
        .zip(s.iter().zip(d.iter()))
        .map(|(w, (&a, &b))| w * div.psi_increment(a, b))
        .sum()
}

/// μ(x)·ψ′(s(x)) per atom.
pub(crate) fn weighted_density(inst: &Instance, s: &DVector<f64>) -> DVector<f64> {
    let div = inst.divergence();
    DVector::from_iterator(
        s.len(),
        inst.mu().weights().iter().zip(s.iter()).map(|(w, &v)| w * div.psi_prime(v)),
    )
}

pub(crate) fn partial_gradient_from_field(inst: &Instance, s: &DVector<f64>, i: usize) -> DVector<f64> {
    let wd = weighted_density(inst, s);
    inst.subspaces()[i].basis().transpose() * wd - &inst.targets()[i]
}

pub(crate) fn riesz_gradient_from_field(inst: &Instance, s: &DVector<f64>) -> PotentialTuple {
    let wd = weighted_density(inst, s);
    PotentialTuple {
        thetas: inst
            .subspaces()
            .iter()
            .zip(inst.targets())
            .map(|(sub, t)| sub.basis().transpose() * &wd - t)
            .collect(),
    }
}

/// Q_iᵀ·diag(μ)·ψ′(⊕h − c) − t_i: the Riesz representative of ∂F/∂h_i.
pub fn partial_gradient(inst: &Instance, h: &PotentialTuple, i: usize) -> Result<DVector<f64>> {
    if i >= inst.n_subspaces() {
        return Err(Error::InvalidInput(format!("no subspace {i}")));
    }
    let s = shifted_field(inst, h)?;
    Ok(partial_gradient_from_field(inst, &s, i))
}

/// All partial gradients stacked; its ℓ² norm is ‖dF(h, ·)‖_Σ.
pub fn riesz_gradient(inst: &Instance, h: &PotentialTuple) -> Result<PotentialTuple> {
    let s = shifted_field(inst, h)?;
    Ok(riesz_gradient_from_field(inst, &s))
}

/// Qᵀ·diag(μ ψ″(s))·Q for an arbitrary basis block `q`.
pub(crate) fn hessian_block(inst: &Instance, s: &DVector<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let div = inst.divergence();
    let mut weighted = q.clone();
    for (x, (&w, &v)) in inst.mu().weights().iter().zip(s.iter()).enumerate() {
        weighted.row_mut(x).scale_mut(w * div.psi_second(v));
    }
    q.transpose() * weighted
}

/// dπ/dμ = ψ′(⊕h − c).
pub fn primal_recover(inst: &Instance, h: &PotentialTuple) -> Result<FunctionOnSpace> {
    let s = shifted_field(inst, h)?;
    let div = inst.divergence();
    Ok(FunctionOnSpace(s.iter().map(|&v| div.psi_prime(v)).collect()))
}

/// ‖Q_iᵀ diag(μ) ρ − t_i‖₂ per subspace.
pub fn moment_residuals(inst: &Instance, density: &[f64]) -> Result<Vec<f64>> {
    if density.len() != inst.n() {
        return Err(Error::dim("density", inst.n(), density.len()));
    }
    Ok(inst
        .subspaces()
        .iter()
        .zip(inst.targets())
        .map(|(sub, t)| (sub.coordinates(density, inst.mu()) - t).norm())
        .collect())
}

/// Total μ-mass where a (quadratic-divergence) density is negative.
pub fn negative_mass(density: &[f64], inst: &Instance) -> f64 {
    density
        .iter()
        .zip(inst.mu().weights())
        .filter(|(r, _)| **r < 0.0)
        .map(|(r, w)| -r * w)
        .sum()
}
