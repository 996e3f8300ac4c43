use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ipfp::drive;
use super::{IterateTrace, Solution, SolverConfig};
use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::measure::Subspace;
use crate::problem::Instance;

/// Shape of a two-factor product space; atoms are stored row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductShape {
    pub n1: usize,
    pub n2: usize,
}

impl ProductShape {
    pub fn new(n1: usize, n2: usize) -> Self {
        Self { n1, n2 }
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Indicators of x₁ = a (axis 0) or x₂ = b (axis 1) as columns.
    pub fn marginal_indicators(&self, axis: usize) -> DMatrix<f64> {
        let k = if axis == 0 { self.n1 } else { self.n2 };
        DMatrix::from_fn(self.len(), k, |x, a| {
            let coord = if axis == 0 { x / self.n2 } else { x % self.n2 };
            if coord == a {
                1.0
            } else {
                0.0
            }
        })
    }
}

fn spans_indicators(sub: &Subspace, inst: &Instance, ind: &DMatrix<f64>) -> bool {
    if sub.rank() != ind.ncols() {
        return false;
    }
    let mu = inst.mu();
    (0..ind.ncols()).all(|a| {
        let col: Vec<f64> = ind.column(a).iter().copied().collect();
        let proj = sub.function(&sub.coordinates(&col, mu));
        col.iter().zip(proj.iter()).all(|(u, v)| (u - v).abs() < 1e-9)
    })
}

fn log_sum_exp(vals: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = vals.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Classical log-domain Sinkhorn for a two-marginal KL problem.
///
/// Each half-step rescales one marginal in closed form:
/// f(a) = log m₁(a) − log Σ_b μ(a, b)·exp(g(b) − c(a, b)),
/// which is the exact minimizer of F over the first subspace. The trace
/// uses the same schema as [`run_ipfp`](super::run_ipfp).
pub fn sinkhorn_closed_form(inst: &Instance, shape: ProductShape, cfg: &SolverConfig) -> Result<(IterateTrace, Solution)> {
    if inst.divergence() != Divergence::Kl {
        return Err(Error::Precondition("closed-form Sinkhorn requires the kl divergence".into()));
    }
    if inst.n_subspaces() != 2 {
        return Err(Error::Precondition(format!(
            "closed-form Sinkhorn requires two subspaces, got {}",
            inst.n_subspaces()
        )));
    }
    if shape.len() != inst.n() {
        return Err(Error::Precondition(format!(
            "product shape {}×{} does not match {} atoms",
            shape.n1,
            shape.n2,
            inst.n()
        )));
    }
    let indicators = [shape.marginal_indicators(0), shape.marginal_indicators(1)];
    for (i, ind) in indicators.iter().enumerate() {
        if !spans_indicators(&inst.subspaces()[i], inst, ind) {
            return Err(Error::Precondition(format!(
                "subspace {i} is not spanned by the marginal indicators of coordinate {}",
                i + 1
            )));
        }
    }

    // log of the prescribed marginal masses
    let mut log_marginals = Vec::with_capacity(2);
    for (i, ind) in indicators.iter().enumerate() {
        let mut logs = Vec::with_capacity(ind.ncols());
        for a in 0..ind.ncols() {
            let col: Vec<f64> = ind.column(a).iter().copied().collect();
            let m = inst.target_moment(i, &col);
            if !(m > 0.0) {
                return Err(Error::Infeasible(format!(
                    "marginal {} has non-positive target mass {m} at atom {a}",
                    i + 1
                )));
            }
            logs.push(m.ln());
        }
        log_marginals.push(logs);
    }
    let log_mu: Vec<f64> = inst.mu().weights().iter().map(|w| w.ln()).collect();

    drive(inst, cfg, inst.initial_potentials(), |h, s, i| {
        let sub = &inst.subspaces()[i];
        let old = sub.function(&h.thetas[i]);
        // rest = ⊕_{j≠i} h_j − c
        let rest: DVector<f64> = &*s - &old;
        let k = if i == 0 { shape.n1 } else { shape.n2 };
        let atoms = |a: usize| -> Vec<usize> {
            if i == 0 {
                (0..shape.n2).map(|b| a * shape.n2 + b).collect()
            } else {
                (0..shape.n1).map(|b| b * shape.n2 + a).collect()
            }
        };
        let mut values = vec![0.0; inst.n()];
        for a in 0..k {
            let idx = atoms(a);
            let lse = log_sum_exp(idx.iter().map(|&x| log_mu[x] + rest[x]));
            let f = log_marginals[i][a] - lse;
            for x in idx {
                values[x] = f;
            }
        }
        h.thetas[i] = sub.coordinates(&values, inst.mu());
        *s = rest + DVector::from_vec(values);
        Ok(())
    })
}
