//! Problem instances: reference measure, cost, constraint subspaces and
//! their moment targets.

use nalgebra::{DMatrix, DVector};

use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::measure::{
    orthonormalize, DiscreteSpace, FunctionOnSpace, Label, Measure, PotentialTuple, Subspace,
    DEFAULT_RANK_TOL,
};

/// A divergence-regularized projection problem
///
/// minimize ∫ c dπ + D_φ(π‖μ) subject to ∫ h_i dπ = target_i(h_i) for h_i ∈ H_i,
///
/// with the cost already divided by the regularization strength ε.
#[derive(Debug, Clone)]
pub struct Instance {
    space: DiscreteSpace,
    mu: Measure,
    cost: FunctionOnSpace,
    unscaled_cost: Vec<f64>,
    epsilon: f64,
    subspaces: Vec<Subspace>,
    targets: Vec<DVector<f64>>,
    raw_targets: Vec<Option<Vec<f64>>>,
    initial_raw: Option<Vec<Vec<f64>>>,
    divergence: Divergence,
    rank_tol: f64,
}

/// μ-moments of the orthonormal basis: Qᵀ·diag(μ)·1.
pub fn default_targets(sub: &Subspace, mu: &Measure) -> DVector<f64> {
    sub.coordinates(&vec![1.0; mu.len()], mu)
}

impl Instance {
    pub fn new(mu: Measure, cost: Vec<f64>, subspaces: Vec<Subspace>, divergence: Divergence) -> Result<Self> {
        let n = mu.len();
        if cost.len() != n {
            return Err(Error::dim("cost", n, cost.len()));
        }
        if cost.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("cost has non-finite entries".into()));
        }
        if subspaces.is_empty() {
            return Err(Error::InvalidInput("at least one constraint subspace is required".into()));
        }
        for (i, s) in subspaces.iter().enumerate() {
            if s.n() != n {
                return Err(Error::dim(format!("subspace {i} atoms"), n, s.n()));
            }
        }
        let targets = subspaces.iter().map(|s| default_targets(s, &mu)).collect();
        let raw_targets = vec![None; subspaces.len()];
        Ok(Self {
            space: DiscreteSpace::new(n)?,
            mu,
            cost: FunctionOnSpace(cost.clone()),
            unscaled_cost: cost,
            epsilon: 1.0,
            subspaces,
            targets,
            raw_targets,
            initial_raw: None,
            divergence,
            rank_tol: DEFAULT_RANK_TOL,
        })
    }

    /// Builds subspaces from raw spanning columns.
    pub fn from_raw(mu: Measure, cost: Vec<f64>, raw: &[(Option<String>, DMatrix<f64>)], divergence: Divergence, rank_tol: f64) -> Result<Self> {
        let subspaces = raw
            .iter()
            .map(|(name, m)| {
                let s = orthonormalize(m, &mu, rank_tol).map_err(|e| match e {
                    Error::TrivialSubspace { .. } => Error::TrivialSubspace { name: name.clone() },
                    other => other,
                })?;
                Ok(match name {
                    Some(n) => s.with_name(n.clone()),
                    None => s,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut inst = Self::new(mu, cost, subspaces, divergence)?;
        inst.rank_tol = rank_tol;
        Ok(inst)
    }

    pub fn with_labels(mut self, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != self.mu.len() {
            return Err(Error::dim("labels", self.mu.len(), labels.len()));
        }
        self.space = DiscreteSpace::with_labels(labels)?;
        Ok(self)
    }

    /// Sets the regularization strength; the working cost becomes c/ε.
    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidInput(format!("epsilon {epsilon} must be positive")));
        }
        self.epsilon = epsilon;
        self.cost = FunctionOnSpace(self.unscaled_cost.iter().map(|c| c / epsilon).collect());
        Ok(self)
    }

    /// Sets the targets of subspace `i` as moments of its raw spanning columns.
    pub fn with_raw_targets(mut self, i: usize, moments: Vec<f64>) -> Result<Self> {
        let sub = self
            .subspaces
            .get(i)
            .ok_or_else(|| Error::InvalidInput(format!("no subspace {i}")))?;
        self.targets[i] = sub.raw_moments_to_basis(&moments)?;
        self.raw_targets[i] = Some(moments);
        Ok(self)
    }

    /// Starting potentials given as coefficients of the raw spanning columns.
    pub fn with_initial_raw(mut self, coeffs: Vec<Vec<f64>>) -> Result<Self> {
        if coeffs.len() != self.subspaces.len() {
            return Err(Error::dim("initial potentials", self.subspaces.len(), coeffs.len()));
        }
        for (i, (c, s)) in coeffs.iter().zip(&self.subspaces).enumerate() {
            if c.len() != s.raw().ncols() {
                return Err(Error::dim(format!("initial potential {i}"), s.raw().ncols(), c.len()));
            }
        }
        self.initial_raw = Some(coeffs);
        Ok(self)
    }

    pub fn with_divergence(mut self, divergence: Divergence) -> Self {
        self.divergence = divergence;
        self
    }

    pub fn with_rank_tol(mut self, rank_tol: f64) -> Self {
        self.rank_tol = rank_tol;
        self
    }

    pub fn space(&self) -> &DiscreteSpace {
        &self.space
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &Measure {
        &self.mu
    }

    /// Working cost c/ε.
    pub fn cost(&self) -> &FunctionOnSpace {
        &self.cost
    }

    pub fn unscaled_cost(&self) -> &[f64] {
        &self.unscaled_cost
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn subspaces(&self) -> &[Subspace] {
        &self.subspaces
    }

    pub fn n_subspaces(&self) -> usize {
        self.subspaces.len()
    }

    pub fn targets(&self) -> &[DVector<f64>] {
        &self.targets
    }

    pub fn raw_targets(&self) -> &[Option<Vec<f64>>] {
        &self.raw_targets
    }

    pub fn initial_raw(&self) -> Option<&[Vec<f64>]> {
        self.initial_raw.as_deref()
    }

    pub fn divergence(&self) -> Divergence {
        self.divergence
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    /// Starting point h⁰: the supplied potentials, or zero.
    pub fn initial_potentials(&self) -> PotentialTuple {
        match &self.initial_raw {
            None => PotentialTuple::zeros(&self.subspaces),
            Some(coeffs) => PotentialTuple {
                thetas: coeffs
                    .iter()
                    .zip(&self.subspaces)
                    .map(|(c, s)| {
                        let f = s.raw() * DVector::from_column_slice(c);
                        s.coordinates(f.as_slice(), &self.mu)
                    })
                    .collect(),
            },
        }
    }

    /// Moments ∫ f dπ* prescribed for an arbitrary f in subspace `i`.
    pub fn target_moment(&self, i: usize, f: &[f64]) -> f64 {
        self.subspaces[i].coordinates(f, &self.mu).dot(&self.targets[i])
    }
}
