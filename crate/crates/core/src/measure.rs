//! Finite measure spaces, μ-weighted inner products and subspaces held in
//! μ-orthonormal coordinates.
//!
//! Every downstream operator computation works in the orthonormal
//! coordinates of a [`Subspace`], so the Euclidean norm of a coefficient
//! vector equals the L²(μ) norm of the function it represents.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::FullSvd;

/// Default relative rank tolerance (relative to the largest singular value).
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Allowed deviation of the total mass of a [`Measure`] from one.
pub const MASS_TOL: f64 = 1e-12;

/// An atom identifier: either a name or a coordinate tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Coords(Vec<f64>),
    Name(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSpace {
    n: usize,
    labels: Option<Vec<Label>>,
}

impl DiscreteSpace {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSpace("a space needs at least one atom".into()));
        }
        Ok(Self { n, labels: None })
    }

    pub fn with_labels(labels: Vec<Label>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::InvalidSpace("a space needs at least one atom".into()));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if labels[i] == labels[j] {
                    return Err(Error::InvalidSpace(format!(
                        "labels of atoms {i} and {j} coincide"
                    )));
                }
            }
        }
        Ok(Self {
            n,
            labels: Some(labels),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> Option<&[Label]> {
        self.labels.as_deref()
    }
}

/// A strictly positive probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    weights: Vec<f64>,
    sqrt_weights: Vec<f64>,
}

impl Measure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::InvalidMeasure(format!(
                "weight {w} at atom {i} is not strictly positive"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {total}, not 1"
            )));
        }
        let sqrt_weights = weights.iter().map(|w| w.sqrt()).collect();
        Ok(Self {
            weights,
            sqrt_weights,
        })
    }

    /// Normalizes positive masses to a probability vector.
    pub fn from_masses(masses: &[f64]) -> Result<Self> {
        let total: f64 = masses.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidMeasure(format!("total mass {total}")));
        }
        Self::new(masses.iter().map(|m| m / total).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        Self::new(vec![1.0 / n as f64; n])
    }

    /// Product measure, atoms in row-major order (last factor fastest).
    pub fn product(factors: &[&Measure]) -> Result<Self> {
        let mut weights = vec![1.0];
        for f in factors {
            weights = weights
                .iter()
                .flat_map(|w| f.weights.iter().map(move |v| w * v))
                .collect();
        }
        Self::new(weights)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sqrt_weights(&self) -> &[f64] {
        &self.sqrt_weights
    }

    /// Σ_x μ(x) f(x)
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }
}

/// A real function on the atoms of a space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FunctionOnSpace(pub Vec<f64>);

impl FunctionOnSpace {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

impl From<Vec<f64>> for FunctionOnSpace {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl From<&DVector<f64>> for FunctionOnSpace {
    fn from(v: &DVector<f64>) -> Self {
        Self(v.iter().copied().collect())
    }
}

pub fn weighted_inner(f: &[f64], g: &[f64], mu: &Measure) -> Result<f64> {
    if f.len() != g.len() {
        return Err(Error::dim("weighted inner product operands", f.len(), g.len()));
    }
    if f.len() != mu.len() {
        return Err(Error::dim("weighted inner product measure", mu.len(), f.len()));
    }
    Ok(mu
        .weights()
        .iter()
        .zip(f.iter().zip(g))
        .map(|(w, (a, b))| w * a * b)
        .sum())
}

pub fn weighted_norm(f: &[f64], mu: &Measure) -> Result<f64> {
    Ok(weighted_inner(f, f, mu)?.sqrt())
}

/// max_x |f(x) − c(x)|
pub fn sup_distance(f: &[f64], c: &[f64]) -> Result<f64> {
    if f.len() != c.len() {
        return Err(Error::dim("sup distance operands", f.len(), c.len()));
    }
    Ok(f.iter()
        .zip(c)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
}

/// A non-trivial linear subspace of functions on a finite space.
///
/// `basis` has μ-orthonormal columns; `weighted` is `diag(√μ)·basis` and so
/// has Euclidean-orthonormal columns. `raw_to_basis` maps raw coefficients
/// to the orthonormal basis: `basis = raw · raw_to_basis`.
#[derive(Debug, Clone)]
pub struct Subspace {
    name: Option<String>,
    raw: DMatrix<f64>,
    basis: DMatrix<f64>,
    weighted: DMatrix<f64>,
    raw_to_basis: DMatrix<f64>,
}

impl Subspace {
    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn raw(&self) -> &DMatrix<f64> {
        &self.raw
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn weighted(&self) -> &DMatrix<f64> {
        &self.weighted
    }

    pub fn raw_to_basis(&self) -> &DMatrix<f64> {
        &self.raw_to_basis
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn n(&self) -> usize {
        self.basis.nrows()
    }

    /// Q·θ as a function on the space.
    pub fn function(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.basis * theta
    }

    /// Orthonormal coordinates of the μ-orthogonal projection of `f`.
    pub fn coordinates(&self, f: &[f64], mu: &Measure) -> DVector<f64> {
        let wf = DVector::from_iterator(f.len(), f.iter().zip(mu.weights()).map(|(v, w)| v * w));
        self.basis.transpose() * wf
    }

    /// Converts moments of the raw spanning functions into moments of the
    /// orthonormal basis functions.
    pub fn raw_moments_to_basis(&self, raw_moments: &[f64]) -> Result<DVector<f64>> {
        if raw_moments.len() != self.raw.ncols() {
            return Err(Error::dim("raw moment vector", self.raw.ncols(), raw_moments.len()));
        }
        Ok(self.raw_to_basis.transpose() * DVector::from_column_slice(raw_moments))
    }
}

/// Builds a [`Subspace`] from spanning columns via an SVD of `diag(√μ)·raw`.
///
/// Columns whose singular value falls below `rank_tol · σ_max` are dropped.
pub fn orthonormalize(raw: &DMatrix<f64>, mu: &Measure, rank_tol: f64) -> Result<Subspace> {
    let (n, d) = raw.shape();
    if n != mu.len() {
        return Err(Error::dim("subspace basis rows", mu.len(), n));
    }
    if d == 0 {
        return Err(Error::TrivialSubspace { name: None });
    }
    if !(rank_tol > 0.0) {
        return Err(Error::InvalidInput(format!("rank tolerance {rank_tol} must be positive")));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("subspace basis has non-finite entries".into()));
    }
    let mut w = raw.clone();
    for (i, s) in mu.sqrt_weights().iter().enumerate() {
        w.row_mut(i).scale_mut(*s);
    }
    // Left singular vectors of W are the right singular vectors of Wᵀ.
    let svd = FullSvd::new(&w.transpose());
    let sigma_max = svd.max();
    if !(sigma_max > 0.0) || !sigma_max.is_finite() {
        return Err(Error::TrivialSubspace { name: None });
    }
    let r = svd.rank(rank_tol);
    let mut weighted = svd.v.columns(0, r).into_owned();
    // Deterministic sign: largest-magnitude entry of each column positive.
    for j in 0..r {
        let pivot = weighted
            .column(j)
            .iter()
            .copied()
            .fold(0.0_f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            weighted.column_mut(j).neg_mut();
        }
    }
    let mut basis = weighted.clone();
    for (i, s) in mu.sqrt_weights().iter().enumerate() {
        basis.row_mut(i).unscale_mut(*s);
    }
    // raw_to_basis = W⁺ · weighted, exact because weighted lies in span(W).
    let w_svd = FullSvd::new(&w);
    let wr = w_svd.rank(rank_tol);
    let mut pinv = DMatrix::zeros(d, n);
    for k in 0..wr {
        let s = w_svd.singular_values[k];
        let vk = w_svd.v.column(k);
        // u_k = W v_k / s
        let uk = &w * vk / s;
        pinv += vk * uk.transpose() / s;
    }
    let raw_to_basis = pinv * &weighted;
    Ok(Subspace {
        name: None,
        raw: raw.clone(),
        basis,
        weighted,
        raw_to_basis,
    })
}

/// Dual potentials: one coefficient vector per subspace, in that subspace's
/// orthonormal coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialTuple {
    pub thetas: Vec<DVector<f64>>,
}

impl PotentialTuple {
    pub fn zeros(subspaces: &[Subspace]) -> Self {
        Self {
            thetas: subspaces.iter().map(|s| DVector::zeros(s.rank())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn stacked(&self) -> DVector<f64> {
        crate::linalg::stack_vectors(&self.thetas)
    }

    pub fn from_stacked(v: &DVector<f64>, subspaces: &[Subspace]) -> Self {
        let sizes: Vec<usize> = subspaces.iter().map(|s| s.rank()).collect();
        Self {
            thetas: crate::linalg::split_vector(v, &sizes),
        }
    }

    /// ‖h‖_Σ: the ℓ² norm over components of the component L²(μ) norms.
    pub fn sum_norm(&self) -> f64 {
        self.thetas.iter().map(|t| t.norm_squared()).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &PotentialTuple) -> PotentialTuple {
        PotentialTuple {
            thetas: self
                .thetas
                .iter()
                .zip(&other.thetas)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn add(&self, other: &PotentialTuple) -> PotentialTuple {
        PotentialTuple {
            thetas: self
                .thetas
                .iter()
                .zip(&other.thetas)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn check_shape(&self, subspaces: &[Subspace]) -> Result<()> {
        if self.thetas.len() != subspaces.len() {
            return Err(Error::dim("potential tuple components", subspaces.len(), self.thetas.len()));
        }
        for (i, (t, s)) in self.thetas.iter().zip(subspaces).enumerate() {
            if t.len() != s.rank() {
                return Err(Error::dim(format!("potential component {i}"), s.rank(), t.len()));
            }
        }
        Ok(())
    }
}

/// ⊕h = Σ_i h_i as a function on the space.
pub fn sum_field(h: &PotentialTuple, subspaces: &[Subspace]) -> Result<FunctionOnSpace> {
    h.check_shape(subspaces)?;
    let n = subspaces.first().map(|s| s.n()).unwrap_or(0);
    let mut field = DVector::zeros(n);
    for (theta, sub) in h.thetas.iter().zip(subspaces) {
        if sub.n() != n {
            return Err(Error::dim("subspace atom count", n, sub.n()));
        }
        field += sub.basis() * theta;
    }
    Ok(FunctionOnSpace::from(&field))
}
