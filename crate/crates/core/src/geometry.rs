//! Geometry of the sum operator S(h₁, …, h_N) = h₁ + … + h_N.
//!
//! All operators are represented in the orthonormal coordinates of the
//! constituent subspaces, so operator norms on the quotient modulo ker S are
//! read off the singular values of the assembled matrix
//! `A = [diag(√μ)·Q₁, …, diag(√μ)·Q_N]`:
//!
//! * ‖Ŝ‖ = σ_max(A),
//! * ‖Ŝ⁻¹‖ = 1/σ_min⁺(A) (smallest singular value above the rank tolerance),
//! * ker S = null(A) in coefficient space.
//!
//! For two subspaces the same numbers follow from the Friedrichs angle:
//! ‖Ŝ‖ = √(1 + cos) (trivial intersection) or √2, and ‖Ŝ⁻¹‖ = (1 − cos)^{-1/2}.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, FullSvd};
use crate::measure::{orthonormalize, Measure, PotentialTuple, Subspace};

#[derive(Debug, Clone)]
pub struct SumOperator {
    block_sizes: Vec<usize>,
    assembled: DMatrix<f64>,
    singular_values: Vec<f64>,
    kernel_basis: DMatrix<f64>,
    range_basis: DMatrix<f64>,
    rank_tol: f64,
    rank: usize,
    /// Indices of subspaces contained in the span of the others.
    contained: Vec<usize>,
}

impl SumOperator {
    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    pub fn n_blocks(&self) -> usize {
        self.block_sizes.len()
    }

    pub fn assembled(&self) -> &DMatrix<f64> {
        &self.assembled
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// Euclidean-orthonormal basis of ker S in stacked coefficient space.
    pub fn kernel_basis(&self) -> &DMatrix<f64> {
        &self.kernel_basis
    }

    /// Orthonormal basis of (ker S)^⟂ in stacked coefficient space.
    pub fn range_basis(&self) -> &DMatrix<f64> {
        &self.range_basis
    }

    pub fn kernel_dim(&self) -> usize {
        self.kernel_basis.ncols()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    /// Standing-assumption violations: subspaces lying inside the sum of the rest.
    pub fn contained_blocks(&self) -> &[usize] {
        &self.contained
    }

    pub fn standing_assumption_holds(&self) -> bool {
        self.contained.is_empty()
    }

    /// ‖S h‖_{L²(μ)} = ‖A θ‖₂.
    pub fn image_norm(&self, h: &PotentialTuple) -> Result<f64> {
        let v = self.stacked_checked(h)?;
        Ok((&self.assembled * v).norm())
    }

    /// Removes the ker S component of a stacked coefficient vector.
    pub fn project_off_kernel(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.kernel_dim() == 0 {
            return v.clone();
        }
        let k = &self.kernel_basis;
        v - k * (k.transpose() * v)
    }

    fn stacked_checked(&self, h: &PotentialTuple) -> Result<DVector<f64>> {
        if h.thetas.len() != self.block_sizes.len() {
            return Err(Error::dim("potential blocks", self.block_sizes.len(), h.thetas.len()));
        }
        for (i, (t, &s)) in h.thetas.iter().zip(&self.block_sizes).enumerate() {
            if t.len() != s {
                return Err(Error::dim(format!("potential block {i}"), s, t.len()));
            }
        }
        Ok(h.stacked())
    }
}

/// Builds S in orthonormal coordinates and extracts its spectrum and kernel.
pub fn assemble_sum_operator(subspaces: &[Subspace], mu: &Measure, rank_tol: f64) -> Result<SumOperator> {
    if subspaces.is_empty() {
        return Err(Error::InvalidInput("at least one subspace is required".into()));
    }
    for (i, s) in subspaces.iter().enumerate() {
        if s.n() != mu.len() {
            return Err(Error::dim(format!("subspace {i} atoms"), mu.len(), s.n()));
        }
    }
    let blocks: Vec<&DMatrix<f64>> = subspaces.iter().map(|s| s.weighted()).collect();
    let assembled = linalg::hstack(&blocks);
    let svd = FullSvd::new(&assembled);
    let rank = svd.rank(rank_tol);
    let kernel_basis = svd.null_space(rank_tol);
    let range_basis = svd.row_space(rank_tol);

    let mut contained = Vec::new();
    if subspaces.len() > 1 {
        for i in 0..subspaces.len() {
            let others: Vec<&DMatrix<f64>> = subspaces
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, s)| s.weighted())
                .collect();
            let without = linalg::hstack(&others);
            if FullSvd::new(&without).rank(rank_tol) == rank {
                contained.push(i);
            }
        }
    }

    Ok(SumOperator {
        block_sizes: subspaces.iter().map(|s| s.rank()).collect(),
        assembled,
        singular_values: svd.singular_values.clone(),
        kernel_basis,
        range_basis,
        rank_tol,
        rank,
        contained,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AngleReport {
    pub cos_angle: f64,
    /// dim 𝔐 = dim(H̄₁ ∩ H̄₂)
    pub dim_intersection: usize,
    /// (dim 𝔐₁, dim 𝔐₂)
    pub dims_complements: (usize, usize),
    /// cos within the rank tolerance of 1
    pub effectively_non_closed: bool,
}

impl AngleReport {
    pub fn intersection_trivial(&self) -> bool {
        self.dim_intersection == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometryReport {
    pub n_subspaces: usize,
    pub ranks: Vec<usize>,
    pub norm_s: f64,
    pub norm_s_inv: f64,
    /// norm_s · norm_s_inv
    pub condition: f64,
    /// 1 / norm_s_inv
    pub delta: f64,
    pub kernel_dim: usize,
    pub standing_assumption_violations: Vec<usize>,
    pub pairwise: Option<AngleReport>,
}

/// ‖Ŝ‖ = σ_max, ‖Ŝ⁻¹‖ = 1/σ_min⁺.
pub fn operator_norms(op: &SumOperator) -> Result<GeometryReport> {
    let sv = op.singular_values();
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    if op.rank == 0 || !(sigma_max > 0.0) {
        return Err(Error::DegenerateOperator);
    }
    let sigma_min = sv[op.rank - 1];
    let norm_s_inv = 1.0 / sigma_min;
    Ok(GeometryReport {
        n_subspaces: op.n_blocks(),
        ranks: op.block_sizes.clone(),
        norm_s: sigma_max,
        norm_s_inv,
        condition: sigma_max * norm_s_inv,
        delta: sigma_min,
        kernel_dim: op.kernel_dim(),
        standing_assumption_violations: op.contained.clone(),
        pairwise: None,
    })
}

/// Assembles S and reports its norms; for N = 2 also the Friedrichs angle.
pub fn analyze(subspaces: &[Subspace], mu: &Measure, rank_tol: f64) -> Result<(SumOperator, GeometryReport)> {
    let op = assemble_sum_operator(subspaces, mu, rank_tol)?;
    let mut report = operator_norms(&op)?;
    if subspaces.len() == 2 {
        report.pairwise = friedrichs_angle(&subspaces[0], &subspaces[1], mu, rank_tol).ok();
    }
    Ok((op, report))
}

/// ‖[h]‖_∼: norm of the stacked coefficients after removing the ker S part.
pub fn quotient_norm(h: &PotentialTuple, op: &SumOperator) -> Result<f64> {
    let v = op.stacked_checked(h)?;
    Ok(op.project_off_kernel(&v).norm())
}

/// Cosine of the Friedrichs angle between two subspaces, with the
/// dimensions of 𝔐 = H̄₁ ∩ H̄₂ and of 𝔐ᵢ = H̄ᵢ ∩ 𝔐^⟂.
pub fn friedrichs_angle(h1: &Subspace, h2: &Subspace, mu: &Measure, rank_tol: f64) -> Result<AngleReport> {
    if h1.n() != mu.len() || h2.n() != mu.len() {
        return Err(Error::dim("subspace atoms", mu.len(), h1.n().max(h2.n())));
    }
    let w1 = h1.weighted();
    let w2 = h2.weighted();
    let r1 = w1.ncols();
    // null([W₁, −W₂]) = {(a, b) : W₁a = W₂b}
    let joined = linalg::hstack(&[w1, &(-w2)]);
    let null = FullSvd::new(&joined).null_space(rank_tol);
    let a_part = null.rows(0, r1).into_owned();
    let intersection = linalg::column_span(&(w1 * a_part), rank_tol);
    let dim_m = intersection.ncols();

    let complement_in = |w: &DMatrix<f64>| -> DMatrix<f64> {
        // coefficient directions of W orthogonal to Wᵀ·(basis of 𝔐)
        let coeff = w.transpose() * &intersection;
        w * linalg::complement(&coeff, rank_tol)
    };
    let m1 = complement_in(w1);
    let m2 = complement_in(w2);
    if m1.ncols() == 0 || m2.ncols() == 0 {
        let which = match (m1.ncols(), m2.ncols()) {
            (0, 0) => "the two subspaces coincide",
            (0, _) => "the first subspace is contained in the second",
            _ => "the second subspace is contained in the first",
        };
        return Err(Error::Containment(which.into()));
    }
    let cross = m1.transpose() * &m2;
    let cos = linalg::spectral_norm(&cross).min(1.0);
    Ok(AngleReport {
        cos_angle: cos,
        dim_intersection: dim_m,
        dims_complements: (m1.ncols(), m2.ncols()),
        effectively_non_closed: 1.0 - cos <= rank_tol,
    })
}

/// (‖Ŝ‖, ‖Ŝ⁻¹‖) from the Friedrichs cosine.
pub fn two_subspace_norms_from_angle(cos_angle: f64, intersection_trivial: bool) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&cos_angle) {
        if cos_angle >= 1.0 {
            return Err(Error::NotClosed { cos: cos_angle });
        }
        return Err(Error::InvalidInput(format!("cosine {cos_angle} outside [0, 1)")));
    }
    let norm = if intersection_trivial {
        (1.0 + cos_angle).sqrt()
    } else {
        std::f64::consts::SQRT_2
    };
    Ok((norm, 1.0 / (1.0 - cos_angle).sqrt()))
}

/// sup |⟨v₁, v₂⟩_μ| over unit vectors of two subspaces.
pub fn generalized_angle(v1: &Subspace, v2: &Subspace) -> f64 {
    linalg::spectral_norm(&(v1.weighted().transpose() * v2.weighted())).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepBound {
    /// j: angle between H₁ + … + H_j and H_{j+1}
    pub step: usize,
    pub cos_angle: f64,
    pub intersection_trivial: bool,
    pub norm: f64,
    pub norm_inv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductBoundReport {
    pub steps: Vec<StepBound>,
    pub norm_bound: f64,
    pub norm_inv_bound: f64,
    pub condition_bound: f64,
    /// √∏(1 + cⱼ)/(1 − cⱼ), present when every stepwise intersection is trivial
    pub angle_condition_bound: Option<f64>,
    pub direct_norm: f64,
    pub direct_norm_inv: f64,
    pub direct_condition: f64,
    /// direct ≤ product bounds (slack 1e-8 relative)
    pub bound_holds: bool,
}

/// Product bounds on ‖Ŝ‖, ‖Ŝ⁻¹‖ from the stepwise angles between
/// H₁ + … + H_j and H_{j+1}, compared with the direct SVD values.
pub fn n_subspace_bounds(subspaces: &[Subspace], mu: &Measure, rank_tol: f64) -> Result<ProductBoundReport> {
    if subspaces.len() < 2 {
        return Err(Error::InvalidInput("product bounds need at least two subspaces".into()));
    }
    let (_, direct) = analyze(subspaces, mu, rank_tol)?;
    let mut steps = Vec::with_capacity(subspaces.len() - 1);
    let mut leading = subspaces[0].clone();
    for j in 1..subspaces.len() {
        let next = &subspaces[j];
        let angle = friedrichs_angle(&leading, next, mu, rank_tol)?;
        let (norm, norm_inv) = two_subspace_norms_from_angle(angle.cos_angle, angle.intersection_trivial())?;
        steps.push(StepBound {
            step: j,
            cos_angle: angle.cos_angle,
            intersection_trivial: angle.intersection_trivial(),
            norm,
            norm_inv,
        });
        if j + 1 < subspaces.len() {
            let raw = linalg::hstack(&[leading.basis(), next.basis()]);
            leading = orthonormalize(&raw, mu, rank_tol)?;
        }
    }
    let norm_bound: f64 = steps.iter().map(|s| s.norm).product();
    let norm_inv_bound: f64 = steps.iter().map(|s| s.norm_inv).product();
    let condition_bound = norm_bound * norm_inv_bound;
    let angle_condition_bound = steps.iter().all(|s| s.intersection_trivial).then(|| {
        steps
            .iter()
            .map(|s| (1.0 + s.cos_angle) / (1.0 - s.cos_angle))
            .product::<f64>()
            .sqrt()
    });
    let within = |direct: f64, bound: f64| direct <= bound * (1.0 + 1e-8);
    let bound_holds = within(direct.norm_s, norm_bound)
        && within(direct.norm_s_inv, norm_inv_bound)
        && within(direct.condition, condition_bound)
        && angle_condition_bound.is_none_or(|b| within(direct.condition, b));
    Ok(ProductBoundReport {
        steps,
        norm_bound,
        norm_inv_bound,
        condition_bound,
        angle_condition_bound,
        direct_norm: direct.norm_s,
        direct_norm_inv: direct.norm_s_inv,
        direct_condition: direct.condition,
        bound_holds,
    })
}
