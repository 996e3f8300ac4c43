//! Problem generators: (multi-)marginal optimal transport, martingale
//! optimal transport, random subspace instances, plus the closed-form
//! martingale-transport bounds.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::geometry::assemble_sum_operator;
use crate::measure::{orthonormalize, Label, Measure, Subspace, DEFAULT_RANK_TOL};
use crate::problem::Instance;

/// Largest product space the generators will build.
pub const MAX_ATOMS: usize = 20_000;

/// Smallest accepted δ = 1/‖Ŝ⁻¹‖ for random instances.
pub const MIN_DELTA: f64 = 1e-6;

const MEAN_TOL: f64 = 1e-12;
const MAX_DRAWS: usize = 1000;

fn product_size(sizes: &[usize]) -> Result<usize> {
    let mut n: usize = 1;
    for &m in sizes {
        if m == 0 {
            return Err(Error::InvalidInput("every marginal needs at least one atom".into()));
        }
        n = n
            .checked_mul(m)
            .filter(|&n| n <= MAX_ATOMS)
            .ok_or_else(|| Error::InvalidInput(format!("product space exceeds {MAX_ATOMS} atoms")))?;
    }
    Ok(n)
}

/// Coordinate k of every atom of a row-major product space.
fn coordinates(sizes: &[usize], k: usize) -> Vec<usize> {
    let n: usize = sizes.iter().product();
    let stride: usize = sizes[k + 1..].iter().product();
    (0..n).map(|x| (x / stride) % sizes[k]).collect()
}

/// Indicators of x_k = a as the columns of an n × m_k matrix.
pub fn coordinate_indicators(sizes: &[usize], k: usize) -> DMatrix<f64> {
    let coords = coordinates(sizes, k);
    DMatrix::from_fn(coords.len(), sizes[k], |x, a| if coords[x] == a { 1.0 } else { 0.0 })
}

/// Multi-marginal transport: H_k = functions of the k-th coordinate,
/// μ = product of the marginals, default (μ-moment) targets.
///
/// With `mean_zero`, H_1 … H_{N−1} are restricted to μ-mean-zero functions
/// so that only H_N carries the constants.
pub fn gen_mmot(marginals: &[Measure], cost: Vec<f64>, mean_zero: bool, divergence: Divergence) -> Result<Instance> {
    if marginals.len() < 2 {
        return Err(Error::InvalidInput("multi-marginal transport needs at least two marginals".into()));
    }
    let sizes: Vec<usize> = marginals.iter().map(|m| m.len()).collect();
    let n = product_size(&sizes)?;
    if cost.len() != n {
        return Err(Error::dim("cost", n, cost.len()));
    }
    let mu = Measure::product(&marginals.iter().collect::<Vec<_>>())?;
    let last = marginals.len() - 1;
    let mut raw = Vec::with_capacity(marginals.len());
    for (k, m) in marginals.iter().enumerate() {
        let mut ind = coordinate_indicators(&sizes, k);
        if mean_zero && k < last {
            for (a, w) in m.weights().iter().enumerate() {
                ind.column_mut(a).add_scalar_mut(-w);
            }
        }
        raw.push((Some(format!("marginal_{}", k + 1)), ind));
    }
    let labels = (0..n)
        .map(|x| {
            Label::Coords(
                (0..sizes.len())
                    .map(|k| {
                        let stride: usize = sizes[k + 1..].iter().product();
                        ((x / stride) % sizes[k]) as f64
                    })
                    .collect(),
            )
        })
        .collect();
    Instance::from_raw(mu, cost, &raw, divergence, DEFAULT_RANK_TOL)?.with_labels(labels)
}

/// Two-marginal transport (see [`gen_mmot`]).
pub fn gen_ot2(mu1: &Measure, mu2: &Measure, cost: Vec<f64>, mean_zero: bool, divergence: Divergence) -> Result<Instance> {
    gen_mmot(&[mu1.clone(), mu2.clone()], cost, mean_zero, divergence)
}

fn random_measure(rng: &mut ChaCha8Rng, n: usize) -> Result<Measure> {
    let masses: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    Measure::from_masses(&masses)
}

/// Seeded multi-marginal instance: random marginals on `m` atoms each and a
/// cost uniform in [−cost_scale, cost_scale].
pub fn random_mmot(seed: u64, n_marginals: usize, m: usize, mean_zero: bool, cost_scale: f64, divergence: Divergence) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let marginals = (0..n_marginals)
        .map(|_| random_measure(&mut rng, m))
        .collect::<Result<Vec<_>>>()?;
    let n = product_size(&vec![m; n_marginals])?;
    let cost = (0..n).map(|_| rng.random_range(-cost_scale..=cost_scale)).collect();
    gen_mmot(&marginals, cost, mean_zero, divergence)
}

/// Seeded two-marginal instance on an n1 × n2 grid with a squared-distance
/// cost between random points of [0, 1].
pub fn random_ot2(seed: u64, n1: usize, n2: usize, divergence: Divergence) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu1 = random_measure(&mut rng, n1)?;
    let mu2 = random_measure(&mut rng, n2)?;
    let xs: Vec<f64> = (0..n1).map(|_| rng.random::<f64>()).collect();
    let ys: Vec<f64> = (0..n2).map(|_| rng.random::<f64>()).collect();
    let cost = xs
        .iter()
        .flat_map(|x| ys.iter().map(move |y| (x - y) * (x - y)))
        .collect();
    gen_ot2(&mu1, &mu2, cost, false, divergence)
}

/// Reference measure of a martingale transport instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotReference {
    Product,
    /// Density p with respect to μ₁ ⊗ μ₂ (row-major, rescaled to unit mass).
    Distorted(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotSpec {
    pub x1_atoms: Vec<f64>,
    pub x2_atoms: Vec<f64>,
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
    pub reference: MotReference,
}

impl MotSpec {
    pub fn product(x1_atoms: Vec<f64>, mu1: Vec<f64>, x2_atoms: Vec<f64>, mu2: Vec<f64>) -> Self {
        Self {
            x1_atoms,
            x2_atoms,
            mu1,
            mu2,
            reference: MotReference::Product,
        }
    }

    /// a = max |x₁|
    pub fn a(&self) -> f64 {
        self.x1_atoms.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// V₂ = ∫ x₂² dμ₂
    pub fn v2(&self) -> f64 {
        self.x2_atoms.iter().zip(&self.mu2).map(|(x, w)| w * x * x).sum()
    }

    /// μ₁ ⊗ μ₂ (row-major: x₁ slow, x₂ fast).
    pub fn product_measure(&self) -> Result<Measure> {
        Measure::product(&[&Measure::new(self.mu1.clone())?, &Measure::new(self.mu2.clone())?])
    }

    /// (sup p, sup 1/p) of the normalized distortion density; (1, 1) for the product reference.
    pub fn distortion_bounds(&self) -> Result<(f64, f64)> {
        match &self.reference {
            MotReference::Product => Ok((1.0, 1.0)),
            MotReference::Distorted(_) => {
                let p = self.normalized_density()?;
                let sup = p.iter().fold(0.0_f64, |m, v| m.max(*v));
                let inv = p.iter().fold(0.0_f64, |m, v| m.max(1.0 / v));
                Ok((sup, inv))
            }
        }
    }

    fn normalized_density(&self) -> Result<Vec<f64>> {
        let MotReference::Distorted(p) = &self.reference else {
            return Ok(vec![1.0; self.x1_atoms.len() * self.x2_atoms.len()]);
        };
        let prod = self.product_measure()?;
        if p.len() != prod.len() {
            return Err(Error::dim("distortion density", prod.len(), p.len()));
        }
        if let Some((x, v)) = p.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::DensityDomain { atom: x, value: *v });
        }
        let total: f64 = p.iter().zip(prod.weights()).map(|(a, b)| a * b).sum();
        Ok(p.iter().map(|v| v / total).collect())
    }

    fn validate(&self) -> Result<()> {
        if self.x1_atoms.len() != self.mu1.len() {
            return Err(Error::dim("mu1", self.x1_atoms.len(), self.mu1.len()));
        }
        if self.x2_atoms.len() != self.mu2.len() {
            return Err(Error::dim("mu2", self.x2_atoms.len(), self.mu2.len()));
        }
        Measure::new(self.mu1.clone())?;
        Measure::new(self.mu2.clone())?;
        for (name, xs, ws) in [("mu1", &self.x1_atoms, &self.mu1), ("mu2", &self.x2_atoms, &self.mu2)] {
            let mean: f64 = xs.iter().zip(ws).map(|(x, w)| x * w).sum();
            if mean.abs() > MEAN_TOL {
                return Err(Error::InvalidInput(format!("{name} has mean {mean:e}, expected zero")));
            }
        }
        if self.x2_atoms.len() < 2 || self.v2() == 0.0 {
            return Err(Error::InvalidInput("mu2 must not be a Dirac measure".into()));
        }
        let order = convex_order_check(&self.x1_atoms, &self.mu1, &self.x2_atoms, &self.mu2);
        if !order.holds {
            return Err(Error::Infeasible(format!(
                "mu1 does not precede mu2 in convex order (call-price violation {:e} at strike {})",
                order.worst_violation, order.worst_strike
            )));
        }
        Ok(())
    }
}

/// Martingale transport on the grid x1_atoms × x2_atoms.
///
/// H₁ is spanned by the row and column indicators, H₂ by
/// 1(x₁ = a)·(x₂ − a). Targets: the marginals μ₁, μ₂ for H₁ and zero for H₂.
pub fn gen_mot(spec: &MotSpec, cost: Vec<f64>, divergence: Divergence) -> Result<Instance> {
    spec.validate()?;
    let (n1, n2) = (spec.x1_atoms.len(), spec.x2_atoms.len());
    let n = product_size(&[n1, n2])?;
    if cost.len() != n {
        return Err(Error::dim("cost", n, cost.len()));
    }
    let prod = spec.product_measure()?;
    let mu = match spec.reference {
        MotReference::Product => prod,
        MotReference::Distorted(_) => {
            let p = spec.normalized_density()?;
            Measure::from_masses(&p.iter().zip(prod.weights()).map(|(a, b)| a * b).collect::<Vec<_>>())?
        }
    };
    let sizes = [n1, n2];
    let h1 = crate::linalg::hstack(&[&coordinate_indicators(&sizes, 0), &coordinate_indicators(&sizes, 1)]);
    let h2 = martingale_columns(spec);
    let raw = vec![(Some("marginals".to_string()), h1), (Some("martingale".to_string()), h2)];
    let targets: Vec<f64> = spec.mu1.iter().chain(&spec.mu2).copied().collect();
    let labels = spec
        .x1_atoms
        .iter()
        .flat_map(|x| spec.x2_atoms.iter().map(move |y| Label::Coords(vec![*x, *y])))
        .collect();
    Instance::from_raw(mu, cost, &raw, divergence, DEFAULT_RANK_TOL)?
        .with_labels(labels)?
        .with_raw_targets(0, targets)?
        .with_raw_targets(1, vec![0.0; n1])
}

/// Columns 1(x₁ = a)·(x₂ − a).
fn martingale_columns(spec: &MotSpec) -> DMatrix<f64> {
    let (n1, n2) = (spec.x1_atoms.len(), spec.x2_atoms.len());
    DMatrix::from_fn(n1 * n2, n1, |x, a| {
        if x / n2 == a {
            spec.x2_atoms[x % n2] - spec.x1_atoms[a]
        } else {
            0.0
        }
    })
}

/// {q(x₁)·(x₂ − x₁) : ∫ q dμ₁ = 0}, the part of H₂ on which the oblique
/// projection onto ker S vanishes.
pub fn martingale_zero_mean_part(spec: &MotSpec, mu: &Measure) -> Result<Subspace> {
    let cols = martingale_columns(spec);
    let delta: nalgebra::DVector<f64> = cols.column_sum();
    let mut centered = cols;
    for (a, w) in spec.mu1.iter().enumerate() {
        let c = centered.column(a) - &delta * *w;
        centered.set_column(a, &c);
    }
    orthonormalize(&centered, mu, DEFAULT_RANK_TOL)
}

/// The two readings of the angle bound |𝒳₁|/√(|𝒳₁|² + V₂).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotAngleBound {
    /// |𝒳₁| = a = max |x₁| (sharp for two-point μ₁)
    pub radius_reading: f64,
    /// |𝒳₁| = 2a, the diameter of a symmetric support
    pub diameter_reading: f64,
}

/// a/√(a² + V₂).
pub fn mot_angle_bound(a: f64, v2: f64) -> Result<f64> {
    if !(a > 0.0 && v2 > 0.0) {
        return Err(Error::InvalidInput(format!("angle bound needs a > 0 and V2 > 0, got a = {a}, V2 = {v2}")));
    }
    Ok(a / (a * a + v2).sqrt())
}

pub fn mot_angle_bounds(a: f64, v2: f64) -> Result<MotAngleBound> {
    Ok(MotAngleBound {
        radius_reading: mot_angle_bound(a, v2)?,
        diameter_reading: mot_angle_bound(2.0 * a, v2)?,
    })
}

/// Bounds on ‖Ŝ⁻¹‖ and on the condition number under a distorted reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotConditionBound {
    /// √(‖p⁻¹‖_∞/‖p‖_∞)·(1 − c)^{-1/2}
    pub inverse_norm_stated: f64,
    /// √(‖p‖_∞·‖p⁻¹‖_∞)·(1 − c)^{-1/2}
    pub inverse_norm_conservative: f64,
    /// √2 times the stated inverse-norm bound
    pub condition_stated: f64,
    /// √2 times the conservative inverse-norm bound
    pub condition_conservative: f64,
}

pub fn mot_condition_bound(p_sup: f64, p_inv_sup: f64, angle_bound: f64) -> Result<MotConditionBound> {
    if !(p_sup > 0.0 && p_inv_sup > 0.0) || p_sup * p_inv_sup < 1.0 - 1e-12 {
        return Err(Error::InvalidInput(format!(
            "density bounds must be positive with sup p · sup 1/p ≥ 1, got {p_sup}, {p_inv_sup}"
        )));
    }
    if !(0.0..1.0).contains(&angle_bound) {
        return Err(Error::InvalidInput(format!("angle bound {angle_bound} must lie in [0, 1)")));
    }
    let base = (1.0 - angle_bound).powf(-0.5);
    let stated = (p_inv_sup / p_sup).sqrt() * base;
    let conservative = (p_sup * p_inv_sup).sqrt() * base;
    Ok(MotConditionBound {
        inverse_norm_stated: stated,
        inverse_norm_conservative: conservative,
        condition_stated: std::f64::consts::SQRT_2 * stated,
        condition_conservative: std::f64::consts::SQRT_2 * conservative,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexOrderReport {
    pub holds: bool,
    /// max over strikes of ∫(x − k)₊ dμ₁ − ∫(x − k)₊ dμ₂ (≤ 0 when the order holds), also counting the mean gap
    pub worst_violation: f64,
    pub worst_strike: f64,
}

/// μ₁ ≤_c μ₂ via call prices at every atom of either support, plus equal means.
pub fn convex_order_check(x1: &[f64], mu1: &[f64], x2: &[f64], mu2: &[f64]) -> ConvexOrderReport {
    let call = |xs: &[f64], ws: &[f64], k: f64| -> f64 { xs.iter().zip(ws).map(|(x, w)| w * (x - k).max(0.0)).sum() };
    let mean = |xs: &[f64], ws: &[f64]| -> f64 { xs.iter().zip(ws).map(|(x, w)| x * w).sum() };
    let mut worst = (mean(x1, mu1) - mean(x2, mu2)).abs();
    let mut worst_strike = f64::NAN;
    for &k in x1.iter().chain(x2) {
        let v = call(x1, mu1, k) - call(x2, mu2, k);
        if v > worst || worst_strike.is_nan() && v >= worst {
            worst = v;
            worst_strike = k;
        }
    }
    let tol = 1e-12;
    ConvexOrderReport {
        holds: worst <= tol,
        worst_violation: worst,
        worst_strike,
    }
}

/// The three μ₂ choices {−2a, 0, 2a} with weights (w, 1 − 2w, w),
/// w ∈ {1/4, 3/8, 1/2}, each dominating every zero-mean μ₁ on [−a, a].
pub fn dominating_three_point(a: f64) -> Vec<(Vec<f64>, Vec<f64>)> {
    [0.25, 0.375, 0.5]
        .iter()
        .map(|&w| {
            if w == 0.5 {
                (vec![-2.0 * a, 2.0 * a], vec![0.5, 0.5])
            } else {
                (vec![-2.0 * a, 0.0, 2.0 * a], vec![w, 1.0 - 2.0 * w, w])
            }
        })
        .collect()
}

/// A zero-mean μ₁ on `n1` random atoms, rescaled so that max |x₁| = a.
pub fn random_zero_mean_marginal(rng: &mut ChaCha8Rng, n1: usize, a: f64) -> (Vec<f64>, Vec<f64>) {
    loop {
        let ws: Vec<f64> = (0..n1).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = ws.iter().sum();
        let ws: Vec<f64> = ws.iter().map(|w| w / total).collect();
        let xs: Vec<f64> = (0..n1).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m: f64 = xs.iter().zip(&ws).map(|(x, w)| x * w).sum();
        let xs: Vec<f64> = xs.iter().map(|x| x - m).collect();
        let amax = xs.iter().fold(0.0_f64, |s, x| s.max(x.abs()));
        let distinct = (0..n1).all(|i| (i + 1..n1).all(|j| (xs[i] - xs[j]).abs() > 1e-3 * amax));
        if amax > 0.0 && distinct {
            return (xs.iter().map(|x| x * a / amax).collect(), ws);
        }
    }
}

/// Seeded martingale instance: random zero-mean μ₁ with `n1` atoms on
/// [−1, 1], the three-point dominating μ₂ with w = 3/8, random cost.
pub fn random_mot(seed: u64, n1: usize, divergence: Divergence) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x1, mu1) = random_zero_mean_marginal(&mut rng, n1, 1.0);
    let (x2, mu2) = dominating_three_point(1.0).swap_remove(1);
    let spec = MotSpec::product(x1, mu1, x2, mu2);
    let n = spec.x1_atoms.len() * spec.x2_atoms.len();
    let cost = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
    gen_mot(&spec, cost, divergence)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuProfile {
    Uniform,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomSpec {
    pub n: usize,
    pub ranks: Vec<usize>,
    pub mu_profile: MuProfile,
    pub cost_scale: f64,
    pub divergence: Divergence,
}

impl RandomSpec {
    pub fn new(n: usize, ranks: Vec<usize>) -> Self {
        Self {
            n,
            ranks,
            mu_profile: MuProfile::Random,
            cost_scale: 1.0,
            divergence: Divergence::Kl,
        }
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Seeded instance with Gaussian subspaces; redraws until the standing
/// assumption holds and δ ≥ [`MIN_DELTA`].
pub fn gen_random(seed: u64, spec: &RandomSpec) -> Result<Instance> {
    if spec.ranks.is_empty() || spec.ranks.contains(&0) {
        return Err(Error::InvalidInput("ranks must be nonempty and positive".into()));
    }
    if spec.ranks.iter().any(|&r| r > spec.n) {
        return Err(Error::InvalidInput(format!("ranks {:?} exceed n = {}", spec.ranks, spec.n)));
    }
    if spec.n > MAX_ATOMS {
        return Err(Error::InvalidInput(format!("n exceeds {MAX_ATOMS} atoms")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_DRAWS {
        let mu = match spec.mu_profile {
            MuProfile::Uniform => Measure::uniform(spec.n)?,
            MuProfile::Random => random_measure(&mut rng, spec.n)?,
        };
        let subs = spec
            .ranks
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                orthonormalize(&gaussian_matrix(&mut rng, spec.n, r), &mu, DEFAULT_RANK_TOL)
                    .map(|s| s.with_name(format!("random_{}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        let cost: Vec<f64> = (0..spec.n)
            .map(|_| rng.random_range(-spec.cost_scale..=spec.cost_scale))
            .collect();
        let op = assemble_sum_operator(&subs, &mu, DEFAULT_RANK_TOL)?;
        let sv = op.singular_values();
        let delta = sv.get(op.rank().saturating_sub(1)).copied().unwrap_or(0.0);
        let full_ranks = subs.iter().zip(&spec.ranks).all(|(s, &r)| s.rank() == r);
        if op.standing_assumption_holds() && delta >= MIN_DELTA && full_ranks {
            return Instance::new(mu, cost, subs, spec.divergence);
        }
    }
    Err(Error::InvalidInput(format!(
        "no admissible draw in {MAX_DRAWS} attempts for n = {}, ranks {:?}",
        spec.n, spec.ranks
    )))
}

/// Two subspaces of dimensions r1, r2 sharing a k-dimensional intersection
/// (generic otherwise). Requires k < min(r1, r2) and r1 + r2 − k ≤ n.
pub fn random_subspace_pair(rng: &mut ChaCha8Rng, mu: &Measure, r1: usize, r2: usize, k: usize) -> Result<(Subspace, Subspace)> {
    let n = mu.len();
    if k >= r1.min(r2) || r1 + r2 - k > n {
        return Err(Error::InvalidInput(format!(
            "need k < min(r1, r2) and r1 + r2 − k ≤ n (r1 = {r1}, r2 = {r2}, k = {k}, n = {n})"
        )));
    }
    let shared = gaussian_matrix(rng, n, k);
    let a = gaussian_matrix(rng, n, r1 - k);
    let b = gaussian_matrix(rng, n, r2 - k);
    let h1 = orthonormalize(&crate::linalg::hstack(&[&shared, &a]), mu, DEFAULT_RANK_TOL)?;
    let h2 = orthonormalize(&crate::linalg::hstack(&[&shared, &b]), mu, DEFAULT_RANK_TOL)?;
    Ok((h1, h2))
}

/// Cost turning the information projection of θ onto the constraint set
/// into the KL problem relative to μ: c = log(dμ/dθ).
pub fn from_projection(theta: &[f64], mu: &Measure) -> Result<Vec<f64>> {
    if theta.len() != mu.len() {
        return Err(Error::dim("theta", mu.len(), theta.len()));
    }
    if let Some((x, v)) = theta.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::InvalidMeasure(format!(
            "theta has mass {v} at atom {x}; it must be equivalent to mu"
        )));
    }
    Ok(mu.weights().iter().zip(theta).map(|(m, t)| (m / t).ln()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{analyze, friedrichs_angle, generalized_angle};
    use crate::solver::{run_ipfp, SolverConfig};

    #[test]
    fn mmot_mean_zero_is_orthogonal() {
        let u = Measure::uniform(2).unwrap();
        let inst = gen_ot2(&u, &u, vec![0.0; 4], true, Divergence::Kl).unwrap();
        let (_, r) = analyze(inst.subspaces(), inst.mu(), DEFAULT_RANK_TOL).unwrap();
        assert!((r.norm_s - 1.0).abs() < 1e-12 && (r.norm_s_inv - 1.0).abs() < 1e-12);
        assert_eq!(r.kernel_dim, 0);
    }

    #[test]
    fn mmot_without_normalization_shares_constants() {
        for n_marg in [2, 3] {
            let inst = random_mmot(3, n_marg, 3, false, 0.1, Divergence::Kl).unwrap();
            let (_, r) = analyze(inst.subspaces(), inst.mu(), DEFAULT_RANK_TOL).unwrap();
            assert_eq!(r.kernel_dim, n_marg - 1);
            if n_marg == 2 {
                assert!((r.norm_s - std::f64::consts::SQRT_2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_cost_converges_in_one_sweep() {
        let inst = random_mmot(1, 3, 3, true, 0.0, Divergence::Kl).unwrap();
        let (trace, sol) = run_ipfp(&inst, &SolverConfig::default()).unwrap();
        assert_eq!(trace.sweeps.len(), 1);
        for d in sol.primal_density.values() {
            assert!((d - 1.0).abs() < 1e-12);
        }
    }

    fn example_spec() -> MotSpec {
        MotSpec::product(vec![-0.5, 0.5], vec![0.5, 0.5], vec![-1.0, 0.0, 1.0], vec![0.375, 0.25, 0.375])
    }

    #[test]
    fn mot_intersection_is_delta() {
        let spec = example_spec();
        assert!((spec.v2() - 0.75).abs() < 1e-15);
        let inst = gen_mot(&spec, vec![0.0; 6], Divergence::Kl).unwrap();
        let subs = inst.subspaces();
        let angle = friedrichs_angle(&subs[0], &subs[1], inst.mu(), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(angle.dim_intersection, 1);
        let (_, r) = analyze(subs, inst.mu(), DEFAULT_RANK_TOL).unwrap();
        assert!((r.norm_s - std::f64::consts::SQRT_2).abs() < 1e-10);
        // Δ = x₂ − x₁ lies in both spans
        let delta: Vec<f64> = (0..6).map(|x| spec.x2_atoms[x % 3] - spec.x1_atoms[x / 3]).collect();
        for s in subs {
            let proj = s.function(&s.coordinates(&delta, inst.mu()));
            for (a, b) in proj.iter().zip(&delta) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mot_solver_matches_martingale_constraint() {
        let spec = example_spec();
        let cost: Vec<f64> = (0..6).map(|x| 0.3 * (x as f64).sin()).collect();
        let inst = gen_mot(&spec, cost, Divergence::Kl).unwrap();
        let (_, sol) = run_ipfp(&inst, &SolverConfig::default()).unwrap();
        let w = inst.mu().weights();
        let d = sol.primal_density.values();
        for a in 0..2 {
            let m: f64 = (0..3)
                .map(|b| w[a * 3 + b] * d[a * 3 + b] * (spec.x2_atoms[b] - spec.x1_atoms[a]))
                .sum();
            assert!(m.abs() < 1e-10);
        }
    }

    #[test]
    fn two_point_angle_is_sharp() {
        // a = 1, μ₂ uniform on {−√2, √2}: V₂ = 2, bound 1/√3
        let r2 = std::f64::consts::SQRT_2;
        let spec = MotSpec::product(vec![-1.0, 1.0], vec![0.5, 0.5], vec![-r2, r2], vec![0.5, 0.5]);
        let inst = gen_mot(&spec, vec![0.0; 4], Divergence::Kl).unwrap();
        let subs = inst.subspaces();
        let angle = friedrichs_angle(&subs[0], &subs[1], inst.mu(), DEFAULT_RANK_TOL).unwrap();
        let bound = mot_angle_bound(spec.a(), spec.v2()).unwrap();
        assert!((bound - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((angle.cos_angle - bound).abs() < 1e-8);
    }

    #[test]
    fn generalized_angle_sits_between() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (x1, mu1) = random_zero_mean_marginal(&mut rng, 4, 1.0);
        let (x2, mu2) = dominating_three_point(1.0).swap_remove(0);
        let spec = MotSpec::product(x1, mu1, x2, mu2);
        let inst = gen_mot(&spec, vec![0.0; 12], Divergence::Kl).unwrap();
        let subs = inst.subspaces();
        let f = friedrichs_angle(&subs[0], &subs[1], inst.mu(), DEFAULT_RANK_TOL).unwrap().cos_angle;
        let h20 = martingale_zero_mean_part(&spec, inst.mu()).unwrap();
        let g = generalized_angle(&subs[0], &h20);
        let bound = mot_angle_bound(spec.a(), spec.v2()).unwrap();
        assert!(f <= g + 1e-10, "{f} vs {g}");
        assert!(g <= bound + 1e-10, "{g} vs {bound}");
    }

    #[test]
    fn angle_bound_limits() {
        assert!(mot_angle_bound(1.0, 1e12).unwrap() < 1e-5);
        assert!(mot_angle_bound(0.0, 1.0).is_err());
        let both = mot_angle_bounds(1.0, 2.0).unwrap();
        assert!(both.diameter_reading > both.radius_reading);
    }

    #[test]
    fn condition_bound_readings() {
        let b = mot_condition_bound(2.0, 2.0, 0.5).unwrap();
        assert!((b.inverse_norm_stated - 2f64.sqrt()).abs() < 1e-15);
        assert!((b.inverse_norm_conservative - 2.0 * 2f64.sqrt()).abs() < 1e-15);
        assert!((b.condition_stated - 2.0).abs() < 1e-15);
        assert!(mot_condition_bound(0.5, 0.5, 0.5).is_err());
    }

    #[test]
    fn convex_order_examples() {
        let x = [-1.0, 0.0, 1.0];
        let w = [0.25, 0.5, 0.25];
        assert!(convex_order_check(&x, &w, &x, &w).holds);
        assert!(convex_order_check(&[0.0], &[1.0], &x, &w).holds);
        let tight = convex_order_check(&[-1.0, 1.0], &[0.5, 0.5], &[-0.5, 0.5], &[0.5, 0.5]);
        assert!(!tight.holds);
        // call prices at k = −0.5: 0.5·1.5 − 0.5·1 = 0.25
        assert!((tight.worst_violation - 0.25).abs() < 1e-15);
    }

    #[test]
    fn convex_order_violation_is_infeasible() {
        let spec = MotSpec::product(vec![-1.0, 1.0], vec![0.5, 0.5], vec![-0.5, 0.5], vec![0.5, 0.5]);
        assert!(matches!(gen_mot(&spec, vec![0.0; 4], Divergence::Kl), Err(Error::Infeasible(_))));
    }

    #[test]
    fn random_instances_are_deterministic_and_admissible() {
        let spec = RandomSpec::new(10, vec![2, 3, 2]);
        let a = gen_random(5, &spec).unwrap();
        let b = gen_random(5, &spec).unwrap();
        assert_eq!(a.cost(), b.cost());
        assert_eq!(a.subspaces()[1].basis(), b.subspaces()[1].basis());
        let op = assemble_sum_operator(a.subspaces(), a.mu(), DEFAULT_RANK_TOL).unwrap();
        assert!(op.standing_assumption_holds());
    }

    #[test]
    fn subspace_pair_has_requested_intersection() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mu = Measure::uniform(9).unwrap();
        for k in 0..3 {
            let (h1, h2) = random_subspace_pair(&mut rng, &mu, 4, 3, k).unwrap();
            let angle = friedrichs_angle(&h1, &h2, &mu, DEFAULT_RANK_TOL).unwrap();
            assert_eq!(angle.dim_intersection, k);
        }
    }

    #[test]
    fn projection_cost() {
        let mu = Measure::from_masses(&[1.0, 2.0, 1.0]).unwrap();
        let c = from_projection(mu.weights(), &mu).unwrap();
        assert!(c.iter().all(|v| v.abs() < 1e-15));
        assert!(from_projection(&[0.5, 0.5, 0.0], &mu).is_err());

        // no constraint beyond total mass: the optimum is θ itself
        let theta = [0.2, 0.3, 0.5];
        let cost = from_projection(&theta, &mu).unwrap();
        let one = orthonormalize(&DMatrix::from_element(3, 1, 1.0), &mu, DEFAULT_RANK_TOL).unwrap();
        let inst = Instance::new(mu.clone(), cost, vec![one], Divergence::Kl).unwrap();
        let (_, sol) = run_ipfp(&inst, &SolverConfig::default()).unwrap();
        for x in 0..3 {
            let pi = mu.weights()[x] * sol.primal_density.values()[x];
            assert!((pi - theta[x]).abs() < 1e-12);
        }
    }
}
