//! Divergence generators φ, their conjugates ψ, and the curvature bounds
//! σ_R ≤ ψ″ ≤ L_R on (−R, R) that enter the contraction coefficient.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::Measure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Divergence {
    /// φ(x) = x log x − x + 1, ψ(s) = eˢ − 1.
    Kl,
    /// φ(x) = (x − 1)²/2 on all of ℝ, ψ(s) = s²/2 + s.
    Quadratic,
}

impl Divergence {
    pub fn name(self) -> &'static str {
        match self {
            Divergence::Kl => "kl",
            Divergence::Quadratic => "quadratic",
        }
    }

    /// Primal generator. Returns `None` outside the domain (x < 0 for kl).
    pub fn phi(self, x: f64) -> Option<f64> {
        match self {
            Divergence::Kl => {
                if x < 0.0 || x.is_nan() {
                    None
                } else if x == 0.0 {
                    Some(1.0)
                } else {
                    Some(x * x.ln() - x + 1.0)
                }
            }
            Divergence::Quadratic => Some(0.5 * (x - 1.0) * (x - 1.0)),
        }
    }

    pub fn psi(self, s: f64) -> f64 {
        match self {
            Divergence::Kl => s.exp_m1(),
            Divergence::Quadratic => 0.5 * s * s + s,
        }
    }

    pub fn psi_prime(self, s: f64) -> f64 {
        match self {
            Divergence::Kl => s.exp(),
            Divergence::Quadratic => s + 1.0,
        }
    }

    pub fn psi_second(self, s: f64) -> f64 {
        match self {
            Divergence::Kl => s.exp(),
            Divergence::Quadratic => 1.0,
        }
    }

    /// ψ(s + d) − ψ(s), accurate for small d.
    pub fn psi_increment(self, s: f64, d: f64) -> f64 {
        match self {
            Divergence::Kl => s.exp() * d.exp_m1(),
            Divergence::Quadratic => d * (s + 1.0 + 0.5 * d),
        }
    }

    /// σ_R = inf of ψ″ on (−R, R).
    pub fn sigma(self, radius: f64) -> f64 {
        match self {
            Divergence::Kl => (-radius).exp(),
            Divergence::Quadratic => 1.0,
        }
    }

    /// L_R = sup of ψ″ on (−R, R).
    pub fn lipschitz(self, radius: f64) -> f64 {
        match self {
            Divergence::Kl => radius.exp(),
            Divergence::Quadratic => 1.0,
        }
    }
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Divergence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "kl" => Ok(Divergence::Kl),
            "quadratic" => Ok(Divergence::Quadratic),
            other => Err(Error::UnknownDivergence(other.to_string())),
        }
    }
}

pub fn make_divergence(name: &str) -> Result<Divergence> {
    name.parse()
}

/// D_φ(π‖μ) = Σ_x μ(x) φ(dπ/dμ(x)).
pub fn primal_divergence(density: &[f64], mu: &Measure, div: Divergence) -> Result<f64> {
    if density.len() != mu.len() {
        return Err(Error::dim("density", mu.len(), density.len()));
    }
    let mut total = 0.0;
    for (atom, (&rho, &w)) in density.iter().zip(mu.weights()).enumerate() {
        let phi = div
            .phi(rho)
            .ok_or(Error::DensityDomain { atom, value: rho })?;
        total += w * phi;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FenchelReport {
    /// max over the grid of |ψ(s) − (s·x* − φ(x*))| with x* = ψ′(s).
    pub max_equality_gap: f64,
    /// min over grid pairs (s, x = ψ′(s′)) of ψ(s) − (s·x − φ(x)); should be ≥ 0.
    pub min_young_gap: f64,
}

/// Numerical check of Fenchel–Young on a grid of dual points.
pub fn fenchel_audit(div: Divergence, grid: &[f64]) -> Result<FenchelReport> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty grid".into()));
    }
    let primal_points: Vec<f64> = grid.iter().map(|&s| div.psi_prime(s)).collect();
    let mut max_equality_gap = 0.0_f64;
    let mut min_young_gap = f64::INFINITY;
    for &s in grid {
        let x_star = div.psi_prime(s);
        let phi = div.phi(x_star).expect("ψ′ maps into the domain of φ");
        max_equality_gap = max_equality_gap.max((div.psi(s) - (s * x_star - phi)).abs());
        for &x in &primal_points {
            if let Some(phi_x) = div.phi(x) {
                min_young_gap = min_young_gap.min(div.psi(s) - (s * x - phi_x));
            }
        }
    }
    Ok(FenchelReport {
        max_equality_gap,
        min_young_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
        (0..k).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / k as f64).collect()
    }

    #[test]
    fn kl_normalization() {
        let kl = make_divergence("kl").unwrap();
        assert_eq!(kl.psi(0.0), 0.0);
        assert_eq!(kl.psi_prime(0.0), 1.0);
        assert_eq!(kl.phi(1.0), Some(0.0));
        assert_eq!(Divergence::Quadratic.phi(1.0), Some(0.0));
        assert!(make_divergence("renyi").is_err());
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn kl_constants_match_grid_extremes() {
        // Oracle: min/max of ψ″ on a 10⁴-point grid of (−1, 1).
        let g = grid(-1.0, 1.0, 10_000);
        let lo = g.iter().map(|&s| Divergence::Kl.psi_second(s)).fold(f64::INFINITY, f64::min);
        let hi = g.iter().map(|&s| Divergence::Kl.psi_second(s)).fold(0.0, f64::max);
        let sigma = Divergence::Kl.sigma(1.0);
        let lip = Divergence::Kl.lipschitz(1.0);
        assert!((sigma - 0.367879).abs() < 1e-6);
        assert!((lip - 2.718282).abs() < 1e-6);
        assert!(sigma <= lo + 1e-9 && hi <= lip + 1e-9);
        assert!((lo - sigma).abs() < 1e-3 && (hi - lip).abs() < 1e-3);
    }

    #[test]
    fn quadratic_ratio_is_one() {
        for r in [0.1, 1.0, 10.0, 100.0] {
            let q = Divergence::Quadratic;
            assert_eq!(q.sigma(r) / q.lipschitz(r), 1.0);
        }
    }

    #[test]
    fn curvature_bounds_bracket_grid() {
        for div in [Divergence::Kl, Divergence::Quadratic] {
            for r in [0.5, 2.0, 5.0] {
                for s in grid(-r, r, 2_000) {
                    let c = div.psi_second(s);
                    assert!(div.sigma(r) <= c + 1e-9 && c <= div.lipschitz(r) + 1e-9);
                }
            }
        }
    }

    #[test]
    fn primal_divergence_examples() {
        let mu = Measure::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(primal_divergence(&[1.0, 1.0], &mu, Divergence::Kl).unwrap(), 0.0);
        // π = (0.75, 0.25) → density (1.5, 0.5)
        let kl = primal_divergence(&[1.5, 0.5], &mu, Divergence::Kl).unwrap();
        let oracle = 0.75 * 1.5_f64.ln() + 0.25 * 0.5_f64.ln();
        assert!((kl - oracle).abs() < 1e-15);
        assert!((kl - 0.130812).abs() < 1e-6);
        let q = primal_divergence(&[1.5, 0.5], &mu, Divergence::Quadratic).unwrap();
        assert!((q - 0.125).abs() < 1e-15);
    }

    #[test]
    fn kl_rejects_negative_density() {
        let mu = Measure::new(vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            primal_divergence(&[1.5, -0.5], &mu, Divergence::Kl),
            Err(Error::DensityDomain { atom: 1, .. })
        ));
        assert!(primal_divergence(&[2.5, -0.5], &mu, Divergence::Quadratic).is_ok());
    }

    #[test]
    fn fenchel_audit_examples() {
        let r = fenchel_audit(Divergence::Kl, &[-2.0, 0.0, 2.0]).unwrap();
        assert!(r.max_equality_gap <= 1e-9);
        assert!(r.min_young_gap >= -1e-12);
        let q = fenchel_audit(Divergence::Quadratic, &grid(-7.0, 7.0, 41)).unwrap();
        assert!(q.max_equality_gap <= 1e-12);
        assert!(q.min_young_gap >= -1e-12);
        let z = fenchel_audit(Divergence::Kl, &[0.0]).unwrap();
        assert_eq!(Divergence::Kl.psi_prime(0.0), 1.0);
        assert_eq!(z.max_equality_gap, 0.0);
        assert!(fenchel_audit(Divergence::Kl, &[]).is_err());
    }

    #[test]
    fn phi_is_convex_on_grid() {
        for div in [Divergence::Kl, Divergence::Quadratic] {
            let g = grid(0.01, 5.0, 500);
            for w in g.windows(3) {
                let mid = div.phi(w[1]).unwrap();
                let chord = 0.5 * (div.phi(w[0]).unwrap() + div.phi(w[2]).unwrap());
                assert!(mid <= chord + 1e-12);
            }
        }
    }

    #[test]
    fn derivatives_match_central_differences() {
        let eps = 1e-5;
        for div in [Divergence::Kl, Divergence::Quadratic] {
            let mut last = f64::NEG_INFINITY;
            for s in grid(-5.0, 5.0, 200) {
                let fd1 = (div.psi(s + eps) - div.psi(s - eps)) / (2.0 * eps);
                assert!((div.psi_prime(s) - fd1).abs() <= 1e-6 * (1.0 + fd1.abs()));
                let fd2 = (div.psi_prime(s + eps) - div.psi_prime(s - eps)) / (2.0 * eps);
                assert!((div.psi_second(s) - fd2).abs() <= 1e-6 * (1.0 + fd2.abs()));
                assert!(div.psi_prime(s) >= last);
                last = div.psi_prime(s);
                if div == Divergence::Kl {
                    assert!(div.psi_prime(s) > 0.0);
                }
            }
        }
    }

    #[test]
    fn psi_increment_matches_direct() {
        for div in [Divergence::Kl, Divergence::Quadratic] {
            for (s, d) in [(0.3, -1.5), (2.0, 0.0), (-4.0, 5.5)] {
                let direct = div.psi(s + d) - div.psi(s);
                assert!((div.psi_increment(s, d) - direct).abs() < 1e-13 * (1.0 + direct.abs()));
            }
        }
    }

    #[test]
    fn psi_increment_resolves_tiny_steps() {
        // first-order oracle: ψ′(s)·d + ψ″(s)·d²/2
        let d = 1e-9;
        for div in [Divergence::Kl, Divergence::Quadratic] {
            let s = 0.7;
            let oracle = div.psi_prime(s) * d + 0.5 * div.psi_second(s) * d * d;
            assert!((div.psi_increment(s, d) - oracle).abs() < 1e-24);
        }
    }
}
