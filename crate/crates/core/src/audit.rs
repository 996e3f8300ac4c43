//! Rate certificates: the contraction coefficient
//!
//! γ = (1/N)·(σ_R / (L_R·‖Ŝ‖·‖Ŝ⁻¹‖))²
//!
//! and a sweep-by-sweep verification of the inequalities that produce it.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::geometry::GeometryReport;
use crate::measure::PotentialTuple;
use crate::problem::Instance;
use crate::solver::{joint_solve, optimality_gap, shifted_field, IterateTrace, Solution, SolverConfig};

/// Relative slack allowed in every audited inequality.
pub const AUDIT_RELATIVE_SLACK: f64 = 1e-8;

/// Per-unit-step round-off allowance for decreases F(h^t) − F(h^{t+1}).
///
/// A decrease is evaluated as a sum of terms of size O(‖h^{t+1} − h^t‖)
/// that cancel down to O(‖h^{t+1} − h^t‖²), so its absolute error is a
/// small multiple of machine precision times the step length.
pub const AUDIT_ROUNDOFF: f64 = 1e-12;

/// A reference optimizer h̄ together with F(h̄) and ‖⊕h̄ − c‖_∞.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub potentials: PotentialTuple,
    pub f_value: f64,
    pub radius: f64,
}

impl Reference {
    pub fn from_solution(inst: &Instance, sol: &Solution) -> Result<Self> {
        let s = shifted_field(inst, &sol.potentials)?;
        Ok(Self {
            potentials: sol.potentials.clone(),
            f_value: sol.f_value,
            radius: s.amax(),
        })
    }
}

/// Solves the problem jointly and returns the optimum as a reference.
pub fn reference_optimum(inst: &Instance, cfg: &SolverConfig) -> Result<Reference> {
    let sol = joint_solve(inst, cfg)?;
    Reference::from_solution(inst, &sol)
}

/// F(h^t) − F(h̄) for t = 0, …, T.
///
/// The last gap is evaluated directly from h^T, earlier ones by adding the
/// recorded per-sweep decreases, which keeps tiny gaps accurate.
pub fn optimality_gaps(inst: &Instance, trace: &IterateTrace, final_potentials: &PotentialTuple, reference: &Reference) -> Result<Vec<f64>> {
    let last = optimality_gap(inst, final_potentials, &reference.potentials)?;
    let mut gaps = vec![0.0; trace.sweeps.len() + 1];
    gaps[trace.sweeps.len()] = last;
    for (t, r) in trace.sweeps.iter().enumerate().rev() {
        gaps[t] = gaps[t + 1] + r.decrease;
    }
    Ok(gaps)
}

/// (1/N)·(σ/(L·‖Ŝ‖·‖Ŝ⁻¹‖))².
pub fn gamma_formula(n_subspaces: usize, sigma: f64, lipschitz: f64, norm_s: f64, norm_s_inv: f64) -> f64 {
    let ratio = sigma / (lipschitz * norm_s * norm_s_inv);
    ratio * ratio / n_subspaces as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCertificate {
    pub n_subspaces: usize,
    pub divergence: Divergence,
    /// Radius R used for σ_R and L_R.
    pub radius: f64,
    /// max ‖⊕h − c‖_∞ over the trace, intermediate iterates included
    pub trace_radius: f64,
    /// ‖⊕h̄ − c‖_∞ at the reference optimizer
    pub optimizer_radius: f64,
    /// Set when R was pinned rather than measured.
    pub radius_override: Option<f64>,
    pub sigma: f64,
    pub lipschitz: f64,
    pub norm_s: f64,
    pub norm_s_inv: f64,
    pub delta: f64,
    pub condition: f64,
    pub gamma: f64,
    pub rho: f64,
    pub f_opt: f64,
    pub diagnostic: Option<String>,
}

/// Builds the rate certificate for a trace.
///
/// R is the larger of the trace radius and the reference radius unless
/// `radius_override` pins it.
pub fn compute_gamma(
    trace: &IterateTrace,
    reference: &Reference,
    geometry: &GeometryReport,
    divergence: Divergence,
    radius_override: Option<f64>,
) -> Result<RateCertificate> {
    if trace.sweeps.is_empty() {
        return Err(Error::MissingTraceField("trace has no sweeps".into()));
    }
    if let Some(r) = radius_override {
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::InvalidInput(format!("radius override {r} must be finite and nonnegative")));
        }
    }
    let trace_radius = trace.max_radius();
    let radius = radius_override.unwrap_or(trace_radius.max(reference.radius));
    let sigma = divergence.sigma(radius);
    let lipschitz = divergence.lipschitz(radius);
    let n = geometry.n_subspaces;
    let mut gamma = gamma_formula(n, sigma, lipschitz, geometry.norm_s, geometry.norm_s_inv);
    let mut diagnostic = None;
    if !gamma.is_finite() || gamma < f64::MIN_POSITIVE {
        diagnostic = Some(format!(
            "sigma/L underflows at R = {radius}: the certified contraction is zero in double precision"
        ));
        gamma = 0.0;
    }
    Ok(RateCertificate {
        n_subspaces: n,
        divergence,
        radius,
        trace_radius,
        optimizer_radius: reference.radius,
        radius_override,
        sigma,
        lipschitz,
        norm_s: geometry.norm_s,
        norm_s_inv: geometry.norm_s_inv,
        delta: geometry.delta,
        condition: geometry.condition,
        gamma,
        rho: 1.0 - gamma,
        f_opt: reference.f_value,
        diagnostic,
    })
}

/// One audited inequality `lhs ≤ rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub lhs: f64,
    pub rhs: f64,
    /// Absolute round-off allowance added to the relative slack.
    pub allowance: f64,
    pub ok: bool,
}

impl Check {
    fn new(lhs: f64, rhs: f64, allowance: f64) -> Self {
        let ok = lhs <= rhs + AUDIT_RELATIVE_SLACK * lhs.abs().max(rhs.abs()) + allowance;
        Self { lhs, rhs, allowance, ok }
    }

    /// rhs − lhs relative to the larger side (negative when violated).
    pub fn margin(&self) -> f64 {
        let scale = self.lhs.abs().max(self.rhs.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.rhs - self.lhs) / scale
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepChecks {
    pub sweep: usize,
    /// F(h^t) − F* ≤ ‖dF̂([h^t], ·)‖²_∼ / (2δ²σ_R)
    pub pl_inequality: Check,
    /// ‖dF(h^t, ·)‖_Σ ≤ L_R·√N·‖S‖·‖h^{t+1} − h^t‖_Σ
    pub gradient_step_bound: Check,
    /// ‖h^{t+1} − h^t‖²_Σ ≤ (2/σ_R)·(F(h^t) − F(h^{t+1}))
    pub step_improvement_bound: Check,
    /// σ_R/(2L_R²N‖S‖²)·‖dF(h^t, ·)‖²_Σ ≤ F(h^t) − F(h^{t+1})
    pub improvement_rate: Check,
    /// δ·‖[Δh]‖_∼ ≤ ‖S Δh‖ for the sweep step Δh
    pub norm_comparison_lower: Check,
    /// ‖S Δh‖ ≤ ‖Ŝ‖·‖[Δh]‖_∼
    pub norm_comparison_upper: Check,
    /// γ·(F(h^t) − F*) ≤ F(h^t) − F(h^{t+1})
    pub relative_improvement: Check,
    /// F(h^t) − F* ≤ (1 − γ)^t·(F(h⁰) − F*)
    pub envelope: Check,
}

impl SweepChecks {
    pub fn all_ok(&self) -> bool {
        self.named().iter().all(|(_, c)| c.ok)
    }

    pub fn named(&self) -> [(&'static str, &Check); 8] {
        [
            ("pl_inequality", &self.pl_inequality),
            ("gradient_step_bound", &self.gradient_step_bound),
            ("step_improvement_bound", &self.step_improvement_bound),
            ("improvement_rate", &self.improvement_rate),
            ("norm_comparison_lower", &self.norm_comparison_lower),
            ("norm_comparison_upper", &self.norm_comparison_upper),
            ("relative_improvement", &self.relative_improvement),
            ("envelope", &self.envelope),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub sweep: usize,
    pub check: String,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub certificate: RateCertificate,
    pub sweeps: Vec<SweepChecks>,
    /// F(h^T) − F* ≤ (1 − γ)^T·(F(h⁰) − F*) at the final iterate
    pub final_envelope: Check,
    pub envelope: EnvelopeReport,
    pub violations: Vec<Violation>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub holds: bool,
    /// Median of F-gap ratios (F(h^{t+1}) − F*)/(F(h^t) − F*) over resolvable sweeps.
    pub empirical_contraction: Option<f64>,
    pub certified_contraction: f64,
}

/// Per-sweep decrease allowances from the round-off model.
fn decrease_allowances(inst: &Instance, trace: &IterateTrace) -> Vec<f64> {
    let scale = 1.0 + DVector::from_iterator(
        inst.targets().iter().map(|t| t.len()).sum(),
        inst.targets().iter().flat_map(|t| t.iter().copied()),
    )
    .norm();
    trace
        .sweeps
        .iter()
        .map(|r| AUDIT_ROUNDOFF * scale * r.step_sq.sqrt())
        .collect()
}

/// Checks every per-sweep inequality and the exponential envelope.
///
/// `gaps` holds F(h^t) − F* for t = 0, …, T (see [`optimality_gaps`]).
pub fn audit_inequalities(inst: &Instance, trace: &IterateTrace, gaps: &[f64], cert: &RateCertificate) -> Result<AuditReport> {
    let t_len = trace.sweeps.len();
    if gaps.len() != t_len + 1 {
        return Err(Error::MissingTraceField(format!(
            "expected {} optimality gaps, got {}",
            t_len + 1,
            gaps.len()
        )));
    }
    let n = cert.n_subspaces as f64;
    let (sigma, lip, norm_s, delta, gamma) = (cert.sigma, cert.lipschitz, cert.norm_s, cert.delta, cert.gamma);

    let dec_allow = decrease_allowances(inst, trace);
    // gap_t is a sum of the decreases from t on
    let mut gap_allow = vec![0.0; t_len + 1];
    for t in (0..t_len).rev() {
        gap_allow[t] = gap_allow[t + 1] + dec_allow[t];
    }

    let contraction = 1.0 - gamma;
    let envelope_at = |t: usize| -> Check {
        let factor = contraction.powi(t as i32);
        Check::new(gaps[t], factor * gaps[0], gap_allow[t] + factor * gap_allow[0])
    };

    let mut sweeps = Vec::with_capacity(t_len);
    let mut violations = Vec::new();
    for (t, r) in trace.sweeps.iter().enumerate() {
        let g = r.grad_sum_norm;
        let step = r.step_sq.sqrt();
        let dec = r.decrease;
        let checks = SweepChecks {
            sweep: r.sweep,
            pl_inequality: Check::new(
                gaps[t],
                r.grad_quotient_norm.powi(2) / (2.0 * delta * delta * sigma),
                gap_allow[t],
            ),
            gradient_step_bound: Check::new(g, lip * n.sqrt() * norm_s * step, 0.0),
            step_improvement_bound: Check::new(r.step_sq, 2.0 / sigma * dec, 2.0 / sigma * dec_allow[t]),
            improvement_rate: Check::new(sigma / (2.0 * lip * lip * n * norm_s * norm_s) * g * g, dec, dec_allow[t]),
            norm_comparison_lower: Check::new(delta * r.step_quotient_norm, r.step_image_norm, 0.0),
            norm_comparison_upper: Check::new(r.step_image_norm, norm_s * r.step_quotient_norm, 0.0),
            relative_improvement: Check::new(gamma * gaps[t], dec, dec_allow[t] + gamma * gap_allow[t]),
            envelope: envelope_at(t),
        };
        for (name, c) in checks.named() {
            if !c.ok {
                violations.push(Violation {
                    sweep: r.sweep,
                    check: name.to_string(),
                    lhs: c.lhs,
                    rhs: c.rhs,
                });
            }
        }
        sweeps.push(checks);
    }
    let final_envelope = envelope_at(t_len);
    if !final_envelope.ok {
        violations.push(Violation {
            sweep: t_len,
            check: "envelope".into(),
            lhs: final_envelope.lhs,
            rhs: final_envelope.rhs,
        });
    }
    let envelope = check_envelope(gaps, gamma, &gap_allow);
    let passed = violations.is_empty() && envelope.holds;
    Ok(AuditReport {
        certificate: cert.clone(),
        sweeps,
        final_envelope,
        envelope,
        violations,
        passed,
    })
}

/// gap_t ≤ (1 − γ)^t·gap_0 for every t, plus the empirical median
/// contraction factor. `allowances` are absolute round-off allowances for
/// each gap (pass zeros for none).
pub fn check_envelope(gaps: &[f64], gamma: f64, allowances: &[f64]) -> EnvelopeReport {
    let contraction = 1.0 - gamma;
    let allow = |t: usize| allowances.get(t).copied().unwrap_or(0.0);
    let holds = gaps.iter().enumerate().all(|(t, &gap)| {
        let factor = contraction.powi(t as i32);
        Check::new(gap, factor * gaps[0], allow(t) + factor * allow(0)).ok
    });
    let mut ratios: Vec<f64> = gaps
        .windows(2)
        .enumerate()
        .filter(|(t, w)| w[0] > 1e3 * allow(*t).max(f64::MIN_POSITIVE) && w[1] > allow(t + 1))
        .map(|(_, w)| w[1] / w[0])
        .collect();
    ratios.sort_by(|a, b| a.total_cmp(b));
    let empirical_contraction = (!ratios.is_empty()).then(|| {
        let m = ratios.len() / 2;
        if ratios.len() % 2 == 1 {
            ratios[m]
        } else {
            0.5 * (ratios[m - 1] + ratios[m])
        }
    });
    EnvelopeReport {
        holds,
        empirical_contraction,
        certified_contraction: contraction,
    }
}

/// Runs the IPFP, the reference solver and the full audit in one go.
pub fn run_and_audit(inst: &Instance, cfg: &SolverConfig, radius_override: Option<f64>) -> Result<(IterateTrace, Solution, AuditReport)> {
    let (trace, sol) = crate::solver::run_ipfp(inst, cfg)?;
    let reference = reference_optimum(inst, cfg)?;
    let (_, geometry) = crate::geometry::analyze(inst.subspaces(), inst.mu(), inst.rank_tol())?;
    let gaps = optimality_gaps(inst, &trace, &sol.potentials, &reference)?;
    let cert = compute_gamma(&trace, &reference, &geometry, inst.divergence(), radius_override)?;
    let report = audit_inequalities(inst, &trace, &gaps, &cert)?;
    Ok((trace, sol, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::two_subspace_norms_from_angle;
    use crate::measure::{orthonormalize, Measure, DEFAULT_RANK_TOL};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_unit_condition_two_blocks_gives_half() {
        assert_eq!(gamma_formula(2, 1.0, 1.0, 1.0, 1.0), 0.5);
    }

    #[test]
    fn two_subspace_kl_formula() {
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let (ns, nsi) = two_subspace_norms_from_angle(c, true).unwrap();
        let g = gamma_formula(2, (-1.0f64).exp(), 1.0f64.exp(), ns, nsi);
        // hand evaluation: (1/2)·e⁻⁴·(1 − c)/(1 + c)
        let oracle = 0.5 * (-4.0f64).exp() * (1.0 - c) / (1.0 + c);
        assert!((g - oracle).abs() < 1e-15);
    }

    #[test]
    fn gamma_is_monotone() {
        let div = Divergence::Kl;
        let mut last = f64::INFINITY;
        for r in [0.1, 0.5, 1.0, 2.0, 4.0] {
            let g = gamma_formula(3, div.sigma(r), div.lipschitz(r), 1.2, 1.5);
            assert!(g < last);
            last = g;
        }
        let mut last = f64::INFINITY;
        for cond in [1.0, 1.5, 3.0, 10.0] {
            let g = gamma_formula(3, div.sigma(1.0), div.lipschitz(1.0), cond, 1.0);
            assert!(g < last);
            last = g;
        }
    }

    fn random_instance(seed: u64, div: Divergence) -> Instance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 8;
        let masses: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
        let mu = Measure::from_masses(&masses).unwrap();
        let subs = (0..2)
            .map(|_| {
                let raw = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
                orthonormalize(&raw, &mu, DEFAULT_RANK_TOL).unwrap()
            })
            .collect();
        let cost = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
        Instance::new(mu, cost, subs, div).unwrap()
    }

    #[test]
    fn audit_passes_on_random_instances() {
        for div in [Divergence::Kl, Divergence::Quadratic] {
            for seed in 0..3 {
                let inst = random_instance(seed, div);
                let (_, _, report) = run_and_audit(&inst, &SolverConfig::default(), None).unwrap();
                assert!(report.passed, "{div} seed {seed}: {:?}", report.violations);
                assert!((report.certificate.delta * report.certificate.norm_s_inv - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn envelope_at_zero_is_equality() {
        let r = check_envelope(&[2.0, 1.0, 0.25], 0.5, &[]);
        assert!(r.holds);
        assert_eq!(r.empirical_contraction, Some(0.375));
        assert!(!check_envelope(&[2.0, 1.5], 0.5, &[]).holds);
    }

    #[test]
    fn radius_override_pins_sigma() {
        let inst = random_instance(1, Divergence::Kl);
        let cfg = SolverConfig::default();
        let (trace, _) = crate::solver::run_ipfp(&inst, &cfg).unwrap();
        let reference = reference_optimum(&inst, &cfg).unwrap();
        let (_, geo) = crate::geometry::analyze(inst.subspaces(), inst.mu(), inst.rank_tol()).unwrap();
        let cert = compute_gamma(&trace, &reference, &geo, Divergence::Kl, Some(2.0)).unwrap();
        assert_eq!(cert.radius, 2.0);
        assert_eq!(cert.sigma, (-2.0f64).exp());
        let huge = compute_gamma(&trace, &reference, &geo, Divergence::Kl, Some(400.0)).unwrap();
        assert_eq!(huge.gamma, 0.0);
        assert!(huge.diagnostic.is_some());
    }
}
