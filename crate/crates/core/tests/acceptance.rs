//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if
//! any criterion fails.

use std::f64::consts::SQRT_2;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ipfp_core::audit::run_and_audit;
use ipfp_core::batch::audit_all;
use ipfp_core::geometry::{analyze, assemble_sum_operator, friedrichs_angle, n_subspace_bounds};
use ipfp_core::instances::{
    dominating_three_point, gen_mmot, gen_mot, gen_random, mot_angle_bound, random_mmot, random_mot, random_ot2,
    random_subspace_pair, random_zero_mean_marginal, MotSpec, RandomSpec,
};
use ipfp_core::measure::{sum_field, DEFAULT_RANK_TOL};
use ipfp_core::solver::{
    dual_objective, partial_gradient, primal_recover, riesz_gradient, run_ipfp, sinkhorn_closed_form, ProductShape,
};
use ipfp_core::{Divergence, Instance, Measure, PotentialTuple, SolverConfig, Subspace};

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: String) -> Outcome {
    Outcome { ok, detail }
}

fn random_measure(rng: &mut ChaCha8Rng, n: usize) -> Measure {
    let m: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    Measure::from_masses(&m).unwrap()
}

/// Cosines of the principal angles: square roots of the eigenvalues of GᵀG
/// with G = Q₁ᵀ diag(μ) Q₂.
fn principal_cosines(h1: &Subspace, h2: &Subspace, mu: &Measure) -> Vec<f64> {
    let w = DMatrix::from_diagonal(&DVector::from_column_slice(mu.weights()));
    let g = h1.basis().transpose() * w * h2.basis();
    let gram = if g.nrows() <= g.ncols() { &g * g.transpose() } else { g.transpose() * &g };
    let mut sv: Vec<f64> = gram.symmetric_eigen().eigenvalues.iter().map(|e| e.max(0.0).sqrt()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0_f64;
    let mut nontrivial = 0;
    for _ in 0..200 {
        let n = rng.random_range(4..=12);
        let r1 = rng.random_range(1..=n / 2);
        let r2 = rng.random_range(1..=(n - r1).max(1));
        let kmax = r1.min(r2) - 1;
        let k = rng.random_range(0..=kmax.min(n - r1.max(r2)));
        if r1 + r2 - k > n {
            continue;
        }
        let mu = random_measure(&mut rng, n);
        let (h1, h2) = random_subspace_pair(&mut rng, &mu, r1, r2, k).unwrap();
        let (_, report) = analyze(&[h1.clone(), h2.clone()], &mu, DEFAULT_RANK_TOL).unwrap();

        let cos = principal_cosines(&h1, &h2, &mu);
        let shared = cos.iter().filter(|c| **c > 1.0 - 1e-8).count();
        let c = cos.get(shared).copied().unwrap_or(0.0);
        let norm = if shared == 0 { (1.0 + c).sqrt() } else { SQRT_2 };
        let norm_inv = 1.0 / (1.0 - c).sqrt();
        if shared > 0 {
            nontrivial += 1;
        }
        let angle = friedrichs_angle(&h1, &h2, &mu, DEFAULT_RANK_TOL).unwrap();
        if angle.dim_intersection != k || shared != k {
            return outcome(false, format!("intersection dimension {} / {shared}, expected {k}", angle.dim_intersection));
        }
        worst = worst
            .max((report.norm_s - norm).abs())
            .max((report.norm_s_inv - norm_inv).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-8 && secs < 10.0,
        format!("max |SVD − formula| = {worst:.2e} (tol 1e-8), {nontrivial} with non-trivial intersection, {secs:.2} s (< 10 s)"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0_f64;
    for n_marg in [2, 3, 4] {
        let marginals: Vec<Measure> = (0..n_marg).map(|_| random_measure(&mut rng, 3)).collect();
        let n = 3usize.pow(n_marg as u32);
        let inst = gen_mmot(&marginals, vec![0.0; n], true, Divergence::Kl).unwrap();
        let (_, r) = analyze(inst.subspaces(), inst.mu(), DEFAULT_RANK_TOL).unwrap();
        worst = worst.max((r.norm_s - 1.0).abs()).max((r.norm_s_inv - 1.0).abs());
    }
    outcome(worst <= 1e-10, format!("N ∈ {{2,3,4}}: max |‖Ŝ‖ − 1|, |‖Ŝ⁻¹‖ − 1| = {worst:.2e} (tol 1e-10)"))
}

fn criterion_3() -> Outcome {
    let mut sharp = 0.0_f64;
    let mut norm_err = 0.0_f64;
    for a in [0.5, 1.0, 2.0] {
        for (x2, mu2) in dominating_three_point(a) {
            let spec = MotSpec::product(vec![-a, a], vec![0.5, 0.5], x2.clone(), mu2.clone());
            let inst = gen_mot(&spec, vec![0.0; 2 * x2.len()], Divergence::Kl).unwrap();
            let subs = inst.subspaces();
            let angle = friedrichs_angle(&subs[0], &subs[1], inst.mu(), DEFAULT_RANK_TOL).unwrap();
            let v2: f64 = x2.iter().zip(&mu2).map(|(x, w)| w * x * x).sum();
            sharp = sharp.max((angle.cos_angle - a / (a * a + v2).sqrt()).abs());
            let (_, r) = analyze(subs, inst.mu(), DEFAULT_RANK_TOL).unwrap();
            norm_err = norm_err.max((r.norm_s - SQRT_2).abs());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut excess = f64::NEG_INFINITY;
    for _ in 0..20 {
        let n1 = rng.random_range(3..=6);
        let a = rng.random_range(0.5..2.0);
        let (x1, mu1) = random_zero_mean_marginal(&mut rng, n1, a);
        let choice = rng.random_range(0..3);
        let (x2, mu2) = dominating_three_point(a).swap_remove(choice);
        let spec = MotSpec::product(x1, mu1, x2, mu2);
        let inst = gen_mot(&spec, vec![0.0; n1 * spec.x2_atoms.len()], Divergence::Kl).unwrap();
        let subs = inst.subspaces();
        let angle = friedrichs_angle(&subs[0], &subs[1], inst.mu(), DEFAULT_RANK_TOL).unwrap();
        let v2: f64 = spec.x2_atoms.iter().zip(&spec.mu2).map(|(x, w)| w * x * x).sum();
        excess = excess.max(angle.cos_angle - a / (a * a + v2).sqrt());
        let (_, r) = analyze(subs, inst.mu(), DEFAULT_RANK_TOL).unwrap();
        norm_err = norm_err.max((r.norm_s - SQRT_2).abs());
        assert!((mot_angle_bound(spec.a(), spec.v2()).unwrap() - a / (a * a + v2).sqrt()).abs() < 1e-12);
    }
    outcome(
        sharp <= 1e-8 && excess <= 1e-8 && norm_err <= 1e-10,
        format!(
            "two-point |cos − a/√(a²+V₂)| = {sharp:.2e} (tol 1e-8); 20 draws max(cos − bound) = {excess:.2e} (≤ 1e-8); |‖Ŝ‖ − √2| = {norm_err:.2e} (tol 1e-10)"
        ),
    )
}

fn criterion_4() -> Outcome {
    let cfg = SolverConfig {
        record_intermediates: true,
        sweep_tol: 1e-12,
        ..SolverConfig::default()
    };
    let shape = ProductShape::new(5, 5);
    let (mut field_err, mut density_err, mut residual) = (0.0_f64, 0.0_f64, 0.0_f64);
    for seed in 0..20 {
        let inst = random_ot2(seed, 5, 5, Divergence::Kl).unwrap();
        let (tg, sg) = run_ipfp(&inst, &cfg).unwrap();
        let (ts, ss) = sinkhorn_closed_form(&inst, shape, &cfg).unwrap();
        let (a, b) = (tg.snapshots.unwrap(), ts.snapshots.unwrap());
        if a.len() != b.len() {
            return outcome(false, format!("seed {seed}: {} vs {} sweeps", a.len() - 1, b.len() - 1));
        }
        for (ha, hb) in a.iter().zip(&b) {
            let fa = sum_field(ha, inst.subspaces()).unwrap();
            let fb = sum_field(hb, inst.subspaces()).unwrap();
            for (x, y) in fa.values().iter().zip(fb.values()) {
                field_err = field_err.max((x - y).abs());
            }
        }
        for (x, y) in sg.primal_density.values().iter().zip(ss.primal_density.values()) {
            density_err = density_err.max((x - y).abs());
        }
        // marginal residuals of the closed-form solution
        let w = inst.mu().weights();
        let d = ss.primal_density.values();
        for (axis, m) in [(0, 5), (1, 5)] {
            for k in 0..m {
                let mass: f64 = (0..25)
                    .filter(|x| if axis == 0 { x / 5 == k } else { x % 5 == k })
                    .map(|x| w[x] * d[x])
                    .sum();
                let target: f64 = (0..25)
                    .filter(|x| if axis == 0 { x / 5 == k } else { x % 5 == k })
                    .map(|x| w[x])
                    .sum();
                residual = residual.max((mass - target).abs());
            }
        }
    }
    outcome(
        field_err <= 1e-10 && density_err <= 1e-10 && residual <= 1e-10,
        format!("per-sweep ⊕h diff {field_err:.2e}, density diff {density_err:.2e}, marginal residual {residual:.2e} (tol 1e-10)"),
    )
}

fn audit_suite() -> Vec<(String, Instance)> {
    let mut out = Vec::new();
    for div in [Divergence::Kl, Divergence::Quadratic] {
        out.push((format!("ot2/{div}"), random_ot2(1, 4, 4, div).unwrap()));
        out.push((format!("mmot3/{div}"), random_mmot(2, 3, 3, true, 0.5, div).unwrap()));
        out.push((format!("mot/{div}"), random_mot(3, 4, div).unwrap()));
        for seed in 0..10 {
            let mut spec = RandomSpec::new(8 + (seed as usize % 5), vec![2, 3, 2]);
            spec.divergence = div;
            out.push((format!("random{seed}/{div}"), gen_random(seed, &spec).unwrap()));
        }
    }
    out
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let suite = audit_suite();
    let insts: Vec<Instance> = suite.iter().map(|(_, i)| i.clone()).collect();
    let reports = audit_all(&insts, &SolverConfig::default(), true);
    let mut failed = Vec::new();
    let mut sweeps = 0;
    for ((name, _), rep) in suite.iter().zip(&reports) {
        match rep {
            Ok(r) => {
                sweeps += r.sweeps.len();
                if !(r.passed && r.envelope.holds && r.certificate.gamma > 0.0) {
                    let first = r.violations.first().map(|v| format!("{} at sweep {}", v.check, v.sweep));
                    failed.push(format!("{name}: {}", first.unwrap_or_else(|| "envelope".into())));
                }
            }
            Err(e) => failed.push(format!("{name}: {e}")),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        failed.is_empty() && secs < 60.0,
        format!(
            "{} instances, {sweeps} audited sweeps, violations: [{}], {secs:.2} s (< 60 s)",
            suite.len(),
            failed.join("; ")
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut worst = 0.0_f64;
    let mut radius_ok = true;
    let mut lines = Vec::new();
    for (n_marg, m, scale) in [(2, 4, 0.05), (3, 3, 0.02), (3, 3, 0.05)] {
        let inst = random_mmot(60 + n_marg as u64, n_marg, m, true, scale, Divergence::Kl).unwrap();
        let c_inf = inst.cost().values().iter().fold(0.0_f64, |a, c| a.max(c.abs()));
        let pinned = (4 * n_marg - 2) as f64 * c_inf;
        let (_, _, report) = run_and_audit(&inst, &SolverConfig::default(), Some(pinned)).unwrap();
        let cert = &report.certificate;
        let measured = cert.trace_radius.max(cert.optimizer_radius);
        radius_ok &= measured <= pinned;
        let oracle = (-((16 * n_marg - 8) as f64) * c_inf).exp() / n_marg as f64;
        worst = worst.max((cert.gamma - oracle).abs());
        lines.push(format!("N={n_marg}: R={measured:.3e} ≤ {pinned:.3e}"));
    }
    outcome(
        worst <= 1e-12 && radius_ok,
        format!("|γ − e^{{−(16N−8)‖c‖∞}}/N| = {worst:.2e} (tol 1e-12); {}", lines.join(", ")),
    )
}

fn random_tuple(rng: &mut ChaCha8Rng, subs: &[Subspace], scale: f64) -> PotentialTuple {
    PotentialTuple {
        thetas: subs
            .iter()
            .map(|s| DVector::from_fn(s.rank(), |_, _| rng.random_range(-scale..scale)))
            .collect(),
    }
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst = 0.0_f64;
    let eps = 1e-5;
    for k in 0..50 {
        let div = if k % 2 == 0 { Divergence::Kl } else { Divergence::Quadratic };
        let n = rng.random_range(6..=10);
        let mut spec = RandomSpec::new(n, vec![rng.random_range(1..=3), rng.random_range(1..=3)]);
        spec.divergence = div;
        let inst = gen_random(k, &spec).unwrap();
        let subs = inst.subspaces();
        let h = random_tuple(&mut rng, subs, 0.5);
        let d = random_tuple(&mut rng, subs, 1.0);
        let grad = riesz_gradient(&inst, &h).unwrap();
        let an = grad.stacked().dot(&d.stacked());
        let plus = h.add(&PotentialTuple::from_stacked(&(d.stacked() * eps), subs));
        let minus = h.sub(&PotentialTuple::from_stacked(&(d.stacked() * eps), subs));
        let fd = (dual_objective(&inst, &plus).unwrap() - dual_objective(&inst, &minus).unwrap()) / (2.0 * eps);
        worst = worst.max((fd - an).abs() / an.abs());

        // one block at a time
        let i = rng.random_range(0..subs.len());
        let gi = partial_gradient(&inst, &h, i).unwrap();
        let mut di = PotentialTuple::zeros(subs);
        di.thetas[i] = d.thetas[i].clone();
        let an_i = gi.dot(&d.thetas[i]);
        let p = h.add(&PotentialTuple::from_stacked(&(di.stacked() * eps), subs));
        let m = h.sub(&PotentialTuple::from_stacked(&(di.stacked() * eps), subs));
        let fd_i = (dual_objective(&inst, &p).unwrap() - dual_objective(&inst, &m).unwrap()) / (2.0 * eps);
        worst = worst.max((fd_i - an_i).abs() / an_i.abs());
    }
    outcome(worst <= 1e-6, format!("max relative error {worst:.2e} over 50 triples (tol 1e-6)"))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut insts: Vec<Instance> = Vec::new();
    for s in 0..5 {
        insts.push(random_mmot(s, 3, 3, false, 0.5, Divergence::Kl).unwrap());
        insts.push(random_mot(s, 3, Divergence::Quadratic).unwrap());
        let mu = random_measure(&mut rng, 9);
        let (h1, h2) = random_subspace_pair(&mut rng, &mu, 4, 3, 2).unwrap();
        let cost = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
        insts.push(Instance::new(mu, cost, vec![h1, h2], Divergence::Kl).unwrap());
    }
    let mut worst = 0.0_f64;
    let mut with_kernel = 0;
    for inst in &insts {
        let subs = inst.subspaces();
        let op = assemble_sum_operator(subs, inst.mu(), DEFAULT_RANK_TOL).unwrap();
        let kernel = op.kernel_basis();
        if kernel.ncols() == 0 {
            continue;
        }
        with_kernel += 1;
        for _ in 0..4 {
            let h = random_tuple(&mut rng, subs, 0.5);
            let z = DVector::from_fn(kernel.ncols(), |_, _| rng.random_range(-2.0..2.0));
            let g = PotentialTuple::from_stacked(&(h.stacked() + kernel * z), subs);
            let df = (dual_objective(inst, &h).unwrap() - dual_objective(inst, &g).unwrap()).abs();
            let dg = (riesz_gradient(inst, &h).unwrap().stacked() - riesz_gradient(inst, &g).unwrap().stacked()).amax();
            let pa = primal_recover(inst, &h).unwrap();
            let pb = primal_recover(inst, &g).unwrap();
            let dp = pa.values().iter().zip(pb.values()).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            worst = worst.max(df).max(dg).max(dp);
        }
    }
    outcome(
        worst < 1e-10 && with_kernel == insts.len(),
        format!("{with_kernel} instances with ker S ≠ 0, max change {worst:.2e} (< 1e-10)"),
    )
}

fn criterion_9() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut with_angle_form = 0;
    for seed in 0..50 {
        let n = 6 + (seed as usize % 7);
        let ranks = if seed % 2 == 0 { vec![1, 2, 2] } else { vec![2, 2, 3] };
        let inst = gen_random(900 + seed, &RandomSpec::new(n, ranks)).unwrap();
        let b = n_subspace_bounds(inst.subspaces(), inst.mu(), DEFAULT_RANK_TOL).unwrap();
        let (_, r) = analyze(inst.subspaces(), inst.mu(), DEFAULT_RANK_TOL).unwrap();
        worst = worst.max((r.condition - b.condition_bound) / b.condition_bound);
        if let Some(a) = b.angle_condition_bound {
            with_angle_form += 1;
            worst = worst.max((r.condition - a) / a);
        }
    }
    outcome(
        worst <= 1e-8,
        format!("max (direct − bound)/bound = {worst:.2e} (≤ 1e-8), {with_angle_form} with all stepwise intersections trivial"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("two-subspace norm identities", criterion_1),
        ("MMOT orthogonality", criterion_2),
        ("MOT angle sharpness and bound", criterion_3),
        ("Sinkhorn equivalence", criterion_4),
        ("inequality audit", criterion_5),
        ("MMOT constant reproduction", criterion_6),
        ("gradient correctness", criterion_7),
        ("gauge invariance", criterion_8),
        ("N-subspace product bound", criterion_9),
    ];
    let mut failures = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let out = run();
        if !out.ok {
            failures += 1;
        }
        println!("[{}] {}. {name}: {}", if out.ok { "PASS" } else { "FAIL" }, k + 1, out.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
