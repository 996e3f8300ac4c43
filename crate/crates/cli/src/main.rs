use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ipfp_core::audit::{audit_inequalities, compute_gamma, optimality_gaps, reference_optimum, AuditReport};
use ipfp_core::geometry::{analyze, n_subspace_bounds, two_subspace_norms_from_angle, GeometryReport, ProductBoundReport};
use ipfp_core::instances::{gen_random, random_mmot, random_mot, random_ot2, RandomSpec};
use ipfp_core::io::{
    load_instance, load_trace_rows, save_instance, save_trace, trace_from_rows, trace_rows, write_json, Report,
    SolutionFile,
};
use ipfp_core::solver::{run_ipfp, sinkhorn_closed_form, ProductShape};
use ipfp_core::{Divergence, Error, Instance, Label, SolverConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_AUDIT: u8 = 3;

#[derive(Parser)]
#[command(name = "ipfp", version, about = "Dual IPFP solver with subspace geometry and rate audits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Ot2,
    Mmot,
    Mot,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded instance file.
    Gen {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Restrict all but the last marginal space to mean-zero functions (mmot, ot2).
        #[arg(long)]
        mean_zero: bool,
        /// Atoms per marginal (ot2, mmot), first-marginal atoms (mot) or space size (random).
        #[arg(long)]
        n: Option<usize>,
        /// Number of marginals (mmot) or subspaces (random).
        #[arg(long = "N")]
        big_n: Option<usize>,
        /// Subspace rank (random).
        #[arg(long, default_value_t = 2)]
        rank: usize,
        #[arg(long, default_value = "kl")]
        divergence: String,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
    },
    /// Run the dual IPFP and write the solution and its trace.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        /// Override the divergence stored in the instance.
        #[arg(long)]
        divergence: Option<String>,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 10_000)]
        max_sweeps: usize,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Closed-form Sinkhorn updates (two-marginal kl on a product grid).
        #[arg(long)]
        fast_sinkhorn: bool,
    },
    /// Operator norms, Friedrichs angle and product bounds of the constraint subspaces.
    Geometry {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Recompute the rate certificate and check every sweep of a trace.
    Audit {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Pin the radius R instead of measuring it.
        #[arg(long)]
        radius: Option<f64>,
    },
}

enum Failure {
    Usage(String),
    Numerical(String),
    Audit(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Gen {
            kind,
            seed,
            out,
            mean_zero,
            n,
            big_n,
            rank,
            divergence,
            epsilon,
        } => gen(kind, seed, &out, mean_zero, n, big_n, rank, &divergence, epsilon),
        Command::Solve {
            instance,
            divergence,
            tol,
            max_sweeps,
            trace,
            out,
            fast_sinkhorn,
        } => solve(&instance, divergence.as_deref(), tol, max_sweeps, trace, out, fast_sinkhorn),
        Command::Geometry { instance, report } => geometry(&instance, report),
        Command::Audit {
            instance,
            trace,
            report,
            radius,
        } => audit(&instance, &trace, report, radius),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(EXIT_NUMERICAL)
        }
        Err(Failure::Audit(m)) => {
            eprintln!("audit violation: {m}");
            ExitCode::from(EXIT_AUDIT)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn gen(
    kind: Kind,
    seed: u64,
    out: &PathBuf,
    mean_zero: bool,
    n: Option<usize>,
    big_n: Option<usize>,
    rank: usize,
    divergence: &str,
    epsilon: f64,
) -> Outcome {
    let div: Divergence = divergence.parse()?;
    let inst = match kind {
        Kind::Ot2 => {
            let m = n.unwrap_or(4);
            if mean_zero {
                random_mmot(seed, 2, m, true, 1.0, div)?
            } else {
                random_ot2(seed, m, m, div)?
            }
        }
        Kind::Mmot => random_mmot(seed, big_n.unwrap_or(3), n.unwrap_or(3), mean_zero, 1.0, div)?,
        Kind::Mot => random_mot(seed, n.unwrap_or(4), div)?,
        Kind::Random => {
            let mut spec = RandomSpec::new(n.unwrap_or(10), vec![rank; big_n.unwrap_or(3)]);
            spec.divergence = div;
            gen_random(seed, &spec)?
        }
    };
    let inst = inst.with_epsilon(epsilon)?;
    save_instance(&inst, out)?;
    println!("wrote {} ({} atoms, {} subspaces)", out.display(), inst.n(), inst.n_subspaces());
    Ok(())
}

/// Grid shape from two-coordinate labels, if the atoms form a full product
/// grid in row-major order.
fn product_shape(inst: &Instance) -> Option<ProductShape> {
    let labels = inst.space().labels()?;
    let mut first = BTreeSet::new();
    let mut second = BTreeSet::new();
    let mut coords = Vec::with_capacity(labels.len());
    for l in labels {
        match l {
            Label::Coords(c) if c.len() == 2 => {
                first.insert(c[0].to_bits());
                second.insert(c[1].to_bits());
                coords.push((c[0], c[1]));
            }
            _ => return None,
        }
    }
    let (n1, n2) = (first.len(), second.len());
    if n1 * n2 != labels.len() {
        return None;
    }
    // row-major: the first coordinate is constant along blocks of n2
    let row_major = coords
        .chunks(n2)
        .all(|row| row.iter().all(|(a, _)| a.to_bits() == row[0].0.to_bits()))
        && (0..n2).all(|b| coords.iter().skip(b).step_by(n2).all(|(_, y)| y.to_bits() == coords[b].1.to_bits()));
    row_major.then(|| ProductShape::new(n1, n2))
}

fn solve(
    path: &PathBuf,
    divergence: Option<&str>,
    tol: f64,
    max_sweeps: usize,
    trace_path: Option<PathBuf>,
    out: Option<PathBuf>,
    fast_sinkhorn: bool,
) -> Outcome {
    let mut inst = load_instance(path)?;
    if let Some(d) = divergence {
        inst = inst.with_divergence(d.parse()?);
    }
    if !(tol > 0.0) {
        return Err(Failure::Usage(format!("--tol must be positive, got {tol}")));
    }
    let cfg = SolverConfig {
        sweep_tol: tol,
        max_sweeps,
        ..SolverConfig::default()
    };
    let (trace, sol) = if fast_sinkhorn {
        let shape = product_shape(&inst).ok_or_else(|| {
            Failure::Usage("--fast-sinkhorn needs atoms labelled by a full two-coordinate grid".into())
        })?;
        sinkhorn_closed_form(&inst, shape, &cfg).map_err(|e| match e {
            Error::Precondition(m) => Failure::Usage(m),
            other => other.into(),
        })?
    } else {
        run_ipfp(&inst, &cfg)?
    };

    if let Some(p) = &out {
        write_json(p, &SolutionFile::new(&inst, &sol))?;
    }
    if let Some(p) = &trace_path {
        let reference = reference_optimum(&inst, &cfg)?;
        let gaps = optimality_gaps(&inst, &trace, &sol.potentials, &reference)?;
        let (_, geo) = analyze(inst.subspaces(), inst.mu(), inst.rank_tol())?;
        let cert = compute_gamma(&trace, &reference, &geo, inst.divergence(), None)?;
        save_trace(&trace_rows(&trace, &gaps, &cert)?, p)?;
    }
    println!(
        "{} after {} sweeps: F = {:.17e}, gradient norm {:.3e}",
        if sol.converged { "converged" } else { "not converged" },
        sol.iterations,
        sol.f_value,
        sol.grad_norm
    );
    if !sol.converged {
        return Err(Failure::Numerical(format!(
            "no convergence within {max_sweeps} sweeps (gradient norm {:.3e} > {tol:e})",
            sol.grad_norm
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct TwoSubspaceCheck {
    cos_angle: f64,
    dim_intersection: usize,
    formula_norm_s: f64,
    formula_norm_s_inv: f64,
    svd_norm_s: f64,
    svd_norm_s_inv: f64,
    max_abs_difference: f64,
}

#[derive(Serialize)]
struct GeometryOutput {
    #[serde(flatten)]
    geometry: GeometryReport,
    two_subspace_check: Option<TwoSubspaceCheck>,
    product_bounds: Option<ProductBoundReport>,
    product_bounds_error: Option<String>,
}

fn geometry(path: &PathBuf, report: Option<PathBuf>) -> Outcome {
    let inst = load_instance(path)?;
    let (_, geo) = analyze(inst.subspaces(), inst.mu(), inst.rank_tol())?;
    let two_subspace_check = match &geo.pairwise {
        Some(a) => {
            let (norm, norm_inv) = two_subspace_norms_from_angle(a.cos_angle, a.intersection_trivial())?;
            Some(TwoSubspaceCheck {
                cos_angle: a.cos_angle,
                dim_intersection: a.dim_intersection,
                formula_norm_s: norm,
                formula_norm_s_inv: norm_inv,
                svd_norm_s: geo.norm_s,
                svd_norm_s_inv: geo.norm_s_inv,
                max_abs_difference: (norm - geo.norm_s).abs().max((norm_inv - geo.norm_s_inv).abs()),
            })
        }
        None => None,
    };
    let (product_bounds, product_bounds_error) = if inst.n_subspaces() >= 2 {
        match n_subspace_bounds(inst.subspaces(), inst.mu(), inst.rank_tol()) {
            Ok(b) => (Some(b), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };
    println!(
        "norm_s = {:.17e}, norm_s_inv = {:.17e}, condition = {:.6e}, kernel dimension {}",
        geo.norm_s, geo.norm_s_inv, geo.condition, geo.kernel_dim
    );
    let body = GeometryOutput {
        geometry: geo,
        two_subspace_check,
        product_bounds,
        product_bounds_error,
    };
    if let Some(p) = report {
        write_json(
            p,
            &Report {
                kind: "geometry",
                certifies: &["two_subspace_norms", "n_subspace_product_bound"],
                body: &body,
            },
        )?;
    }
    Ok(())
}

fn audit(path: &PathBuf, trace_path: &PathBuf, report: Option<PathBuf>, radius: Option<f64>) -> Outcome {
    let inst = load_instance(path)?;
    let rows = load_trace_rows(trace_path)?;
    let (trace, gaps) = trace_from_rows(&rows)?;
    let cfg = SolverConfig::default();
    let reference = reference_optimum(&inst, &cfg)?;
    let (_, geo) = analyze(inst.subspaces(), inst.mu(), inst.rank_tol())?;
    let cert = compute_gamma(&trace, &reference, &geo, inst.divergence(), radius)?;
    let result: AuditReport = audit_inequalities(&inst, &trace, &gaps, &cert)?;
    if let Some(p) = report {
        write_json(
            p,
            &Report {
                kind: "rate_audit",
                certifies: &[
                    "contraction_coefficient",
                    "pl_inequality",
                    "gradient_step_bound",
                    "step_improvement_bound",
                    "improvement_rate",
                    "norm_comparison",
                    "relative_improvement",
                    "exponential_envelope",
                ],
                body: &result,
            },
        )?;
    }
    println!(
        "gamma = {:.6e}, rho = {:.17e}, {} sweeps audited, {} violations",
        cert.gamma,
        cert.rho,
        result.sweeps.len(),
        result.violations.len()
    );
    if let Some(d) = &cert.diagnostic {
        println!("note: {d}");
    }
    if !result.passed {
        let first = result
            .violations
            .first()
            .map(|v| format!("{} at sweep {} ({:e} > {:e})", v.check, v.sweep, v.lhs, v.rhs))
            .unwrap_or_else(|| "envelope".into());
        return Err(Failure::Audit(first));
    }
    Ok(())
}
