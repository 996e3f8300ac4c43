//! File formats: JSON instances, solutions and reports, CSV traces.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::audit::RateCertificate;
use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::measure::{Label, Measure};
use crate::problem::Instance;
use crate::solver::{FinalState, IterateTrace, Solution, SweepRecord};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceSpec {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<Label>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// n rows of d spanning-column values
    pub basis: Vec<Vec<f64>>,
}

/// On-disk instance. The cost is stored unscaled; loading divides it by ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub schema_version: u32,
    pub space: SpaceSpec,
    pub mu: Vec<f64>,
    pub cost: Vec<f64>,
    #[serde(default = "one")]
    pub epsilon: f64,
    pub divergence: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_tol: Option<f64>,
    pub subspaces: Vec<SubspaceSpec>,
    /// Moments of the raw spanning columns; a missing entry means ∫ f dμ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<Option<Vec<f64>>>>,
    /// Coefficients of the raw spanning columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_potentials: Option<Vec<Vec<f64>>>,
}

fn one() -> f64 {
    1.0
}

fn schema(field: impl Into<String>, row: Option<usize>, message: impl Into<String>) -> Error {
    Error::Schema {
        field: field.into(),
        row,
        message: message.into(),
    }
}

impl InstanceFile {
    pub fn from_instance(inst: &Instance) -> Self {
        let subspaces = inst
            .subspaces()
            .iter()
            .map(|s| SubspaceSpec {
                name: s.name().map(str::to_string),
                basis: s.raw().row_iter().map(|r| r.iter().copied().collect()).collect(),
            })
            .collect();
        let raw_targets = inst.raw_targets();
        Self {
            schema_version: SCHEMA_VERSION,
            space: SpaceSpec {
                n: inst.n(),
                labels: inst.space().labels().map(<[Label]>::to_vec),
            },
            mu: inst.mu().weights().to_vec(),
            cost: inst.unscaled_cost().to_vec(),
            epsilon: inst.epsilon(),
            divergence: inst.divergence().name().to_string(),
            rank_tol: Some(inst.rank_tol()),
            subspaces,
            targets: raw_targets.iter().any(Option::is_some).then(|| raw_targets.to_vec()),
            initial_potentials: inst.initial_raw().map(<[Vec<f64>]>::to_vec),
        }
    }

    pub fn into_instance(self) -> Result<Instance> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(schema(
                "schema_version",
                None,
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        let n = self.space.n;
        if n == 0 {
            return Err(schema("space.n", None, "must be at least 1"));
        }
        if self.mu.len() != n {
            return Err(schema("mu", None, format!("expected {n} weights, got {}", self.mu.len())));
        }
        if self.cost.len() != n {
            return Err(schema("cost", None, format!("expected {n} values, got {}", self.cost.len())));
        }
        if let Some(row) = self.cost.iter().position(|c| !c.is_finite()) {
            return Err(schema("cost", Some(row), "non-finite value"));
        }
        let mu = Measure::new(self.mu).map_err(|e| schema("mu", None, e.to_string()))?;
        let divergence: Divergence = self
            .divergence
            .parse()
            .map_err(|e: Error| schema("divergence", None, e.to_string()))?;
        if self.subspaces.is_empty() {
            return Err(schema("subspaces", None, "at least one subspace is required"));
        }
        let mut raw = Vec::with_capacity(self.subspaces.len());
        for (i, s) in self.subspaces.iter().enumerate() {
            let field = format!("subspaces[{i}].basis");
            if s.basis.len() != n {
                return Err(schema(field, None, format!("expected {n} rows, got {}", s.basis.len())));
            }
            let d = s.basis[0].len();
            if d == 0 {
                return Err(schema(field, Some(0), "row has no columns"));
            }
            for (row, r) in s.basis.iter().enumerate() {
                if r.len() != d {
                    return Err(schema(&field, Some(row), format!("expected {d} columns, got {}", r.len())));
                }
                if r.iter().any(|v| !v.is_finite()) {
                    return Err(schema(&field, Some(row), "non-finite value"));
                }
            }
            let m = DMatrix::from_fn(n, d, |x, a| s.basis[x][a]);
            raw.push((s.name.clone(), m));
        }
        let rank_tol = self.rank_tol.unwrap_or(crate::measure::DEFAULT_RANK_TOL);
        let mut inst = Instance::from_raw(mu, self.cost, &raw, divergence, rank_tol)?.with_epsilon(self.epsilon)?;
        if let Some(labels) = self.space.labels {
            inst = inst
                .with_labels(labels)
                .map_err(|e| schema("space.labels", None, e.to_string()))?;
        }
        if let Some(targets) = self.targets {
            if targets.len() != raw.len() {
                return Err(schema(
                    "targets",
                    None,
                    format!("expected {} entries, got {}", raw.len(), targets.len()),
                ));
            }
            for (i, t) in targets.into_iter().enumerate() {
                if let Some(t) = t {
                    inst = inst
                        .with_raw_targets(i, t)
                        .map_err(|e| schema("targets", Some(i), e.to_string()))?;
                }
            }
        }
        if let Some(init) = self.initial_potentials {
            inst = inst
                .with_initial_raw(init)
                .map_err(|e| schema("initial_potentials", None, e.to_string()))?;
        }
        Ok(inst)
    }
}

pub fn read_instance<R: Read>(reader: R) -> Result<Instance> {
    let file: InstanceFile = serde_json::from_reader(reader)?;
    file.into_instance()
}

pub fn write_instance<W: Write>(inst: &Instance, writer: W) -> Result<()> {
    write_json_to(writer, &InstanceFile::from_instance(inst))
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<Instance> {
    read_instance(BufReader::new(File::open(path)?))
}

pub fn save_instance(inst: &Instance, path: impl AsRef<Path>) -> Result<()> {
    write_instance(inst, BufWriter::new(File::create(path)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub divergence: String,
    pub converged: bool,
    pub sweeps: usize,
    pub dual_objective: f64,
    pub gradient_norm: f64,
    pub moment_residuals: Vec<f64>,
    pub negative_mass: f64,
    /// Coefficients in the orthonormal basis of each subspace.
    pub potentials: Vec<Vec<f64>>,
    /// dπ/dμ at every atom
    pub primal_density: Vec<f64>,
}

impl SolutionFile {
    pub fn new(inst: &Instance, sol: &Solution) -> Self {
        Self {
            divergence: inst.divergence().name().to_string(),
            converged: sol.converged,
            sweeps: sol.iterations,
            dual_objective: sol.f_value,
            gradient_norm: sol.grad_norm,
            moment_residuals: sol.moment_residuals.clone(),
            negative_mass: sol.negative_mass,
            potentials: sol.potentials.thetas.iter().map(|t| t.iter().copied().collect()).collect(),
            primal_density: sol.primal_density.values().to_vec(),
        }
    }
}

pub fn write_json_to<W: Write, T: Serialize>(mut writer: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, value)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    write_json_to(BufWriter::new(File::create(path)?), value)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// A report together with the names of the results it checks.
#[derive(Debug, Clone, Serialize)]
pub struct Report<'a, T: Serialize> {
    pub kind: &'a str,
    pub certifies: &'a [&'a str],
    #[serde(flatten)]
    pub body: &'a T,
}

/// One trace line. The final row (after the last sweep) leaves the
/// per-sweep columns empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub sweep: usize,
    #[serde(rename = "F")]
    pub f: f64,
    #[serde(rename = "F_gap")]
    pub f_gap: f64,
    pub grad_sum_norm: f64,
    pub grad_quotient_norm: f64,
    pub radius: f64,
    pub step_sq: Option<f64>,
    /// F_gap
    pub pl_lhs: Option<f64>,
    /// ‖dF‖²_∼ / (2δ²σ)
    pub pl_rhs: Option<f64>,
    /// (1 − γ)^t·F_gap(0)
    pub envelope_bound: Option<f64>,
    /// γ·F_gap
    pub imp_lhs: Option<f64>,
    /// F(h^t) − F(h^{t+1})
    pub imp_rhs: Option<f64>,
    pub step_quotient: Option<f64>,
    pub step_image: Option<f64>,
}

const TRACE_HEADER: [&str; 14] = [
    "sweep",
    "F",
    "F_gap",
    "grad_sum_norm",
    "grad_quotient_norm",
    "radius",
    "step_sq",
    "pl_lhs",
    "pl_rhs",
    "envelope_bound",
    "imp_lhs",
    "imp_rhs",
    "step_quotient",
    "step_image",
];

/// 17 significant digits.
fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn trace_rows(trace: &IterateTrace, gaps: &[f64], cert: &RateCertificate) -> Result<Vec<TraceRow>> {
    let t_len = trace.sweeps.len();
    if gaps.len() != t_len + 1 {
        return Err(Error::MissingTraceField(format!("expected {} optimality gaps, got {}", t_len + 1, gaps.len())));
    }
    let contraction = 1.0 - cert.gamma;
    let pl_scale = 1.0 / (2.0 * cert.delta * cert.delta * cert.sigma);
    let mut rows: Vec<TraceRow> = trace
        .sweeps
        .iter()
        .enumerate()
        .map(|(t, r)| TraceRow {
            sweep: r.sweep,
            f: r.f_value,
            f_gap: gaps[t],
            grad_sum_norm: r.grad_sum_norm,
            grad_quotient_norm: r.grad_quotient_norm,
            radius: r.radius,
            step_sq: Some(r.step_sq),
            pl_lhs: Some(gaps[t]),
            pl_rhs: Some(r.grad_quotient_norm.powi(2) * pl_scale),
            envelope_bound: Some(contraction.powi(t as i32) * gaps[0]),
            imp_lhs: Some(cert.gamma * gaps[t]),
            imp_rhs: Some(r.decrease),
            step_quotient: Some(r.step_quotient_norm),
            step_image: Some(r.step_image_norm),
        })
        .collect();
    let fs = &trace.final_state;
    rows.push(TraceRow {
        sweep: fs.sweep,
        f: fs.f_value,
        f_gap: gaps[t_len],
        grad_sum_norm: fs.grad_sum_norm,
        grad_quotient_norm: fs.grad_quotient_norm,
        radius: fs.radius,
        step_sq: None,
        pl_lhs: None,
        pl_rhs: None,
        envelope_bound: Some(contraction.powi(t_len as i32) * gaps[0]),
        imp_lhs: None,
        imp_rhs: None,
        step_quotient: None,
        step_image: None,
    });
    Ok(rows)
}

pub fn write_trace<W: Write>(rows: &[TraceRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_HEADER)?;
    let opt = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.sweep.to_string(),
            fmt17(r.f),
            fmt17(r.f_gap),
            fmt17(r.grad_sum_norm),
            fmt17(r.grad_quotient_norm),
            fmt17(r.radius),
            opt(r.step_sq),
            opt(r.pl_lhs),
            opt(r.pl_rhs),
            opt(r.envelope_bound),
            opt(r.imp_lhs),
            opt(r.imp_rhs),
            opt(r.step_quotient),
            opt(r.step_image),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trace(rows: &[TraceRow], path: impl AsRef<Path>) -> Result<()> {
    write_trace(rows, BufWriter::new(File::create(path)?))
}

pub fn read_trace_rows<R: Read>(reader: R) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    for h in TRACE_HEADER {
        if !headers.iter().any(|x| x == h) {
            return Err(Error::MissingTraceField(h.to_string()));
        }
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn load_trace_rows(path: impl AsRef<Path>) -> Result<Vec<TraceRow>> {
    read_trace_rows(BufReader::new(File::open(path)?))
}

/// Rebuilds the sweep records and the optimality gaps from trace rows.
pub fn trace_from_rows(rows: &[TraceRow]) -> Result<(IterateTrace, Vec<f64>)> {
    let (last, body) = rows
        .split_last()
        .ok_or_else(|| Error::MissingTraceField("trace has no rows".into()))?;
    let need = |v: Option<f64>, name: &str, row: usize| -> Result<f64> {
        v.ok_or_else(|| Error::MissingTraceField(format!("{name} (row {row})")))
    };
    let mut sweeps = Vec::with_capacity(body.len());
    for (i, r) in body.iter().enumerate() {
        if r.sweep != i {
            return Err(schema("sweep", Some(i), format!("expected {i}, got {}", r.sweep)));
        }
        sweeps.push(SweepRecord {
            sweep: r.sweep,
            f_value: r.f,
            grad_sum_norm: r.grad_sum_norm,
            grad_quotient_norm: r.grad_quotient_norm,
            radius: r.radius,
            step_sq: need(r.step_sq, "step_sq", i)?,
            step_quotient_norm: need(r.step_quotient, "step_quotient", i)?,
            step_image_norm: need(r.step_image, "step_image", i)?,
            decrease: need(r.imp_rhs, "imp_rhs", i)?,
        });
    }
    if last.sweep != body.len() {
        return Err(schema("sweep", Some(body.len()), "final row must follow the last sweep"));
    }
    let final_state = FinalState {
        sweep: last.sweep,
        f_value: last.f,
        grad_sum_norm: last.grad_sum_norm,
        grad_quotient_norm: last.grad_quotient_norm,
        radius: last.radius,
    };
    let gaps = rows.iter().map(|r| r.f_gap).collect();
    let trace = IterateTrace {
        sweeps,
        final_state,
        snapshots: None,
        converged: false,
    };
    Ok((trace, gaps))
}
