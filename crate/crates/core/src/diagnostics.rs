//! Residuals that turn structural properties of the discrete KvN system into
//! numbers, and the per-run verification report that collects them.
//!
//! Threshold checks are written `!(x <= tol)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::{self, Write as _};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::fields::{BoundaryClassification, NoOutflowVerdict, VectorField};
use crate::geometry::Grid;
use crate::operators::{apply, flux_divergence, ComplexField, RealField, SparseOperator};
use crate::point::Point;
use crate::propagators::{OracleOutput, Propagation, Scheme};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("order measurement needs at least two points (got {0})")]
    TooFewPoints(usize),
    #[error("mesh sizes must be positive and strictly decreasing")]
    NotRefining,
    #[error("errors must be positive and finite (got {0:e})")]
    InvalidError(f64),
    #[error("some errors are at round-off level and some are not; no order is defined")]
    Degenerate,
}

/// Errors at or below this level count as exact.
pub const EXACT_ERROR: f64 = 1e-14;

/// Outcome of an order-of-accuracy measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Order {
    Measured(f64),
    /// Every error is at round-off level.
    Exact,
}

impl Order {
    /// `Exact` satisfies every lower bound.
    pub fn at_least(&self, min: f64) -> bool {
        match self {
            Order::Measured(p) => *p >= min,
            Order::Exact => true,
        }
    }

    pub fn within(&self, lo: f64, hi: f64) -> bool {
        match self {
            Order::Measured(p) => (lo..=hi).contains(p),
            Order::Exact => true,
        }
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Order::Measured(p) => write!(f, "{p:e}"),
            Order::Exact => f.write_str("exact"),
        }
    }
}

/// Least-squares slope of log e against log h.
pub fn measure_order(points: &[(f64, f64)]) -> Result<Order, DiagnosticsError> {
    if points.len() < 2 {
        return Err(DiagnosticsError::TooFewPoints(points.len()));
    }
    if points.windows(2).any(|w| !(w[1].0 < w[0].0)) || points.iter().any(|p| !(p.0 > 0.0)) {
        return Err(DiagnosticsError::NotRefining);
    }
    if let Some(&(_, e)) = points.iter().find(|p| !(p.1.is_finite() && p.1 >= 0.0)) {
        return Err(DiagnosticsError::InvalidError(e));
    }
    let exact = points.iter().filter(|p| p.1 <= EXACT_ERROR).count();
    if exact == points.len() {
        return Ok(Order::Exact);
    }
    if exact > 0 {
        return Err(DiagnosticsError::Degenerate);
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(Order::Measured(sxy / sxx))
}

/// Default seed for the random dissipativity probes.
pub const DEFAULT_PROBE_SEED: u64 = 0x6b76_6e5f_7072_6f62;
pub const DISSIPATIVITY_PROBES: usize = 100;

/// max over seeded complex Gaussian probes of
/// |Re⟨Aψ, ψ⟩_w| / (‖ψ‖²_w ‖A‖_∞).
pub fn dissipativity_residual(a: &SparseOperator, probes: usize, seed: u64) -> f64 {
    let scale = a.inf_norm();
    if scale == 0.0 || a.dim() == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = a.weights();
    (0..probes)
        .map(|_| {
            let psi = ComplexField::from_values(
                (0..a.dim())
                    .map(|_| Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
                    .collect(),
            );
            let apsi = apply(a, &psi).expect("probe has operator dimension");
            apsi.inner_w(&psi, w).re.abs() / (psi.norm_w(w).powi(2) * scale)
        })
        .fold(0.0, f64::max)
}

/// max_j |Σ_i w_i M_ij|: total mass created by M acting on a unit mass in
/// cell j.
pub fn mass_conservation_defect(pf: &SparseOperator) -> f64 {
    let w = pf.weights();
    let mut col = vec![0.0; pf.dim()];
    for (i, j, v) in pf.triplets() {
        col[j] += w[i] * v;
    }
    col.iter().map(|c| c.abs()).fold(0.0, f64::max)
}

pub fn boundary_flux_max(op: &SparseOperator) -> f64 {
    op.boundary_flux().iter().map(|f| f.abs()).fold(0.0, f64::max)
}

fn gaussian(center: Point, sigma: f64) -> impl Fn(&Point) -> f64 {
    move |x: &Point| (-(*x - center).dot(&(*x - center)) / (2.0 * sigma * sigma)).exp()
}

/// Smooth function supported in the ball of radius `radius` around `center`.
fn compact_bump(center: Point, radius: f64) -> impl Fn(&Point) -> f64 {
    move |x: &Point| {
        let r2 = (*x - center).dot(&(*x - center)) / (radius * radius);
        if r2 < 1.0 {
            (1.0 - 1.0 / (1.0 - r2)).exp()
        } else {
            0.0
        }
    }
}

/// Two probe centers inside the domain, offset from its middle.
fn probe_centers(grid: &Grid) -> (Point, Point, f64) {
    let (lo, hi) = grid.domain().bounding_box();
    let mid = (lo + hi) * 0.5;
    let diam = grid.domain().diameter();
    let mut shift = Point::zeros(grid.dim());
    shift[0] = 0.08 * diam;
    if grid.dim() > 1 {
        shift[1] = 0.03 * diam;
    }
    (mid + shift, mid - shift * 0.6, diam)
}

fn unit_probe(grid: &Grid, f: impl Fn(&Point) -> f64) -> ComplexField {
    let mut p = ComplexField::from_real(&RealField::sample(grid, f).values);
    let n = p.norm_w(grid.volumes());
    if n > 0.0 {
        p.scale(1.0 / n);
    }
    p
}

/// Discrete Green's identity with vanishing boundary trace:
/// |⟨(div F)ψ, φ⟩_w − ⟨D_h(ψF), φ⟩_w − ⟨ψ, D_h(φF)⟩_w| for a pair of unit
/// Gaussian probes, plus the boundary term Σ_faces ψ φ (flux through face),
/// which the zero-flux closure makes identically zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenResidual {
    pub residual: f64,
    pub boundary_term: f64,
}

pub fn green_residual(field: &VectorField, grid: &Grid, pf: &SparseOperator) -> GreenResidual {
    let (c1, c2, diam) = probe_centers(grid);
    let sigma = 0.08 * diam;
    let psi = unit_probe(grid, gaussian(c1, sigma));
    let phi = unit_probe(grid, gaussian(c2, sigma));
    let w = grid.volumes();
    let div_psi = ComplexField::from_values(
        grid.cells()
            .iter()
            .zip(&psi.values)
            .map(|(x, z)| z * field.divergence(x))
            .collect(),
    );
    let lhs = div_psi.inner_w(&phi, w);
    let d_psi = flux_divergence(pf, &psi).inner_w(&phi, w);
    let d_phi = psi.inner_w(&flux_divergence(pf, &phi), w);
    let boundary_term = grid
        .boundary_faces()
        .iter()
        .zip(pf.boundary_flux())
        .map(|(f, flux)| (psi.values[f.cell_index] * phi.values[f.cell_index]).norm() * flux.abs())
        .sum();
    GreenResidual {
        residual: (lhs - d_psi - d_phi).norm(),
        boundary_term,
    }
}

/// |⟨L_h f, ρ⟩_w − ⟨f, M ρ⟩_w| for compactly supported unit probes, where the
/// flux operator M plays the role of the adjoint of L_h.
pub fn duality_residual(grid: &Grid, koopman: &SparseOperator, pf: &SparseOperator) -> f64 {
    let (c1, c2, diam) = probe_centers(grid);
    let radius = 0.3 * diam;
    let f = unit_probe(grid, compact_bump(c1, radius));
    let rho = unit_probe(grid, compact_bump(c2, radius));
    let w = grid.volumes();
    let lf = apply(koopman, &f).expect("grid dimension");
    let prho = apply(pf, &rho).expect("grid dimension");
    (lf.inner_w(&rho, w) - f.inner_w(&prho, w)).norm()
}

/// max over interior cells of |(Aψ + Lψ)_i|, relative to max |(Aψ)_i|, for
/// a smooth Gaussian probe. Vanishes in the limit for divergence-free F.
pub fn kvn_koopman_discrepancy(grid: &Grid, kvn: &SparseOperator, koopman: &SparseOperator) -> f64 {
    let (c1, _, diam) = probe_centers(grid);
    let psi = unit_probe(grid, gaussian(c1, 0.1 * diam));
    let a = apply(kvn, &psi).expect("grid dimension");
    let l = apply(koopman, &psi).expect("grid dimension");
    let scale = a.values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    (0..grid.len())
        .filter(|&i| grid.is_interior_cell(i))
        .map(|i| (a.values[i] + l.values[i]).norm())
        .fold(0.0, f64::max)
        / scale
}

/// Acceptance thresholds applied by [`VerificationReport::failures`].
pub mod thresholds {
    pub const SKEWNESS: f64 = 1e-13;
    pub const DISSIPATIVITY: f64 = 1e-12;
    pub const NORM_DRIFT: f64 = 1e-9;
    pub const MASS: f64 = 1e-12;
    pub const SEMIGROUP: f64 = 1e-12;
    pub const ORACLE_SELF_CONSISTENCY: f64 = 1e-12;
}

/// Report keys and the property each one measures.
pub const SCHEMA: &[(&str, &str)] = &[
    ("skewness_defect", "skew-symmetry of the KvN generator"),
    ("dissipativity_residual", "dissipativity with equality, Re<A psi, psi> = 0"),
    ("green_residual", "Green's formula for fields with vanishing normal trace"),
    ("green_boundary_term", "boundary integral of psi phi F.nu in Green's formula"),
    ("mass_defect", "mass conservation of the Perron-Frobenius generator"),
    ("norm_drift", "norm conservation of the unitary KvN evolution"),
    ("semigroup_residual", "semigroup law T(t)T(s) = T(t+s)"),
    ("boundary_flux_max", "zero-flux closure psi F.nu = 0 on the boundary"),
    ("oracle_l2_error", "KvN solution along characteristics"),
    ("born_l1_error", "Born rule rho = |psi|^2 against the Liouville density"),
    ("oracle_self_consistency", "squared KvN characteristic weight equals the Liouville weight"),
];

/// Everything a completed run hands to [`verify_run`].
pub struct RunArtifacts<'a> {
    pub scenario: &'a str,
    pub grid: &'a Grid,
    pub field: &'a VectorField,
    pub kvn: &'a SparseOperator,
    pub pf: &'a SparseOperator,
    pub classification: &'a BoundaryClassification,
    pub propagation: Option<&'a Propagation>,
    pub scheme: Scheme,
    pub kvn_oracle: Option<&'a OracleOutput<ComplexField>>,
    pub liouville_oracle: Option<&'a OracleOutput<RealField>>,
    pub semigroup_residual: Option<f64>,
    pub probe_seed: u64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub scenario: String,
    pub probe_seed: u64,
    pub threads: usize,
    pub cells: usize,
    pub scheme: Scheme,
    pub skewness_defect: f64,
    pub dissipativity_residual: f64,
    pub green_residual: f64,
    pub green_boundary_term: f64,
    pub mass_defect: f64,
    pub boundary_flux_max: f64,
    pub norm_drift: Option<f64>,
    pub semigroup_residual: Option<f64>,
    pub oracle_l2_error: Option<f64>,
    pub born_l1_error: Option<f64>,
    pub oracle_self_consistency: Option<f64>,
    pub oracle_exit_count: Option<usize>,
    pub convergence_orders: Vec<(String, Order)>,
    pub no_outflow_ok: bool,
    pub outflow_faces: usize,
    pub max_outflow: f64,
    pub steps: Option<usize>,
    pub final_time: Option<f64>,
}

/// Fills a report from run artifacts. Deterministic for fixed inputs.
pub fn verify_run(run: &RunArtifacts<'_>) -> VerificationReport {
    let w = run.grid.volumes();
    let green = green_residual(run.field, run.grid, run.pf);
    let verdict = crate::fields::check_no_outflow(run.classification);
    let outflow_faces = match &verdict {
        NoOutflowVerdict::Ok => 0,
        NoOutflowVerdict::Violated(v) => v.len(),
    };
    let mut report = VerificationReport {
        scenario: run.scenario.to_string(),
        probe_seed: run.probe_seed,
        threads: run.threads,
        cells: run.grid.len(),
        scheme: run.scheme,
        skewness_defect: crate::operators::skewness_defect(run.kvn),
        dissipativity_residual: dissipativity_residual(run.kvn, DISSIPATIVITY_PROBES, run.probe_seed),
        green_residual: green.residual,
        green_boundary_term: green.boundary_term,
        mass_defect: mass_conservation_defect(run.pf),
        boundary_flux_max: boundary_flux_max(run.kvn).max(boundary_flux_max(run.pf)),
        norm_drift: run.propagation.map(Propagation::max_norm_drift),
        semigroup_residual: run.semigroup_residual,
        oracle_l2_error: None,
        born_l1_error: None,
        oracle_self_consistency: None,
        oracle_exit_count: None,
        convergence_orders: Vec::new(),
        no_outflow_ok: verdict.is_ok(),
        outflow_faces,
        max_outflow: run.classification.max_outflow,
        steps: run.propagation.map(|p| p.steps),
        final_time: run.propagation.map(|p| p.final_time),
    };
    if let (Some(prop), Some(kvn)) = (run.propagation, run.kvn_oracle) {
        report.oracle_l2_error = Some(prop.final_field.distance_w(&kvn.field, w));
        report.oracle_exit_count = Some(kvn.exited.len());
        if let Some(rho) = run.liouville_oracle {
            report.born_l1_error = Some(prop.final_field.density().l1_distance(&rho.field, w));
            report.oracle_self_consistency = Some(
                kvn.field
                    .values
                    .iter()
                    .zip(&rho.field.values)
                    .map(|(z, r)| (z.norm_sqr() - r).abs())
                    .fold(0.0, f64::max),
            );
        }
    }
    report
}

impl VerificationReport {
    /// Thresholds that failed; empty when the run passes.
    pub fn failures(&self) -> Vec<&'static str> {
        use thresholds::*;
        let mut out = Vec::new();
        if !(self.skewness_defect <= SKEWNESS) {
            out.push("skewness_defect");
        }
        if !(self.dissipativity_residual <= DISSIPATIVITY) {
            out.push("dissipativity_residual");
        }
        if !(self.mass_defect <= MASS) {
            out.push("mass_defect");
        }
        if self.boundary_flux_max != 0.0 || self.green_boundary_term != 0.0 {
            out.push("boundary_flux_max");
        }
        // Conservation laws are properties of the Cayley map only.
        if self.scheme == Scheme::Cayley {
            if self.norm_drift.is_some_and(|d| !(d <= NORM_DRIFT)) {
                out.push("norm_drift");
            }
            if self.semigroup_residual.is_some_and(|r| !(r <= SEMIGROUP)) {
                out.push("semigroup_residual");
            }
        }
        if self.oracle_self_consistency.is_some_and(|r| !(r <= ORACLE_SELF_CONSISTENCY)) {
            out.push("oracle_self_consistency");
        }
        let finite = [
            Some(self.green_residual),
            self.oracle_l2_error,
            self.born_l1_error,
        ];
        if finite.iter().flatten().any(|v| !v.is_finite()) {
            out.push("non_finite_residual");
        }
        out
    }

    pub fn passes(&self) -> bool {
        self.failures().is_empty()
    }

    /// Flat `name=value` text, one metric per line, in a fixed order.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>| v.map_or_else(|| "absent".to_string(), |x| format!("{x:e}"));
        let _ = writeln!(s, "scenario={}", self.scenario);
        let _ = writeln!(s, "probe_seed={}", self.probe_seed);
        let _ = writeln!(s, "threads={}", self.threads);
        let _ = writeln!(s, "cells={}", self.cells);
        let _ = writeln!(s, "scheme={}", self.scheme.as_str());
        let _ = writeln!(s, "steps={}", self.steps.map_or("absent".into(), |v| v.to_string()));
        let _ = writeln!(s, "final_time={}", opt(self.final_time));
        let _ = writeln!(s, "skewness_defect={:e}", self.skewness_defect);
        let _ = writeln!(s, "dissipativity_residual={:e}", self.dissipativity_residual);
        let _ = writeln!(s, "green_residual={:e}", self.green_residual);
        let _ = writeln!(s, "green_boundary_term={:e}", self.green_boundary_term);
        let _ = writeln!(s, "mass_defect={:e}", self.mass_defect);
        let _ = writeln!(s, "norm_drift={}", opt(self.norm_drift));
        let _ = writeln!(s, "semigroup_residual={}", opt(self.semigroup_residual));
        let _ = writeln!(s, "boundary_flux_max={:e}", self.boundary_flux_max);
        let _ = writeln!(s, "oracle_l2_error={}", opt(self.oracle_l2_error));
        let _ = writeln!(s, "born_l1_error={}", opt(self.born_l1_error));
        let _ = writeln!(s, "oracle_self_consistency={}", opt(self.oracle_self_consistency));
        let _ = writeln!(
            s,
            "flag.oracle_exit_count={}",
            self.oracle_exit_count.map_or("absent".into(), |v| v.to_string())
        );
        let _ = writeln!(s, "flag.no_outflow={}", if self.no_outflow_ok { "ok" } else { "violated" });
        let _ = writeln!(s, "flag.outflow_faces={}", self.outflow_faces);
        let _ = writeln!(s, "flag.max_outflow={:e}", self.max_outflow);
        for (q, o) in &self.convergence_orders {
            let _ = writeln!(s, "order.{q}={o}");
        }
        let failures = self.failures();
        let _ = writeln!(s, "pass={}", failures.is_empty());
        if !failures.is_empty() {
            let _ = writeln!(s, "failed={}", failures.join(","));
        }
        s
    }
}
