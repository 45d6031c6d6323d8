//! classify → assemble → propagate → verify, plus the static `check` and the
//! refinement study behind `converge`.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use kvn_core::diagnostics::{verify_run, DiagnosticsError, Order, RunArtifacts, VerificationReport, EXACT_ERROR};
use kvn_core::fields::sup_norm_on_grid;
use kvn_core::geometry::GeometryError;
use kvn_core::propagators::{default_oracle_dt, OracleOutput, PropagatorError};
use kvn_core::{
    assemble_kvn_generator, assemble_pf_generator, build_grid, characteristics_oracle_kvn,
    characteristics_oracle_liouville, check_no_outflow, classify_boundary, measure_order, propagate,
    write_series, BoundaryClassification, ComplexField, Domain, Grid, NoOutflowVerdict, Propagation, RealField,
    SparseOperator, VectorField,
};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{validate_ladder, ConfigError, ScenarioConfig};

/// Environment variable that fixes the worker thread count.
pub const THREADS_ENV: &str = "KVN_THREADS";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Config { path: PathBuf, source: ConfigError },
    #[error("invalid ladder: {0}")]
    Ladder(String),
    #[error("converge compares against the characteristics oracle; set oracle.enabled = true")]
    OracleDisabled,
    #[error("invalid {var}: {message}")]
    Environment { var: &'static str, message: String },
    #[error("grid: {0}")]
    Geometry(#[from] GeometryError),
    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Propagator(#[from] PropagatorError),
}

impl PipelineError {
    /// 2 for usage and validation errors, 1 for failures during a run.
    pub fn exit_code(&self) -> u8 {
        match self {
            PipelineError::Read { .. }
            | PipelineError::Config { .. }
            | PipelineError::Ladder(_)
            | PipelineError::OracleDisabled
            | PipelineError::Environment { .. }
            | PipelineError::Geometry(_) => 2,
            PipelineError::Write { .. } | PipelineError::Propagator(_) => 1,
        }
    }
}

pub fn load(path: &Path) -> Result<ScenarioConfig, PipelineError> {
    let text = fs::read_to_string(path).map_err(|source| PipelineError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    ScenarioConfig::parse(&text).map_err(|source| PipelineError::Config {
        path: path.to_path_buf(),
        source,
    })
}

/// Sizes the global worker pool from `KVN_THREADS` (once per process) and
/// returns the thread count in effect.
pub fn init_threads() -> Result<usize, PipelineError> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n = v.trim().parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| PipelineError::Environment {
            var: THREADS_ENV,
            message: format!("expected a positive integer, found `{v}`"),
        })?;
        // Fails only if the pool already exists; the count in effect is reported.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(rayon::current_num_threads())
}

/// Grid, operators and normalized initial data for one resolution.
pub struct Prepared {
    pub domain: Domain,
    pub field: VectorField,
    pub grid: Grid,
    pub classification: BoundaryClassification,
    pub pf: SparseOperator,
    pub kvn: SparseOperator,
    pub psi0: ComplexField,
    /// ‖ψ₀‖_w of the raw initial condition; ψ₀ is divided by it.
    pub raw_norm: f64,
}

pub fn prepare(cfg: &ScenarioConfig, resolution: &[usize]) -> Result<Prepared, PipelineError> {
    let domain = cfg.build_domain();
    let field = cfg.build_field();
    let grid = build_grid(&domain, resolution)?;
    let classification = classify_boundary(&field, &grid, cfg.classify_tol);
    if let NoOutflowVerdict::Violated(faces) = check_no_outflow(&classification) {
        log::warn!(
            "{}: no-outflow condition violated on {} boundary face(s), max F·ν = {:e}",
            cfg.name,
            faces.len(),
            classification.max_outflow
        );
    }
    let pf = assemble_pf_generator(&field, &grid);
    let kvn = assemble_kvn_generator(&field, &grid);
    let mut psi0 = ComplexField::sample(&grid, |x| cfg.initial.evaluate(x));
    let raw_norm = psi0.norm_w(grid.volumes());
    if raw_norm > 0.0 {
        psi0.scale(1.0 / raw_norm);
    }
    Ok(Prepared {
        domain,
        field,
        grid,
        classification,
        pf,
        kvn,
        psi0,
        raw_norm,
    })
}

pub struct Simulation {
    pub prepared: Prepared,
    pub propagation: Propagation,
    pub kvn_oracle: Option<OracleOutput<ComplexField>>,
    pub liouville_oracle: Option<OracleOutput<RealField>>,
    pub semigroup_residual: Option<f64>,
}

impl Simulation {
    pub fn report(&self, cfg: &ScenarioConfig, threads: usize) -> VerificationReport {
        let p = &self.prepared;
        verify_run(&RunArtifacts {
            scenario: &cfg.name,
            grid: &p.grid,
            field: &p.field,
            kvn: &p.kvn,
            pf: &p.pf,
            classification: &p.classification,
            propagation: Some(&self.propagation),
            scheme: cfg.propagator.scheme,
            kvn_oracle: self.kvn_oracle.as_ref(),
            liouville_oracle: self.liouville_oracle.as_ref(),
            semigroup_residual: self.semigroup_residual,
            probe_seed: cfg.seed,
            threads,
        })
    }
}

/// Propagates the scenario at its configured resolution and time step.
pub fn simulate(cfg: &ScenarioConfig) -> Result<Simulation, PipelineError> {
    let prepared = prepare(cfg, &cfg.resolution)?;
    let dt = cfg.propagator.dt;
    let steps = (cfg.t_end / dt).round() as usize;

    // The semigroup law is checked by restarting from the state at the
    // midpoint step and comparing endpoints.
    let mid = (cfg.semigroup_check && steps >= 2).then_some(steps / 2);
    let mut times = cfg.snapshots.clone();
    if let Some(m) = mid {
        times.push(m as f64 * dt);
    }
    let mut propagation = propagate(&prepared.kvn, &prepared.psi0, cfg.t_end, &times, &cfg.propagator)?;
    let semigroup_residual = match mid {
        Some(m) => {
            let mid_time = m as f64 * dt;
            let at = propagation
                .snapshots
                .iter()
                .position(|s| s.step == m && s.requested == mid_time)
                .expect("midpoint snapshot was requested");
            let start = propagation.snapshots.remove(at).field;
            let rest = propagate(&prepared.kvn, &start, (steps - m) as f64 * dt, &[], &cfg.propagator)?;
            Some(rest.final_field.distance_w(&propagation.final_field, prepared.grid.volumes()))
        }
        None => None,
    };

    let oracle_ok = check_no_outflow(&prepared.classification).is_ok();
    if cfg.oracle.enabled && !oracle_ok {
        log::warn!("{}: characteristics oracle skipped because the no-outflow condition fails", cfg.name);
    }
    let (kvn_oracle, liouville_oracle) = if cfg.oracle.enabled && oracle_ok {
        let dt_ode = cfg.oracle.dt_ode.unwrap_or_else(|| default_oracle_dt(dt));
        let scale = if prepared.raw_norm > 0.0 { 1.0 / prepared.raw_norm } else { 0.0 };
        let psi0 = |x: &kvn_core::Point| cfg.initial.evaluate(x) * scale;
        let t = propagation.final_time;
        let p = &prepared;
        let kvn = characteristics_oracle_kvn(&p.field, &p.domain, &p.grid, psi0, t, dt_ode)?;
        let rho = characteristics_oracle_liouville(&p.field, &p.domain, &p.grid, |x| psi0(x).norm_sqr(), t, dt_ode)?;
        if !kvn.exited.is_empty() {
            log::warn!("{}: {} backward characteristic(s) left the domain", cfg.name, kvn.exited.len());
        }
        (Some(kvn), Some(rho))
    } else {
        (None, None)
    };
    Ok(Simulation {
        prepared,
        propagation,
        kvn_oracle,
        liouville_oracle,
        semigroup_residual,
    })
}

/// Static checks only: no time stepping, no oracle.
pub fn check(cfg: &ScenarioConfig, threads: usize) -> Result<VerificationReport, PipelineError> {
    let p = prepare(cfg, &cfg.resolution)?;
    Ok(verify_run(&RunArtifacts {
        scenario: &cfg.name,
        grid: &p.grid,
        field: &p.field,
        kvn: &p.kvn,
        pf: &p.pf,
        classification: &p.classification,
        propagation: None,
        scheme: cfg.propagator.scheme,
        kvn_oracle: None,
        liouville_oracle: None,
        semigroup_residual: None,
        probe_seed: cfg.seed,
        threads,
    }))
}

/// Files are staged as temporaries in the target directory and renamed into
/// place only once every one of them has been written.
pub struct AtomicOutputs {
    dir: PathBuf,
    created_dir: bool,
    staged: Vec<(tempfile::NamedTempFile, PathBuf)>,
}

impl AtomicOutputs {
    pub fn new(dir: &Path) -> Result<Self, PipelineError> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir).map_err(|source| PipelineError::Write {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(AtomicOutputs {
            dir: dir.to_path_buf(),
            created_dir,
            staged: Vec::new(),
        })
    }

    pub fn stage<F>(&mut self, name: &str, write: F) -> Result<(), PipelineError>
    where
        F: FnOnce(&mut BufWriter<&mut fs::File>) -> io::Result<()>,
    {
        let path = self.dir.join(name);
        let io_err = |source| PipelineError::Write { path: path.clone(), source };
        let mut builder = tempfile::Builder::new();
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            builder.permissions(fs::Permissions::from_mode(0o644));
        }
        let mut tmp = builder.tempfile_in(&self.dir).map_err(io_err)?;
        {
            let mut out = BufWriter::new(tmp.as_file_mut());
            write(&mut out).and_then(|()| out.flush()).map_err(io_err)?;
        }
        self.staged.push((tmp, path));
        Ok(())
    }

    pub fn commit(mut self) -> Result<Vec<PathBuf>, PipelineError> {
        let mut done = Vec::new();
        for (tmp, path) in std::mem::take(&mut self.staged) {
            tmp.persist(&path).map_err(|e| PipelineError::Write {
                path: path.clone(),
                source: e.error,
            })?;
            done.push(path);
        }
        self.created_dir = false;
        Ok(done)
    }
}

impl Drop for AtomicOutputs {
    fn drop(&mut self) {
        self.staged.clear();
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

pub const SERIES_FILE: &str = "series.kvnf";
pub const NORM_FILE: &str = "norm.csv";
pub const CLASSIFICATION_FILE: &str = "classification.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const CONFIG_FILE: &str = "scenario.conf";
pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const ORDERS_FILE: &str = "orders.txt";

pub struct RunSummary {
    pub report: VerificationReport,
    pub files: Vec<PathBuf>,
}

/// Full pipeline; writes the field series, norm history, boundary
/// classification, verification report and the canonical config.
pub fn run(cfg: &ScenarioConfig, output: &Path, threads: usize) -> Result<RunSummary, PipelineError> {
    let sim = simulate(cfg)?;
    let report = sim.report(cfg, threads);
    let grid = &sim.prepared.grid;
    let mut out = AtomicOutputs::new(output)?;
    out.stage(SERIES_FILE, |w| {
        write_series(w, grid.len(), grid.dim() as u32, &sim.propagation.snapshots).map_err(io::Error::other)
    })?;
    out.stage(NORM_FILE, |w| sim.propagation.write_norm_csv(w))?;
    out.stage(CLASSIFICATION_FILE, |w| sim.prepared.classification.write_csv(grid, w))?;
    out.stage(REPORT_FILE, |w| w.write_all(report.to_key_value().as_bytes()))?;
    out.stage(CONFIG_FILE, |w| w.write_all(cfg.to_text().as_bytes()))?;
    let files = out.commit()?;
    Ok(RunSummary { report, files })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rung {
    pub n: usize,
    pub h: f64,
    pub dt: f64,
    pub steps: usize,
    pub oracle_l2_error: f64,
    pub born_l1_error: f64,
    pub oracle_self_consistency: f64,
    pub oracle_exit_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub scenario: String,
    pub rungs: Vec<Rung>,
    pub oracle_l2_order: Result<Order, DiagnosticsError>,
    pub born_l1_order: Result<Order, DiagnosticsError>,
}

fn pairwise(e0: f64, e1: f64, h0: f64, h1: f64) -> String {
    match (e0 <= EXACT_ERROR, e1 <= EXACT_ERROR) {
        (true, true) => "exact".into(),
        (false, false) => format!("{:e}", (e0 / e1).ln() / (h0 / h1).ln()),
        _ => "undefined".into(),
    }
}

fn order_text(o: &Result<Order, DiagnosticsError>) -> String {
    match o {
        Ok(o) => o.to_string(),
        Err(_) => "undefined".into(),
    }
}

impl ConvergenceTable {
    /// Order bounds from the config; `Exact` satisfies every bound.
    pub fn failures(&self, cfg: &ScenarioConfig) -> Vec<&'static str> {
        let c = &cfg.converge;
        let mut out = Vec::new();
        if c.order_min.is_some() || c.order_max.is_some() {
            let lo = c.order_min.unwrap_or(f64::NEG_INFINITY);
            let hi = c.order_max.unwrap_or(f64::INFINITY);
            if !self.oracle_l2_order.as_ref().is_ok_and(|o| o.within(lo, hi)) {
                out.push("order.oracle_l2");
            }
        }
        if let Some(min) = c.born_order_min {
            if !self.born_l1_order.as_ref().is_ok_and(|o| o.at_least(min)) {
                out.push("order.born_l1");
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "n,h,dt,steps,oracle_l2_error,oracle_l2_order,born_l1_error,born_l1_order,oracle_exit_count"
        )?;
        for (i, r) in self.rungs.iter().enumerate() {
            let (l2o, bo) = match i.checked_sub(1).map(|j| &self.rungs[j]) {
                Some(p) => (
                    pairwise(p.oracle_l2_error, r.oracle_l2_error, p.h, r.h),
                    pairwise(p.born_l1_error, r.born_l1_error, p.h, r.h),
                ),
                None => (String::new(), String::new()),
            };
            writeln!(
                w,
                "{},{:e},{:e},{},{:e},{},{:e},{},{}",
                r.n, r.h, r.dt, r.steps, r.oracle_l2_error, l2o, r.born_l1_error, bo, r.oracle_exit_count
            )?;
        }
        Ok(())
    }

    pub fn summary(&self, cfg: &ScenarioConfig) -> String {
        let ladder: Vec<String> = self.rungs.iter().map(|r| r.n.to_string()).collect();
        let failures = self.failures(cfg);
        let mut s = format!(
            "scenario={}\nladder={}\norder.oracle_l2={}\norder.born_l1={}\npass={}\n",
            self.scenario,
            ladder.join(","),
            order_text(&self.oracle_l2_order),
            order_text(&self.born_l1_order),
            failures.is_empty()
        );
        if !failures.is_empty() {
            s.push_str(&format!("failed={}\n", failures.join(",")));
        }
        s
    }
}

/// Runs the scenario once per rung (n cells per axis, dt = c·h) and
/// measures orders against the characteristics oracle.
pub fn converge(cfg: &ScenarioConfig, ladder: &[usize]) -> Result<ConvergenceTable, PipelineError> {
    validate_ladder(ladder).map_err(PipelineError::Ladder)?;
    if !cfg.oracle.enabled {
        return Err(PipelineError::OracleDisabled);
    }
    let dim = cfg.dim();
    let factor = match cfg.converge.dt_factor {
        Some(c) => c,
        None => {
            let coarse = build_grid(&cfg.build_domain(), &vec![ladder[0]; dim])?;
            let sup = sup_norm_on_grid(&cfg.build_field(), &coarse);
            if sup > 0.0 {
                0.5 / sup
            } else {
                0.5
            }
        }
    };
    let rungs = ladder
        .par_iter()
        .map(|&n| {
            let grid_h = build_grid(&cfg.build_domain(), &vec![n; dim])?.h();
            let mut rc = cfg.clone();
            rc.resolution = vec![n; dim];
            rc.propagator.dt = factor * grid_h;
            rc.snapshots.clear();
            rc.semigroup_check = false;
            let sim = simulate(&rc)?;
            let w = sim.prepared.grid.volumes();
            let kvn = sim.kvn_oracle.as_ref().ok_or(PipelineError::OracleDisabled)?;
            let rho = sim.liouville_oracle.as_ref().ok_or(PipelineError::OracleDisabled)?;
            let fin = &sim.propagation.final_field;
            Ok(Rung {
                n,
                h: grid_h,
                dt: rc.propagator.dt,
                steps: sim.propagation.steps,
                oracle_l2_error: fin.distance_w(&kvn.field, w),
                born_l1_error: fin.density().l1_distance(&rho.field, w),
                oracle_self_consistency: kvn
                    .field
                    .values
                    .iter()
                    .zip(&rho.field.values)
                    .map(|(z, r)| (z.norm_sqr() - r).abs())
                    .fold(0.0, f64::max),
                oracle_exit_count: kvn.exited.len(),
            })
        })
        .collect::<Result<Vec<Rung>, PipelineError>>()?;
    let l2: Vec<(f64, f64)> = rungs.iter().map(|r| (r.h, r.oracle_l2_error)).collect();
    let born: Vec<(f64, f64)> = rungs.iter().map(|r| (r.h, r.born_l1_error)).collect();
    Ok(ConvergenceTable {
        scenario: cfg.name.clone(),
        oracle_l2_order: measure_order(&l2),
        born_l1_order: measure_order(&born),
        rungs,
    })
}

pub fn write_convergence(
    table: &ConvergenceTable,
    cfg: &ScenarioConfig,
    output: &Path,
) -> Result<Vec<PathBuf>, PipelineError> {
    let mut out = AtomicOutputs::new(output)?;
    out.stage(CONVERGENCE_FILE, |w| table.write_csv(w))?;
    out.stage(ORDERS_FILE, |w| w.write_all(table.summary(cfg).as_bytes()))?;
    out.commit()
}
