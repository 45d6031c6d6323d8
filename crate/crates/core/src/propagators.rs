//! Time integration of ∂ₜψ = Aψ and the characteristics oracles.
//!
//! The Cayley (Crank–Nicolson) map (I − τA)⁻¹(I + τA), τ = dt/2, is
//! norm-preserving whenever A is skew in ⟨·,·⟩_w. It is evaluated through
//! the factorization
//!
//!   (I − τA)⁻¹ = (I + τA)(I − τ²A²)⁻¹,
//!
//! where I − τ²A² is self-adjoint positive definite in the weighted inner
//! product, so the inner solve is plain conjugate gradients. RK4 and a dense
//! scaling-and-squaring exponential serve as baselines.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::fields::VectorField;
use crate::geometry::{Domain, Grid};
use crate::operators::{skewness_defect, ComplexField, OperatorError, RealField, SparseOperator};
use crate::point::Point;
use crate::semiflow::{self, Direction, ExitPolicy, FlowOptions, SemiflowError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagatorError {
    #[error("invalid propagator configuration: {0}")]
    InvalidConfig(String),
    #[error("operator is not skew in the weighted inner product (defect {0:e})")]
    NotSkew(f64),
    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("Cayley step changed the norm by {drift:e} relative, above the solver guarantee")]
    NormGuard { drift: f64 },
    #[error("dense exponential needs N ≤ {max} (got {n})")]
    DenseTooLarge { n: usize, max: usize },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Semiflow(#[from] SemiflowError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Cayley,
    Rk4,
    DenseExpm,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Cayley => "cayley",
            Scheme::Rk4 => "rk4",
            Scheme::DenseExpm => "dense_expm",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cayley" => Ok(Scheme::Cayley),
            "rk4" => Ok(Scheme::Rk4),
            "dense_expm" => Ok(Scheme::DenseExpm),
            other => Err(format!("unknown scheme `{other}` (expected cayley, rk4 or dense_expm)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorConfig {
    pub scheme: Scheme,
    pub dt: f64,
    /// Relative residual target of the Cayley solve.
    pub linear_solver_tol: f64,
    pub max_dense_dim: usize,
    pub max_iterations: usize,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        PropagatorConfig {
            scheme: Scheme::Cayley,
            dt: 1e-3,
            linear_solver_tol: 1e-12,
            max_dense_dim: 4096,
            max_iterations: 1000,
        }
    }
}

impl PropagatorConfig {
    pub fn cayley(dt: f64) -> Self {
        PropagatorConfig {
            dt,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), PropagatorError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(PropagatorError::InvalidConfig(format!("dt must be positive (got {})", self.dt)));
        }
        if !(self.linear_solver_tol > 0.0 && self.linear_solver_tol <= 1e-6) {
            return Err(PropagatorError::InvalidConfig(format!(
                "linear_solver_tol must lie in (0, 1e-6] (got {})",
                self.linear_solver_tol
            )));
        }
        if self.max_iterations == 0 {
            return Err(PropagatorError::InvalidConfig("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Largest skewness defect accepted by the Cayley stepper.
pub const CAYLEY_SKEW_TOL: f64 = 1e-10;

pub trait Stepper {
    fn step(&mut self, psi: &ComplexField) -> Result<ComplexField, PropagatorError>;
}

/// y = x + s·A x
fn shift(a: &SparseOperator, x: &[f64], s: f64, y: &mut [f64]) {
    a.apply_real(x, y);
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = xi + s * *yi;
    }
}

fn dot_w(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(b).zip(w).map(|((x, y), w)| w * x * y).sum()
}

/// Crank–Nicolson / Cayley stepping for a w-skew operator.
pub struct CayleyStepper<'a> {
    a: &'a SparseOperator,
    tau: f64,
    tol: f64,
    max_iterations: usize,
    /// Iterations and relative residual of the most recent solve.
    pub last_iterations: usize,
    pub last_residual: f64,
    scratch: [Vec<f64>; 5],
}

impl<'a> CayleyStepper<'a> {
    pub fn new(a: &'a SparseOperator, dt: f64, tol: f64, max_iterations: usize) -> Result<Self, PropagatorError> {
        let defect = skewness_defect(a);
        if defect > CAYLEY_SKEW_TOL {
            return Err(PropagatorError::NotSkew(defect));
        }
        let n = a.dim();
        Ok(CayleyStepper {
            a,
            tau: 0.5 * dt,
            tol,
            max_iterations,
            last_iterations: 0,
            last_residual: 0.0,
            scratch: std::array::from_fn(|_| vec![0.0; n]),
        })
    }

    /// One real Cayley step; returns (iterations, relative residual of the
    /// original system).
    fn step_real(&mut self, psi: &[f64], out: &mut [f64]) -> Result<(usize, f64), PropagatorError> {
        let n = psi.len();
        let w = self.a.weights();
        let tau = self.tau;
        let [rhs, r, p, q, tmp] = &mut self.scratch;
        // rhs = (I + τA) ψ
        self.a.apply_real(psi, tmp);
        for i in 0..n {
            rhs[i] = psi[i] + tau * tmp[i];
        }
        let rhs_norm = dot_w(rhs, rhs, w).sqrt();
        if rhs_norm == 0.0 {
            out.fill(0.0);
            return Ok((0, 0.0));
        }
        // CG on (I − τ²A²) v = rhs, starting from v = ψ.
        let v = out;
        v.copy_from_slice(psi);
        let apply_p = |x: &[f64], y: &mut [f64], t: &mut [f64]| {
            self.a.apply_real(x, t);
            self.a.apply_real(t, y);
            for i in 0..x.len() {
                y[i] = x[i] - tau * tau * y[i];
            }
        };
        apply_p(v, q, tmp);
        for i in 0..n {
            r[i] = rhs[i] - q[i];
        }
        p.copy_from_slice(r);
        let mut rr = dot_w(r, r, w);
        let target = self.tol * rhs_norm;
        let mut iterations = 0;
        while rr.sqrt() > target {
            if iterations == self.max_iterations {
                return Err(PropagatorError::NoConvergence {
                    iterations,
                    residual: rr.sqrt() / rhs_norm,
                });
            }
            apply_p(p, q, tmp);
            let alpha = rr / dot_w(p, q, w);
            for i in 0..n {
                v[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            let rr_next = dot_w(r, r, w);
            let beta = rr_next / rr;
            rr = rr_next;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
            iterations += 1;
        }
        // ψ⁺ = (I + τA) v, written back into `out` via `tmp`.
        shift(self.a, v, tau, tmp);
        v.copy_from_slice(tmp);
        // Residual of (I − τA) ψ⁺ = rhs.
        shift(self.a, v, -tau, q);
        let res = q
            .iter()
            .zip(rhs.iter())
            .zip(w)
            .map(|((a, b), w)| w * (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
            / rhs_norm;
        Ok((iterations, res))
    }
}

impl Stepper for CayleyStepper<'_> {
    fn step(&mut self, psi: &ComplexField) -> Result<ComplexField, PropagatorError> {
        if psi.len() != self.a.dim() {
            return Err(OperatorError::DimensionMismatch {
                expected: self.a.dim(),
                got: psi.len(),
            }
            .into());
        }
        let n = psi.len();
        let (mut re, mut im) = (vec![0.0; n], vec![0.0; n]);
        let (it_re, res_re) = self.step_real(&psi.re(), &mut re)?;
        let (it_im, res_im) = self.step_real(&psi.im(), &mut im)?;
        self.last_iterations = it_re.max(it_im);
        self.last_residual = res_re.max(res_im);
        if self.last_residual > self.tol {
            return Err(PropagatorError::NoConvergence {
                iterations: self.last_iterations,
                residual: self.last_residual,
            });
        }
        let next = ComplexField::from_parts(&re, &im);
        let w = self.a.weights();
        let (before, after) = (psi.norm_w(w), next.norm_w(w));
        if before > 0.0 {
            let drift = (after - before).abs() / before;
            if drift > 10.0 * self.tol {
                return Err(PropagatorError::NormGuard { drift });
            }
        }
        Ok(next)
    }
}

/// One Cayley step (I − dt/2·A)ψ⁺ = (I + dt/2·A)ψ.
pub fn cayley_step(a: &SparseOperator, psi: &ComplexField, dt: f64, tol: f64) -> Result<ComplexField, PropagatorError> {
    CayleyStepper::new(a, dt, tol, PropagatorConfig::default().max_iterations)?.step(psi)
}

/// Classical RK4 on ψ' = Aψ.
pub struct Rk4Stepper<'a> {
    a: &'a SparseOperator,
    dt: f64,
}

impl Stepper for Rk4Stepper<'_> {
    fn step(&mut self, psi: &ComplexField) -> Result<ComplexField, PropagatorError> {
        rk4_step(self.a, psi, self.dt)
    }
}

pub fn rk4_step(a: &SparseOperator, psi: &ComplexField, dt: f64) -> Result<ComplexField, PropagatorError> {
    if psi.len() != a.dim() {
        return Err(OperatorError::DimensionMismatch {
            expected: a.dim(),
            got: psi.len(),
        }
        .into());
    }
    let n = psi.len();
    let x = &psi.values;
    let eval = |v: &[Complex64]| {
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        a.apply_complex(v, &mut out);
        out
    };
    let stage = |k: &[Complex64], s: f64| -> Vec<Complex64> { x.iter().zip(k).map(|(xi, ki)| xi + ki * s).collect() };
    let k1 = eval(x);
    let k2 = eval(&stage(&k1, 0.5 * dt));
    let k3 = eval(&stage(&k2, 0.5 * dt));
    let k4 = eval(&stage(&k3, dt));
    let values = (0..n)
        .map(|i| x[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0))
        .collect();
    Ok(ComplexField::from_values(values))
}

/// exp(M) by scaling and squaring with a truncated Taylor series.
pub fn dense_expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm1 = (0..n).map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let squarings = if norm1 > 0.5 { (norm1 / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = m / 2f64.powi(squarings);
    let mut sum = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    // ‖scaled‖₁ ≤ ½, so 30 terms are far past double precision.
    for k in 1..=30 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if term.abs().max() <= f64::EPSILON * 1e-3 * sum.abs().max() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

fn dense_of(a: &SparseOperator) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.dim(), a.dim());
    for (i, j, v) in a.triplets() {
        m[(i, j)] = v;
    }
    m
}

/// Applies a precomputed exp(dt·A).
pub struct ExpmStepper {
    propagator: DMatrix<f64>,
}

impl ExpmStepper {
    pub fn new(a: &SparseOperator, dt: f64, max_dense_dim: usize) -> Result<Self, PropagatorError> {
        if a.dim() > max_dense_dim {
            return Err(PropagatorError::DenseTooLarge {
                n: a.dim(),
                max: max_dense_dim,
            });
        }
        Ok(ExpmStepper {
            propagator: dense_expm(&(dense_of(a) * dt)),
        })
    }
}

impl Stepper for ExpmStepper {
    fn step(&mut self, psi: &ComplexField) -> Result<ComplexField, PropagatorError> {
        let n = self.propagator.nrows();
        if psi.len() != n {
            return Err(OperatorError::DimensionMismatch { expected: n, got: psi.len() }.into());
        }
        let re = &self.propagator * DVector::from_vec(psi.re());
        let im = &self.propagator * DVector::from_vec(psi.im());
        Ok(ComplexField::from_parts(re.as_slice(), im.as_slice()))
    }
}

pub fn dense_expm_step(
    a: &SparseOperator,
    psi: &ComplexField,
    dt: f64,
    max_dense_dim: usize,
) -> Result<ComplexField, PropagatorError> {
    ExpmStepper::new(a, dt, max_dense_dim)?.step(psi)
}

pub fn make_stepper<'a>(a: &'a SparseOperator, cfg: &PropagatorConfig) -> Result<Box<dyn Stepper + 'a>, PropagatorError> {
    cfg.validate()?;
    Ok(match cfg.scheme {
        Scheme::Cayley => Box::new(CayleyStepper::new(a, cfg.dt, cfg.linear_solver_tol, cfg.max_iterations)?),
        Scheme::Rk4 => Box::new(Rk4Stepper { a, dt: cfg.dt }),
        Scheme::DenseExpm => Box::new(ExpmStepper::new(a, cfg.dt, cfg.max_dense_dim)?),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    /// step · dt
    pub time: f64,
    /// Time that was asked for; differs from `time` by the rounding error.
    pub requested: f64,
    pub field: ComplexField,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormRecord {
    pub step: usize,
    pub time: f64,
    pub norm: f64,
    /// (‖ψ(t)‖_w − ‖ψ₀‖_w) / ‖ψ₀‖_w
    pub drift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub dt: f64,
    pub steps: usize,
    /// steps · dt, the time actually reached.
    pub final_time: f64,
    pub snapshots: Vec<Snapshot>,
    pub norm_history: Vec<NormRecord>,
    pub final_field: ComplexField,
}

impl Propagation {
    pub fn max_norm_drift(&self) -> f64 {
        self.norm_history.iter().map(|r| r.drift.abs()).fold(0.0, f64::max)
    }

    /// Largest |requested − stored| snapshot time.
    pub fn max_rounding_error(&self) -> f64 {
        self.snapshots
            .iter()
            .map(|s| (s.requested - s.time).abs())
            .fold(0.0, f64::max)
    }

    /// CSV: `step,t,norm,norm_drift`.
    pub fn write_norm_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "step,t,norm,norm_drift")?;
        for r in &self.norm_history {
            writeln!(out, "{},{:e},{:e},{:e}", r.step, r.time, r.norm, r.drift)?;
        }
        Ok(())
    }
}

fn steps_for(t: f64, dt: f64) -> usize {
    (t / dt).round().max(0.0) as usize
}

/// Advances ψ₀ to `t_end` (rounded to a whole number of steps), storing
/// snapshots at the step nearest to each requested time.
pub fn propagate(
    a: &SparseOperator,
    psi0: &ComplexField,
    t_end: f64,
    snapshot_times: &[f64],
    cfg: &PropagatorConfig,
) -> Result<Propagation, PropagatorError> {
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(PropagatorError::InvalidConfig(format!("t_end must be non-negative (got {t_end})")));
    }
    if psi0.len() != a.dim() {
        return Err(OperatorError::DimensionMismatch {
            expected: a.dim(),
            got: psi0.len(),
        }
        .into());
    }
    let mut stepper = make_stepper(a, cfg)?;
    let dt = cfg.dt;
    let steps = steps_for(t_end, dt);
    let mut wanted: Vec<(usize, f64)> = snapshot_times
        .iter()
        .map(|&t| (steps_for(t, dt).min(steps), t))
        .collect();
    wanted.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)));

    let w = a.weights();
    let norm0 = psi0.norm_w(w);
    let record = |step: usize, psi: &ComplexField| {
        let norm = psi.norm_w(w);
        NormRecord {
            step,
            time: step as f64 * dt,
            norm,
            drift: if norm0 > 0.0 { (norm - norm0) / norm0 } else { norm },
        }
    };
    let mut snapshots = Vec::with_capacity(wanted.len());
    let mut next_wanted = 0;
    let mut take = |step: usize, psi: &ComplexField, snapshots: &mut Vec<Snapshot>| {
        while next_wanted < wanted.len() && wanted[next_wanted].0 == step {
            snapshots.push(Snapshot {
                step,
                time: step as f64 * dt,
                requested: wanted[next_wanted].1,
                field: psi.clone(),
            });
            next_wanted += 1;
        }
    };

    let mut psi = psi0.clone();
    let mut norm_history = Vec::with_capacity(steps + 1);
    norm_history.push(record(0, &psi));
    take(0, &psi, &mut snapshots);
    for step in 1..=steps {
        psi = stepper.step(&psi)?;
        norm_history.push(record(step, &psi));
        take(step, &psi, &mut snapshots);
    }
    Ok(Propagation {
        dt,
        steps,
        final_time: steps as f64 * dt,
        snapshots,
        norm_history,
        final_field: psi,
    })
}

/// ODE step for the oracles: an order of magnitude finer than the PDE step.
pub fn default_oracle_dt(pde_dt: f64) -> f64 {
    (pde_dt / 10.0).min(1e-3)
}

/// Oracle values together with the cells whose backward characteristic left
/// the closed domain (those cells are set to zero).
#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutput<T> {
    pub field: T,
    pub exited: Vec<usize>,
}

/// Per-cell backward characteristic: foot point and ∫ div F along the path.
fn trace_back(
    field: &VectorField,
    domain: &Domain,
    grid: &Grid,
    t: f64,
    dt_ode: f64,
) -> Result<Vec<Option<(Point, f64)>>, SemiflowError> {
    let opts = FlowOptions {
        direction: Direction::Backward,
        exit: ExitPolicy::Stop,
    };
    grid.cells()
        .par_iter()
        .map(|x| {
            let end = semiflow::flow(field, domain, x, t, dt_ode, opts)?;
            Ok((!end.exited).then_some((end.state, end.divergence_integral)))
        })
        .collect()
}

/// ψ(t, x) = ψ₀(y) · exp(−½ ∫ div F), where y is the foot of the backward
/// characteristic through x and the integral runs along it, so that
/// ψ(t, Φ_t(x₀)) = ψ₀(x₀) · exp(−½ ∫₀ᵗ div F(Φ_s(x₀)) ds).
pub fn characteristics_oracle_kvn(
    field: &VectorField,
    domain: &Domain,
    grid: &Grid,
    psi0: impl Fn(&Point) -> Complex64,
    t: f64,
    dt_ode: f64,
) -> Result<OracleOutput<ComplexField>, PropagatorError> {
    let feet = trace_back(field, domain, grid, t, dt_ode)?;
    let mut exited = Vec::new();
    let values = feet
        .iter()
        .enumerate()
        .map(|(i, foot)| match foot {
            Some((y, q)) => psi0(y) * (-0.5 * q).exp(),
            None => {
                exited.push(i);
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    Ok(OracleOutput {
        field: ComplexField::from_values(values),
        exited,
    })
}

/// ρ(t, x) = ρ₀(y) · exp(−∫ div F) along the backward characteristic.
pub fn characteristics_oracle_liouville(
    field: &VectorField,
    domain: &Domain,
    grid: &Grid,
    rho0: impl Fn(&Point) -> f64,
    t: f64,
    dt_ode: f64,
) -> Result<OracleOutput<RealField>, PropagatorError> {
    let feet = trace_back(field, domain, grid, t, dt_ode)?;
    let mut exited = Vec::new();
    let values = feet
        .iter()
        .enumerate()
        .map(|(i, foot)| match foot {
            Some((y, q)) => rho0(y) * (-q).exp(),
            None => {
                exited.push(i);
                0.0
            }
        })
        .collect();
    Ok(OracleOutput {
        field: RealField { values },
        exited,
    })
}
