//! Fixed-step RK4 realization of the semiflow Φ_t of ẋ = F(x), with the
//! divergence integral ∫ div F along the path accumulated alongside.

use std::io::{self, Write};

use thiserror::Error;

use crate::fields::VectorField;
use crate::geometry::Domain;
use crate::point::Point;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemiflowError {
    #[error("time step must be positive and finite (got {0})")]
    InvalidStep(f64),
    #[error("integration time must be non-negative and finite (got {0})")]
    InvalidTime(f64),
    #[error("initial point {0:?} lies outside the closed domain")]
    OutsideDomain(Vec<f64>),
    #[error("field dimension {field} does not match domain dimension {domain}")]
    DimensionMismatch { field: usize, domain: usize },
}

/// Relative overshoot (in units of the domain diameter) tolerated before a
/// state counts as having left Ω̄.
pub const VIABILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    #[default]
    Forward,
    /// Integrate ẏ = −F(y).
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExitPolicy {
    /// Project back onto Ω̄ and count a viability violation.
    #[default]
    Project,
    /// Stop integrating and flag the path as having exited.
    Stop,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FlowOptions {
    pub direction: Direction,
    pub exit: ExitPolicy,
}

/// Sampled path of the semiflow.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Point>,
    /// Entry k is ∫₀^{t_k} div F along the path.
    pub divergence_integral: Vec<f64>,
    pub viability_violations: usize,
    /// Set when integration stopped early under [`ExitPolicy::Stop`].
    pub exited: bool,
}

impl Trajectory {
    pub fn final_state(&self) -> Point {
        *self.states.last().expect("trajectory has at least the initial state")
    }

    pub fn final_divergence_integral(&self) -> f64 {
        *self.divergence_integral.last().expect("nonempty")
    }

    /// CSV: `t,x_1..x_d,div_integral`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let d = self.states.first().map_or(0, Point::dim);
        write!(out, "t")?;
        for k in 1..=d {
            write!(out, ",x_{k}")?;
        }
        writeln!(out, ",div_integral")?;
        for ((t, x), q) in self.times.iter().zip(&self.states).zip(&self.divergence_integral) {
            write!(out, "{t:e}")?;
            for c in x.as_slice() {
                write!(out, ",{c:e}")?;
            }
            writeln!(out, ",{q:e}")?;
        }
        Ok(())
    }
}

/// Endpoint of a flow computation without the stored path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowEnd {
    pub state: Point,
    pub divergence_integral: f64,
    pub viability_violations: usize,
    pub exited: bool,
}

/// Step sizes covering `[0, t_end]`: full steps of `dt`, then one shorter
/// step if `t_end` is not a multiple of `dt`. Equal `dt` and commensurate
/// times give bitwise-identical step sequences.
fn schedule(t_end: f64, dt: f64) -> (usize, Option<f64>) {
    let ratio = t_end / dt;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        return (nearest as usize, None);
    }
    let full = ratio.floor();
    let rest = t_end - full * dt;
    (full as usize, (rest > 0.0).then_some(rest))
}

struct Stepper<'a> {
    field: &'a VectorField,
    domain: &'a Domain,
    sign: f64,
    exit: ExitPolicy,
    slack: f64,
}

impl Stepper<'_> {
    #[inline]
    fn rhs(&self, x: &Point) -> Point {
        self.field.evaluate(x) * self.sign
    }

    /// One RK4 step; returns the new state, the Simpson increment of
    /// ∫ div F, and whether the raw step left Ω̄.
    fn step(&self, x: &Point, dt: f64) -> (Point, f64, bool) {
        let k1 = self.rhs(x);
        let k2 = self.rhs(&x.axpy(0.5 * dt, &k1));
        let k3 = self.rhs(&x.axpy(0.5 * dt, &k2));
        let k4 = self.rhs(&x.axpy(dt, &k3));
        let incr = (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        let mut next = *x + incr;
        let left = self.domain.signed_distance(&next) > self.slack;
        if left && self.exit == ExitPolicy::Project {
            next = self.domain.project(&next);
        }
        // Cubic Hermite midpoint for Simpson's rule.
        let k_next = self.rhs(&next);
        let mid = (*x + next) * 0.5 + (k1 - k_next) * (dt / 8.0);
        let quad = dt / 6.0
            * (self.field.divergence(x) + 4.0 * self.field.divergence(&mid) + self.field.divergence(&next));
        (next, quad, left)
    }
}

fn validate(
    field: &VectorField,
    domain: &Domain,
    x0: &Point,
    t_end: f64,
    dt: f64,
) -> Result<(), SemiflowError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SemiflowError::InvalidStep(dt));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(SemiflowError::InvalidTime(t_end));
    }
    if field.dim() != domain.dim() || x0.dim() != domain.dim() {
        return Err(SemiflowError::DimensionMismatch {
            field: field.dim(),
            domain: domain.dim(),
        });
    }
    if !x0.is_finite() || !domain.contains_closed(x0, 1e-12 * domain.diameter()) {
        return Err(SemiflowError::OutsideDomain(x0.as_slice().to_vec()));
    }
    Ok(())
}

fn run(
    field: &VectorField,
    domain: &Domain,
    x0: Point,
    t_end: f64,
    dt: f64,
    opts: FlowOptions,
    mut record: impl FnMut(f64, &Point, f64),
) -> FlowEnd {
    let stepper = Stepper {
        field,
        domain,
        sign: match opts.direction {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        },
        exit: opts.exit,
        slack: VIABILITY_TOL * domain.diameter(),
    };
    let (full, rest) = schedule(t_end, dt);
    let mut end = FlowEnd {
        state: x0,
        divergence_integral: 0.0,
        viability_violations: 0,
        exited: false,
    };
    let steps = std::iter::repeat_n(dt, full).chain(rest);
    for (k, h) in steps.enumerate() {
        let (next, quad, left) = stepper.step(&end.state, h);
        if left {
            match opts.exit {
                ExitPolicy::Project => end.viability_violations += 1,
                ExitPolicy::Stop => {
                    end.exited = true;
                    return end;
                }
            }
        }
        end.state = next;
        end.divergence_integral += quad;
        let t = if k < full { (k + 1) as f64 * dt } else { t_end };
        record(t, &end.state, end.divergence_integral);
    }
    end
}

/// Integrates ẋ = F(x) from `x0` over `[0, t_end]` with fixed-step RK4,
/// recording every step.
pub fn integrate(
    field: &VectorField,
    domain: &Domain,
    x0: &Point,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory, SemiflowError> {
    integrate_with(field, domain, x0, t_end, dt, FlowOptions::default())
}

pub fn integrate_with(
    field: &VectorField,
    domain: &Domain,
    x0: &Point,
    t_end: f64,
    dt: f64,
    opts: FlowOptions,
) -> Result<Trajectory, SemiflowError> {
    validate(field, domain, x0, t_end, dt)?;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![*x0],
        divergence_integral: vec![0.0],
        viability_violations: 0,
        exited: false,
    };
    let end = run(field, domain, *x0, t_end, dt, opts, |t, x, q| {
        traj.times.push(t);
        traj.states.push(*x);
        traj.divergence_integral.push(q);
    });
    traj.viability_violations = end.viability_violations;
    traj.exited = end.exited;
    if end.viability_violations > 0 {
        log::warn!(
            "trajectory from {:?} left the closed domain {} times; the field may violate no-outflow",
            x0,
            end.viability_violations
        );
    }
    Ok(traj)
}

/// Endpoint of the flow without storing the path.
pub fn flow(
    field: &VectorField,
    domain: &Domain,
    x0: &Point,
    t_end: f64,
    dt: f64,
    opts: FlowOptions,
) -> Result<FlowEnd, SemiflowError> {
    validate(field, domain, x0, t_end, dt)?;
    Ok(run(field, domain, *x0, t_end, dt, opts, |_, _, _| {}))
}

/// ‖Φ_{t+s}(x0) − Φ_t(Φ_s(x0))‖₂ with the same step size on both paths.
pub fn check_semigroup(
    field: &VectorField,
    domain: &Domain,
    x0: &Point,
    s: f64,
    t: f64,
    dt: f64,
) -> Result<f64, SemiflowError> {
    let opts = FlowOptions::default();
    let direct = flow(field, domain, x0, t + s, dt, opts)?;
    let first = flow(field, domain, x0, s, dt, opts)?;
    let second = flow(field, domain, &first.state, t, dt, opts)?;
    Ok((direct.state - second.state).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn contracting() -> (VectorField, Domain) {
        (VectorField::scaled_identity(1, -1.0), Domain::interval(-1.0, 1.0).unwrap())
    }

    #[test]
    fn zero_field_is_identity() {
        let d = Domain::unit_disk();
        let x0 = Point::xy(0.2, -0.4);
        let tr = integrate(&VectorField::zero(2), &d, &x0, 1.0, 0.1).unwrap();
        assert!(tr.states.iter().all(|x| *x == x0));
        assert!(tr.divergence_integral.iter().all(|&q| q == 0.0));
        assert_eq!(tr.times.len(), 11);
        assert_eq!(*tr.times.last().unwrap(), 1.0);
    }

    #[test]
    fn identity_at_time_zero() {
        let (f, d) = contracting();
        let tr = integrate(&f, &d, &Point::x(0.7), 0.0, 1e-3).unwrap();
        assert_eq!(tr.states, vec![Point::x(0.7)]);
        assert_eq!(tr.divergence_integral, vec![0.0]);
    }

    #[test]
    fn exponential_decay() {
        let (f, d) = contracting();
        let tr = integrate(&f, &d, &Point::x(1.0), 1.0, 1e-3).unwrap();
        assert!((tr.final_state()[0] - (-1.0f64).exp()).abs() <= 1e-8);
        assert!((tr.final_divergence_integral() + 1.0).abs() <= 1e-8);
        assert_eq!(tr.viability_violations, 0);
    }

    #[test]
    fn rotation_period() {
        let d = Domain::unit_disk();
        let tr = integrate(&VectorField::rotation(), &d, &Point::xy(1.0, 0.0), 2.0 * PI, 1e-3).unwrap();
        let end = tr.final_state();
        assert!((end - Point::xy(1.0, 0.0)).norm() <= 1e-6, "{end:?}");
        assert!((tr.times.last().unwrap() - 2.0 * PI).abs() < 1e-12);
        assert_eq!(tr.viability_violations, 0);
        let slack = VIABILITY_TOL * d.diameter();
        assert!(tr.states.iter().all(|x| d.contains_closed(x, slack)));
    }

    #[test]
    fn semigroup_residuals() {
        let d = Domain::unit_disk();
        let z = check_semigroup(&VectorField::zero(2), &d, &Point::xy(0.1, 0.2), 0.3, 0.4, 1e-2).unwrap();
        assert_eq!(z, 0.0);
        let (f, line) = contracting();
        let r = check_semigroup(&f, &line, &Point::x(1.0), 0.5, 0.5, 1e-3).unwrap();
        assert!(r <= 1e-10, "{r}");
        let r = check_semigroup(&VectorField::rotation(), &d, &Point::xy(1.0, 0.0), 1.0, 2.0, 1e-3).unwrap();
        assert!(r <= 1e-8, "{r}");
    }

    #[test]
    fn fourth_order_convergence() {
        let (f, d) = contracting();
        let exact = (-1.0f64).exp();
        let err = |dt: f64| (integrate(&f, &d, &Point::x(1.0), 1.0, dt).unwrap().final_state()[0] - exact).abs();
        let ratio = err(0.1) / err(0.05);
        assert!((14.0..=18.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn rejects_bad_arguments() {
        let (f, d) = contracting();
        let x0 = Point::x(0.0);
        assert!(matches!(integrate(&f, &d, &x0, 1.0, 0.0), Err(SemiflowError::InvalidStep(_))));
        assert!(matches!(integrate(&f, &d, &x0, -1.0, 0.1), Err(SemiflowError::InvalidTime(_))));
        assert!(matches!(
            integrate(&f, &d, &Point::x(1.5), 1.0, 0.1),
            Err(SemiflowError::OutsideDomain(_))
        ));
    }

    #[test]
    fn outflow_is_projected_and_counted() {
        let f = VectorField::scaled_identity(1, 1.0);
        let d = Domain::interval(-1.0, 1.0).unwrap();
        let tr = integrate(&f, &d, &Point::x(0.9), 1.0, 1e-2).unwrap();
        assert!(tr.viability_violations > 0);
        assert_eq!(tr.final_state()[0], 1.0);
    }

    #[test]
    fn backward_exit_stops() {
        // Backward flow of x' = -x expands and leaves [-1, 1].
        let (f, d) = contracting();
        let opts = FlowOptions {
            direction: Direction::Backward,
            exit: ExitPolicy::Stop,
        };
        let end = flow(&f, &d, &Point::x(0.5), 1.0, 1e-3, opts).unwrap();
        assert!(end.exited);
        let end = flow(&f, &d, &Point::x(0.3), 1.0, 1e-3, opts).unwrap();
        assert!(!end.exited);
        assert!((end.state[0] - 0.3 * 1.0f64.exp()).abs() < 1e-10);
        // ∫ div F along the path is still −t.
        assert!((end.divergence_integral + 1.0).abs() < 1e-10);
    }

    #[test]
    fn csv_layout() {
        let tr = integrate(&VectorField::rotation(), &Domain::unit_disk(), &Point::xy(0.5, 0.0), 0.2, 0.1).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x_1,x_2,div_integral"));
        assert_eq!(lines.count(), 3);
    }
}
