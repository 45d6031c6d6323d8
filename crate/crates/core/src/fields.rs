//! Autonomous vector fields F on the closed domain, their divergence and
//! Lipschitz bounds, and the inflow/outflow/characteristic partition of ∂Ω.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{Domain, Grid};
use crate::point::{Point, MAX_DIM};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("point {point:?} lies outside the closed domain")]
    OutsideDomain { point: Vec<f64> },
    #[error("field has dimension {field} but the domain has dimension {domain}")]
    DimensionMismatch { field: usize, domain: usize },
    #[error("invalid field parameters: {0}")]
    InvalidParameters(String),
}

/// One term `coefficient · Π x_k^{exponents[k]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coefficient: f64,
    pub exponents: [u32; MAX_DIM],
}

/// A real polynomial in d variables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    pub terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn evaluate(&self, x: &Point) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.coefficient
                    * (0..x.dim())
                        .map(|k| x[k].powi(t.exponents[k] as i32))
                        .product::<f64>()
            })
            .sum()
    }

    pub fn partial(&self, axis: usize) -> Polynomial {
        let terms = self
            .terms
            .iter()
            .filter(|t| t.exponents[axis] > 0)
            .map(|t| {
                let mut exponents = t.exponents;
                exponents[axis] -= 1;
                Monomial {
                    coefficient: t.coefficient * t.exponents[axis] as f64,
                    exponents,
                }
            })
            .collect();
        Polynomial { terms }
    }

    fn max_axis(&self) -> usize {
        self.terms
            .iter()
            .flat_map(|t| t.exponents.iter().enumerate().filter(|(_, &e)| e > 0))
            .map(|(k, _)| k + 1)
            .max()
            .unwrap_or(0)
    }
}

/// Text form: terms separated by `;`, each `coefficient:e0,e1,...`.
/// `1.5:2,0; -1:0,1` is 1.5·x² − y. The empty string is the zero polynomial.
impl FromStr for Polynomial {
    type Err = FieldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |msg: &str| FieldError::InvalidParameters(format!("polynomial `{s}`: {msg}"));
        let mut terms = Vec::new();
        for term in s.split(';').map(str::trim).filter(|t| !t.is_empty()) {
            let (coef, exps) = term
                .split_once(':')
                .ok_or_else(|| bad("term must be `coefficient:exponents`"))?;
            let coefficient: f64 = coef.trim().parse().map_err(|_| bad("bad coefficient"))?;
            let mut exponents = [0u32; MAX_DIM];
            let parts: Vec<&str> = exps.split(',').map(str::trim).collect();
            if parts.len() > MAX_DIM {
                return Err(bad("too many exponents"));
            }
            for (k, p) in parts.iter().enumerate() {
                exponents[k] = p.parse().map_err(|_| bad("bad exponent"))?;
            }
            terms.push(Monomial {
                coefficient,
                exponents,
            });
        }
        Ok(Polynomial { terms })
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(
                f,
                "{}:{},{},{}",
                t.coefficient, t.exponents[0], t.exponents[1], t.exponents[2]
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldKind {
    Zero,
    Constant(Vec<f64>),
    /// F(x) = A·x, with A stored row-major.
    Linear(Vec<f64>),
    /// F(x, y) = ω(−y, x).
    Rotation { omega: f64 },
    /// F(x) = r·x(1 − x).
    Logistic1d { rate: f64 },
    /// F = −∇V with V(x) = Σ_k (x_k² − 1)²/4, i.e. F_k = x_k − x_k³.
    DoubleWellGradient,
    /// Harmonic oscillator in (q, p): F = (p, −ω²q).
    HarmonicHamiltonian { omega: f64 },
    /// Polynomial components plus a user-supplied divergence.
    CustomPolynomial {
        components: Vec<Polynomial>,
        divergence: Polynomial,
    },
}

/// An autonomous C¹ vector field on R^d.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    kind: FieldKind,
    dim: usize,
}

impl VectorField {
    pub fn new(kind: FieldKind, dim: usize) -> Result<Self, FieldError> {
        let bad = |m: String| Err(FieldError::InvalidParameters(m));
        if !(1..=MAX_DIM).contains(&dim) {
            return bad(format!("dimension {dim} out of range"));
        }
        match &kind {
            FieldKind::Zero | FieldKind::DoubleWellGradient => {}
            FieldKind::Constant(c) => {
                if c.len() != dim {
                    return bad(format!("constant vector needs {dim} entries"));
                }
            }
            FieldKind::Linear(a) => {
                if a.len() != dim * dim {
                    return bad(format!("linear field needs {} matrix entries", dim * dim));
                }
            }
            FieldKind::Rotation { .. } | FieldKind::HarmonicHamiltonian { .. } => {
                if dim != 2 {
                    return bad("rotation/harmonic fields are two-dimensional".into());
                }
            }
            FieldKind::Logistic1d { .. } => {
                if dim != 1 {
                    return bad("logistic field is one-dimensional".into());
                }
            }
            FieldKind::CustomPolynomial {
                components,
                divergence,
            } => {
                if components.len() != dim {
                    return bad(format!("custom field needs {dim} components"));
                }
                if components
                    .iter()
                    .chain(std::iter::once(divergence))
                    .any(|p| p.max_axis() > dim)
                {
                    return bad("polynomial uses more variables than the dimension".into());
                }
            }
        }
        Ok(VectorField { kind, dim })
    }

    pub fn zero(dim: usize) -> Self {
        VectorField::new(FieldKind::Zero, dim).expect("valid dimension")
    }

    pub fn constant(c: &[f64]) -> Self {
        VectorField::new(FieldKind::Constant(c.to_vec()), c.len()).expect("valid constant")
    }

    /// Panics unless `matrix.len() == dim²`.
    pub fn linear(dim: usize, matrix: &[f64]) -> Self {
        VectorField::new(FieldKind::Linear(matrix.to_vec()), dim).expect("valid matrix")
    }

    /// F(x) = s·x.
    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        let mut a = vec![0.0; dim * dim];
        for k in 0..dim {
            a[k * dim + k] = s;
        }
        VectorField::linear(dim, &a)
    }

    pub fn rotation() -> Self {
        VectorField::new(FieldKind::Rotation { omega: 1.0 }, 2).unwrap()
    }

    pub fn logistic() -> Self {
        VectorField::new(FieldKind::Logistic1d { rate: 1.0 }, 1).unwrap()
    }

    pub fn double_well(dim: usize) -> Self {
        VectorField::new(FieldKind::DoubleWellGradient, dim).expect("valid dimension")
    }

    pub fn harmonic(omega: f64) -> Self {
        VectorField::new(FieldKind::HarmonicHamiltonian { omega }, 2).unwrap()
    }

    pub fn custom(components: Vec<Polynomial>, divergence: Polynomial) -> Result<Self, FieldError> {
        let dim = components.len();
        VectorField::new(
            FieldKind::CustomPolynomial {
                components,
                divergence,
            },
            dim,
        )
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Analytically divergence-free built-ins.
    pub fn is_divergence_free(&self) -> bool {
        matches!(
            self.kind,
            FieldKind::Zero
                | FieldKind::Constant(_)
                | FieldKind::Rotation { .. }
                | FieldKind::HarmonicHamiltonian { .. }
        )
    }

    /// F(x). No domain check; see [`VectorField::evaluate_on`].
    pub fn evaluate(&self, x: &Point) -> Point {
        let d = self.dim;
        match &self.kind {
            FieldKind::Zero => Point::zeros(d),
            FieldKind::Constant(c) => Point::new(c),
            FieldKind::Linear(a) => {
                let mut out = Point::zeros(d);
                for i in 0..d {
                    out[i] = (0..d).map(|j| a[i * d + j] * x[j]).sum();
                }
                out
            }
            FieldKind::Rotation { omega } => Point::xy(-omega * x[1], omega * x[0]),
            FieldKind::Logistic1d { rate } => Point::x(rate * x[0] * (1.0 - x[0])),
            FieldKind::DoubleWellGradient => {
                let mut out = Point::zeros(d);
                for k in 0..d {
                    out[k] = x[k] - x[k] * x[k] * x[k];
                }
                out
            }
            FieldKind::HarmonicHamiltonian { omega } => Point::xy(x[1], -omega * omega * x[0]),
            FieldKind::CustomPolynomial { components, .. } => {
                let mut out = Point::zeros(d);
                for (k, p) in components.iter().enumerate() {
                    out[k] = p.evaluate(x);
                }
                out
            }
        }
    }

    /// Analytic div F(x).
    pub fn divergence(&self, x: &Point) -> f64 {
        let d = self.dim;
        match &self.kind {
            FieldKind::Zero
            | FieldKind::Constant(_)
            | FieldKind::Rotation { .. }
            | FieldKind::HarmonicHamiltonian { .. } => 0.0,
            FieldKind::Linear(a) => (0..d).map(|k| a[k * d + k]).sum(),
            FieldKind::Logistic1d { rate } => rate * (1.0 - 2.0 * x[0]),
            FieldKind::DoubleWellGradient => (0..d).map(|k| 1.0 - 3.0 * x[k] * x[k]).sum(),
            FieldKind::CustomPolynomial { divergence, .. } => divergence.evaluate(x),
        }
    }

    /// Jacobian ∂F_i/∂x_j, row-major.
    pub fn jacobian(&self, x: &Point) -> DMatrix<f64> {
        let d = self.dim;
        match &self.kind {
            FieldKind::Zero | FieldKind::Constant(_) => DMatrix::zeros(d, d),
            FieldKind::Linear(a) => DMatrix::from_row_slice(d, d, a),
            FieldKind::Rotation { omega } => DMatrix::from_row_slice(2, 2, &[0.0, -omega, *omega, 0.0]),
            FieldKind::Logistic1d { rate } => DMatrix::from_element(1, 1, rate * (1.0 - 2.0 * x[0])),
            FieldKind::DoubleWellGradient => {
                DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 - 3.0 * x[i] * x[i] } else { 0.0 })
            }
            FieldKind::HarmonicHamiltonian { omega } => {
                DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -omega * omega, 0.0])
            }
            FieldKind::CustomPolynomial { components, .. } => {
                DMatrix::from_fn(d, d, |i, j| components[i].partial(j).evaluate(x))
            }
        }
    }

    fn check_point(&self, domain: &Domain, x: &Point) -> Result<(), FieldError> {
        if domain.dim() != self.dim || x.dim() != self.dim {
            return Err(FieldError::DimensionMismatch {
                field: self.dim,
                domain: domain.dim(),
            });
        }
        if !x.is_finite() || !domain.contains_closed(x, 1e-12 * domain.diameter()) {
            return Err(FieldError::OutsideDomain {
                point: x.as_slice().to_vec(),
            });
        }
        Ok(())
    }

    /// F(x) for x in the closed domain.
    pub fn evaluate_on(&self, domain: &Domain, x: &Point) -> Result<Point, FieldError> {
        self.check_point(domain, x)?;
        Ok(self.evaluate(x))
    }

    /// div F(x) for x in the closed domain.
    pub fn divergence_on(&self, domain: &Domain, x: &Point) -> Result<f64, FieldError> {
        self.check_point(domain, x)?;
        Ok(self.divergence(x))
    }

    /// Largest normalized gap between the analytic divergence and a central
    /// finite-difference divergence at `samples` random interior points,
    /// `|div − div_fd| / (1 + |div|)`.
    pub fn divergence_fd_defect(&self, domain: &Domain, samples: usize, step: f64, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = domain.bounding_box();
        let mut worst = 0.0f64;
        let mut taken = 0;
        while taken < samples {
            let mut x = Point::zeros(self.dim);
            for k in 0..self.dim {
                x[k] = rng.random_range(lo[k]..hi[k]);
            }
            // Keep the FD stencil inside the domain.
            if domain.signed_distance(&x) > -2.0 * step {
                continue;
            }
            taken += 1;
            let fd: f64 = (0..self.dim)
                .map(|k| {
                    let e = Point::unit(self.dim, k);
                    (self.evaluate(&x.axpy(step, &e))[k] - self.evaluate(&x.axpy(-step, &e))[k])
                        / (2.0 * step)
                })
                .sum();
            let div = self.divergence(&x);
            worst = worst.max((div - fd).abs() / (1.0 + div.abs()));
        }
        worst
    }
}

/// Upper bound on the Lipschitz constant of F over the closed domain.
///
/// Exact for fields with constant Jacobian (zero, constant, linear,
/// rotation); otherwise the largest Jacobian spectral norm over a 64^d
/// vertex lattice of the bounding box, restricted to the closed domain,
/// times a safety factor of 1.25.
pub fn lipschitz_estimate(field: &VectorField, domain: &Domain) -> f64 {
    const SAMPLES: usize = 64;
    const SAFETY: f64 = 1.25;
    let d = field.dim();
    match field.kind() {
        FieldKind::Zero | FieldKind::Constant(_) => 0.0,
        FieldKind::Linear(_) | FieldKind::Rotation { .. } => spectral_norm(&field.jacobian(&Point::zeros(d))),
        _ => {
            let (lo, hi) = domain.bounding_box();
            let total = SAMPLES.pow(d as u32);
            let mut worst = 0.0f64;
            for slot in 0..total {
                let mut x = Point::zeros(d);
                let mut s = slot;
                for k in 0..d {
                    let i = s % SAMPLES;
                    s /= SAMPLES;
                    x[k] = lo[k] + (hi[k] - lo[k]) * i as f64 / (SAMPLES - 1) as f64;
                }
                if domain.contains_closed(&x, 0.0) {
                    worst = worst.max(spectral_norm(&field.jacobian(&x)));
                }
            }
            worst * SAFETY
        }
    }
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Largest |F| over cell centers and boundary-face centroids.
pub fn sup_norm_on_grid(field: &VectorField, grid: &Grid) -> f64 {
    grid.cells()
        .iter()
        .chain(grid.boundary_faces().iter().map(|f| &f.centroid))
        .map(|x| field.evaluate(x).norm())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryClass {
    /// F·ν < −tol (inflow, Γ₋)
    Minus,
    /// |F·ν| ≤ tol (characteristic, Γ₀)
    Zero,
    /// F·ν > tol (outflow, Γ₊)
    Plus,
}

impl BoundaryClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundaryClass::Minus => "minus",
            BoundaryClass::Zero => "zero",
            BoundaryClass::Plus => "plus",
        }
    }
}

/// Partition of the boundary faces by the sign of F·ν.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryClassification {
    pub gamma_minus: Vec<usize>,
    pub gamma_plus: Vec<usize>,
    pub gamma_zero: Vec<usize>,
    /// F(centroid)·ν per face.
    pub normal_flux: Vec<f64>,
    pub max_outflow: f64,
    pub tol: f64,
}

impl BoundaryClassification {
    pub fn class_of(&self, face: usize) -> BoundaryClass {
        let v = self.normal_flux[face];
        if v < -self.tol {
            BoundaryClass::Minus
        } else if v > self.tol {
            BoundaryClass::Plus
        } else {
            BoundaryClass::Zero
        }
    }

    /// CSV: `face_index,c_1..c_d,f_dot_nu,class`.
    pub fn write_csv<W: Write>(&self, grid: &Grid, mut out: W) -> io::Result<()> {
        let d = grid.dim();
        write!(out, "face_index")?;
        for k in 1..=d {
            write!(out, ",c_{k}")?;
        }
        writeln!(out, ",f_dot_nu,class")?;
        for (i, face) in grid.boundary_faces().iter().enumerate() {
            write!(out, "{i}")?;
            for k in 0..d {
                write!(out, ",{:e}", face.centroid[k])?;
            }
            writeln!(out, ",{:e},{}", self.normal_flux[i], self.class_of(i).as_str())?;
        }
        Ok(())
    }
}

pub fn classify_boundary(field: &VectorField, grid: &Grid, tol: f64) -> BoundaryClassification {
    let tol = tol.max(0.0);
    let normal_flux: Vec<f64> = grid
        .boundary_faces()
        .iter()
        .map(|f| field.evaluate(&f.centroid).dot(&f.normal))
        .collect();
    let mut c = BoundaryClassification {
        gamma_minus: Vec::new(),
        gamma_plus: Vec::new(),
        gamma_zero: Vec::new(),
        max_outflow: normal_flux.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        normal_flux,
        tol,
    };
    for i in 0..c.normal_flux.len() {
        match c.class_of(i) {
            BoundaryClass::Minus => c.gamma_minus.push(i),
            BoundaryClass::Zero => c.gamma_zero.push(i),
            BoundaryClass::Plus => c.gamma_plus.push(i),
        }
    }
    c
}

/// Outcome of the sampled no-outflow check F·ν ≤ 0.
#[derive(Debug, Clone, PartialEq)]
pub enum NoOutflowVerdict {
    Ok,
    /// Violating faces with their F·ν values.
    Violated(Vec<(usize, f64)>),
}

impl NoOutflowVerdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, NoOutflowVerdict::Ok)
    }
}

pub fn check_no_outflow(classification: &BoundaryClassification) -> NoOutflowVerdict {
    if classification.gamma_plus.is_empty() {
        NoOutflowVerdict::Ok
    } else {
        NoOutflowVerdict::Violated(
            classification
                .gamma_plus
                .iter()
                .map(|&i| (i, classification.normal_flux[i]))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_grid;
    use approx::assert_relative_eq;

    fn builtins() -> Vec<(VectorField, Domain)> {
        let unit = Domain::interval(0.0, 1.0).unwrap();
        let sym = Domain::interval(-1.0, 1.0).unwrap();
        let square = Domain::rectangle(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        let cube = Domain::rectangle(&[-1.0, -1.0, -1.0], &[1.0, 1.0, 1.0]).unwrap();
        let stream = VectorField::custom(
            vec!["1:2,0".parse().unwrap(), "-2:1,1".parse().unwrap()],
            Polynomial::default(),
        )
        .unwrap();
        vec![
            (VectorField::zero(1), unit.clone()),
            (VectorField::constant(&[0.3, -0.7]), square.clone()),
            (VectorField::linear(2, &[-1.0, 0.5, 0.2, -0.3]), square.clone()),
            (VectorField::rotation(), Domain::unit_disk()),
            (VectorField::logistic(), unit),
            (VectorField::double_well(1), sym.clone()),
            (VectorField::double_well(3), cube),
            (VectorField::harmonic(1.0), Domain::unit_disk()),
            (VectorField::scaled_identity(1, -1.0), sym),
            (stream, square),
        ]
    }

    #[test]
    fn analytic_divergence_matches_finite_differences() {
        for (f, d) in builtins() {
            let defect = f.divergence_fd_defect(&d, 100, 1e-5, 11);
            assert!(defect <= 1e-6, "{:?}: {defect}", f.kind());
        }
    }

    #[test]
    fn wrong_custom_divergence_is_caught() {
        let f = VectorField::custom(vec!["1:2".parse().unwrap()], "1:1".parse().unwrap()).unwrap();
        let d = Domain::interval(0.0, 1.0).unwrap();
        assert!(f.divergence_fd_defect(&d, 100, 1e-5, 3) > 1e-3);
    }

    #[test]
    fn divergence_free_builtins_are_exactly_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for f in [VectorField::zero(2), VectorField::rotation(), VectorField::harmonic(2.0)] {
            for _ in 0..100 {
                let x = Point::xy(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                assert_eq!(f.divergence(&x), 0.0);
            }
        }
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(VectorField::zero(2).evaluate(&Point::xy(0.3, 0.2)).as_slice(), &[0.0, 0.0]);
        assert_eq!(VectorField::rotation().evaluate(&Point::xy(1.0, 0.0)).as_slice(), &[0.0, 1.0]);
        assert_eq!(VectorField::logistic().evaluate(&Point::x(0.5))[0], 0.25);
        assert_eq!(VectorField::logistic().divergence(&Point::x(0.25)), 0.5);
        let lin = VectorField::linear(2, &[1.0, 2.0, 3.0, -4.0]);
        assert_eq!(lin.divergence(&Point::xy(0.1, 9.0)), -3.0);
        assert_eq!(lin.divergence(&Point::xy(-5.0, 0.0)), -3.0);
    }

    #[test]
    fn evaluate_on_rejects_outside_points() {
        let d = Domain::interval(0.0, 1.0).unwrap();
        let f = VectorField::logistic();
        assert!(f.evaluate_on(&d, &Point::x(1.0)).is_ok());
        assert!(matches!(
            f.evaluate_on(&d, &Point::x(1.0 + 1e-6)),
            Err(FieldError::OutsideDomain { .. })
        ));
        assert!(f.divergence_on(&d, &Point::x(-0.1)).is_err());
        assert!(matches!(
            VectorField::rotation().evaluate_on(&d, &Point::x(0.5)),
            Err(FieldError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn lipschitz_examples() {
        let unit = Domain::interval(0.0, 1.0).unwrap();
        assert_eq!(lipschitz_estimate(&VectorField::zero(1), &unit), 0.0);
        assert_relative_eq!(
            lipschitz_estimate(&VectorField::rotation(), &Domain::unit_disk()),
            1.0,
            epsilon = 1e-14
        );
        assert_relative_eq!(lipschitz_estimate(&VectorField::logistic(), &unit), 1.25, epsilon = 1e-14);
        let lin = VectorField::linear(2, &[0.0, 3.0, 0.0, 0.0]);
        let sq = Domain::rectangle(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_relative_eq!(lipschitz_estimate(&lin, &sq), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn classification_examples() {
        let disk = build_grid(&Domain::unit_disk(), &[32, 32]).unwrap();
        let c = classify_boundary(&VectorField::rotation(), &disk, 1e-10);
        assert_eq!(c.gamma_zero.len(), disk.boundary_faces().len());
        assert!(check_no_outflow(&c).is_ok());

        let c = classify_boundary(&VectorField::scaled_identity(2, -1.0), &disk, 1e-10);
        assert_eq!(c.gamma_minus.len(), disk.boundary_faces().len());
        assert_relative_eq!(c.max_outflow, -1.0, epsilon = 1e-14);

        let sym = build_grid(&Domain::interval(-1.0, 1.0).unwrap(), &[8]).unwrap();
        let c = classify_boundary(&VectorField::scaled_identity(1, 1.0), &sym, 1e-10);
        assert_eq!(c.gamma_plus, vec![0, 1]);
        match check_no_outflow(&c) {
            NoOutflowVerdict::Violated(faces) => {
                assert_eq!(faces, vec![(0, 1.0), (1, 1.0)]);
            }
            v => panic!("expected violation, got {v:?}"),
        }

        let unit = build_grid(&Domain::interval(0.0, 1.0).unwrap(), &[8]).unwrap();
        let c = classify_boundary(&VectorField::logistic(), &unit, 1e-10);
        assert_eq!(c.gamma_zero, vec![0, 1]);
        assert!(check_no_outflow(&c).is_ok());
    }

    #[test]
    fn verdict_is_stable_under_refinement() {
        let cases = [
            (VectorField::rotation(), Domain::unit_disk(), true),
            (VectorField::scaled_identity(2, -1.0), Domain::unit_disk(), true),
            (VectorField::scaled_identity(2, 1.0), Domain::unit_disk(), false),
            (
                VectorField::double_well(2),
                Domain::rectangle(&[-1.0, -1.0], &[1.0, 1.0]).unwrap(),
                true,
            ),
        ];
        for (f, d, expect_ok) in cases {
            for n in [16, 32, 64] {
                let g = build_grid(&d, &vec![n; d.dim()]).unwrap();
                let verdict = check_no_outflow(&classify_boundary(&f, &g, 1e-10));
                assert_eq!(verdict.is_ok(), expect_ok, "{:?} n={n}", f.kind());
            }
        }
    }

    #[test]
    fn classification_partitions_faces() {
        let g = build_grid(&Domain::rectangle(&[-1.0, -0.5], &[1.0, 0.5]).unwrap(), &[6, 5]).unwrap();
        let f = VectorField::linear(2, &[0.0, 1.0, -1.0, 0.3]);
        let c = classify_boundary(&f, &g, 1e-10);
        let mut all: Vec<usize> = c
            .gamma_minus
            .iter()
            .chain(&c.gamma_plus)
            .chain(&c.gamma_zero)
            .cloned()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..g.boundary_faces().len()).collect::<Vec<_>>());
        let mut csv = Vec::new();
        c.write_csv(&g, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("face_index,c_1,c_2,f_dot_nu,class\n"));
        assert_eq!(text.lines().count(), 1 + g.boundary_faces().len());
    }

    #[test]
    fn polynomial_text_round_trip() {
        let p: Polynomial = "1.5:2,0; -1:0,1".parse().unwrap();
        assert_eq!(p.evaluate(&Point::xy(2.0, 3.0)), 1.5 * 4.0 - 3.0);
        let again: Polynomial = p.to_string().parse().unwrap();
        assert_eq!(p, again);
        assert!("1.5".parse::<Polynomial>().is_err());
        assert_eq!("".parse::<Polynomial>().unwrap().terms.len(), 0);
    }
}
