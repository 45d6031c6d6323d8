//! Sparse discrete generators on a [`Grid`].
//!
//! * [`assemble_pf_generator`]: finite-volume flux form of ρ ↦ −div(ρF) with
//!   centered face fluxes and zero flux through every boundary face.
//! * [`assemble_koopman_generator`]: centered differences for f ↦ F·∇f,
//!   one-sided next to the boundary.
//! * [`assemble_kvn_generator`]: the exact skew-symmetric part of the flux
//!   operator in the cell-volume weighted inner product.
//!
//! All three are real matrices; complex fields are handled by applying the
//! matrix to the real and imaginary parts independently.

use std::collections::BTreeMap;
use std::io::{self, Write};

use num_complex::Complex64;
use thiserror::Error;

use crate::fields::VectorField;
use crate::geometry::Grid;
use crate::point::Point;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("dimension mismatch: operator has {expected} rows, field has {got} entries")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("triplet ({row}, {col}) out of range for dimension {n}")]
    IndexOutOfRange { row: usize, col: usize, n: usize },
    #[error("weights must be positive and finite, one per row")]
    InvalidWeights,
}

/// Complex grid function ψ.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub values: Vec<Complex64>,
}

impl ComplexField {
    pub fn zeros(n: usize) -> Self {
        ComplexField {
            values: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn from_values(values: Vec<Complex64>) -> Self {
        ComplexField { values }
    }

    pub fn from_real(values: &[f64]) -> Self {
        ComplexField {
            values: values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    /// Samples `f` at the grid's cell centers.
    pub fn sample(grid: &Grid, f: impl Fn(&Point) -> Complex64) -> Self {
        ComplexField {
            values: grid.cells().iter().map(f).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn re(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn im(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.im).collect()
    }

    pub fn from_parts(re: &[f64], im: &[f64]) -> Self {
        ComplexField {
            values: re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect(),
        }
    }

    /// ⟨self, other⟩_w = Σ w_i conj(self_i) other_i
    pub fn inner_w(&self, other: &ComplexField, weights: &[f64]) -> Complex64 {
        self.values
            .iter()
            .zip(&other.values)
            .zip(weights)
            .map(|((a, b), w)| a.conj() * b * w)
            .sum()
    }

    pub fn norm_w(&self, weights: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(weights)
            .map(|(z, w)| w * z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for z in &mut self.values {
            *z *= s;
        }
    }

    /// |ψ|² per cell.
    pub fn density(&self) -> RealField {
        RealField {
            values: self.values.iter().map(|z| z.norm_sqr()).collect(),
        }
    }

    /// ‖self − other‖_w
    pub fn distance_w(&self, other: &ComplexField, weights: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .zip(weights)
            .map(|((a, b), w)| w * (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// Real grid function, typically a probability density ρ.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    pub values: Vec<f64>,
}

impl RealField {
    pub fn sample(grid: &Grid, f: impl Fn(&Point) -> f64) -> Self {
        RealField {
            values: grid.cells().iter().map(f).collect(),
        }
    }

    pub fn mass(&self, weights: &[f64]) -> f64 {
        self.values.iter().zip(weights).map(|(v, w)| v * w).sum()
    }

    /// Σ w_i |a_i − b_i|
    pub fn l1_distance(&self, other: &RealField, weights: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .zip(weights)
            .map(|((a, b), w)| w * (a - b).abs())
            .sum()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }
}

/// Real sparse matrix in compressed-row form together with the cell weights
/// defining ⟨u, v⟩_w = Σ_i w_i ū_i v_i.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    weights: Vec<f64>,
    /// Discrete flux the closure lets through each boundary face.
    boundary_flux: Vec<f64>,
}

impl SparseOperator {
    /// Assembles from coordinate triplets; duplicates are summed and exact
    /// zeros dropped.
    pub fn from_triplets(
        n: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
        weights: Vec<f64>,
    ) -> Result<Self, OperatorError> {
        if weights.len() != n || weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(OperatorError::InvalidWeights);
        }
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (row, col, v) in triplets {
            if row >= n || col >= n {
                return Err(OperatorError::IndexOutOfRange { row, col, n });
            }
            *acc.entry((row, col)).or_insert(0.0) += v;
        }
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(acc.len());
        let mut values = Vec::with_capacity(acc.len());
        for ((row, col), v) in acc {
            if v != 0.0 {
                row_ptr[row + 1] += 1;
                col_idx.push(col);
                values.push(v);
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(SparseOperator {
            n,
            row_ptr,
            col_idx,
            values,
            weights,
            boundary_flux: Vec::new(),
        })
    }

    pub fn with_boundary_flux(mut self, flux: Vec<f64>) -> Self {
        self.boundary_flux = flux;
        self
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn boundary_flux(&self) -> &[f64] {
        &self.boundary_flux
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().cloned().zip(self.values[r].iter().cloned())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// Stored value at (i, j), or 0.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    /// y = A x for real vectors. Each row is reduced in a fixed order.
    pub fn apply_real(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    /// y = A x for complex vectors, real and imaginary parts independently.
    pub fn apply_complex(&self, x: &[Complex64], y: &mut [Complex64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += x[self.col_idx[k]] * self.values[k];
            }
            *yi = s;
        }
    }

    /// Adjoint with respect to ⟨·,·⟩_w: (A^{†w})_{ij} = w_j A_{ji} / w_i.
    pub fn weighted_adjoint(&self) -> SparseOperator {
        let w = &self.weights;
        SparseOperator::from_triplets(
            self.n,
            self.triplets().map(|(i, j, v)| (j, i, w[i] * v / w[j])),
            self.weights.clone(),
        )
        .expect("adjoint of a valid operator")
    }

    /// Largest absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Coordinate-format text, one `row col value` line per stored entry,
    /// values with 17 significant digits.
    pub fn write_coordinate<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (i, j, v) in self.triplets() {
            writeln!(out, "{i} {j} {v:.16e}")?;
        }
        Ok(())
    }
}

pub fn apply(op: &SparseOperator, field: &ComplexField) -> Result<ComplexField, OperatorError> {
    if field.len() != op.dim() {
        return Err(OperatorError::DimensionMismatch {
            expected: op.dim(),
            got: field.len(),
        });
    }
    let mut out = ComplexField::zeros(op.dim());
    op.apply_complex(&field.values, &mut out.values);
    Ok(out)
}

/// Finite-volume form of ρ ↦ −div(ρF).
///
/// Each interior face with normal n from cell i to cell j and area a carries
/// the flux a·(F_face·n)·(ρ_i + ρ_j)/2, with F evaluated at the face
/// centroid. Boundary faces carry no flux.
pub fn assemble_pf_generator(field: &VectorField, grid: &Grid) -> SparseOperator {
    let w = grid.volumes();
    let mut trip = Vec::with_capacity(4 * grid.interior_faces().len());
    for face in grid.interior_faces() {
        let c = 0.5 * face.area * field.evaluate(&face.centroid)[face.axis];
        if c == 0.0 {
            continue;
        }
        let (i, j) = (face.lower, face.upper);
        trip.push((i, i, -c / w[i]));
        trip.push((i, j, -c / w[i]));
        trip.push((j, i, c / w[j]));
        trip.push((j, j, c / w[j]));
    }
    SparseOperator::from_triplets(grid.len(), trip, w.to_vec())
        .expect("grid indices are in range")
        .with_boundary_flux(vec![0.0; grid.boundary_faces().len()])
}

/// Centered-difference form of f ↦ F·∇f with F sampled at cell centers;
/// one-sided first differences where a neighbor is missing.
pub fn assemble_koopman_generator(field: &VectorField, grid: &Grid) -> SparseOperator {
    let mut trip = Vec::new();
    for (i, x) in grid.cells().iter().enumerate() {
        let f = field.evaluate(x);
        for axis in 0..grid.dim() {
            let a = f[axis];
            if a == 0.0 {
                continue;
            }
            let h = grid.spacing()[axis];
            match grid.neighbors(i, axis) {
                (Some(m), Some(p)) => {
                    trip.push((i, p, a / (2.0 * h)));
                    trip.push((i, m, -a / (2.0 * h)));
                }
                (None, Some(p)) => {
                    trip.push((i, p, a / h));
                    trip.push((i, i, -a / h));
                }
                (Some(m), None) => {
                    trip.push((i, i, a / h));
                    trip.push((i, m, -a / h));
                }
                (None, None) => {}
            }
        }
    }
    SparseOperator::from_triplets(grid.len(), trip, grid.volumes().to_vec())
        .expect("grid indices are in range")
}

/// Skew-symmetric part ½(M − M^{†w}) of the flux operator M.
pub fn assemble_kvn_generator(field: &VectorField, grid: &Grid) -> SparseOperator {
    kvn_from_pf(&assemble_pf_generator(field, grid))
}

/// ½(M − M^{†w}) for an arbitrary operator M.
///
/// Entries are formed as B_ij = ½(w_i M_ij − w_j M_ji), which is exactly
/// antisymmetric in floating point, then divided by w_i.
pub fn kvn_from_pf(pf: &SparseOperator) -> SparseOperator {
    let w = pf.weights();
    let mut trip = Vec::with_capacity(2 * pf.nnz());
    for (i, j, _) in pf.triplets() {
        if i == j {
            continue;
        }
        // Each unordered pair is emitted once from its first occurrence.
        let mirrored = pf.get(j, i) != 0.0;
        if mirrored && j < i {
            continue;
        }
        let b = 0.5 * (w[i] * pf.get(i, j) - w[j] * pf.get(j, i));
        trip.push((i, j, b / w[i]));
        trip.push((j, i, -b / w[j]));
    }
    SparseOperator::from_triplets(pf.dim(), trip, w.to_vec())
        .expect("same pattern as input")
        .with_boundary_flux(pf.boundary_flux().to_vec())
}

/// max_{stored (i,j)} |w_i A_ij + w_j A_ji| / max |w_i A_ij|; zero for the
/// zero matrix.
pub fn skewness_defect(op: &SparseOperator) -> f64 {
    let w = op.weights();
    let scale = op
        .triplets()
        .map(|(i, _, v)| (w[i] * v).abs())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    op.triplets()
        .map(|(i, j, v)| (w[i] * v + w[j] * op.get(j, i)).abs())
        .fold(0.0, f64::max)
        / scale
}

/// Discrete divergence D_h(ψF) = −M ψ of the flux operator M.
pub fn flux_divergence(pf: &SparseOperator, psi: &ComplexField) -> ComplexField {
    let mut out = apply(pf, psi).expect("dimension checked by caller");
    out.scale(-1.0);
    out
}

/// sqrt(‖ψ‖²_w + ‖D_h(ψF)‖²_w), the discrete graph norm of the flux
/// divergence.
pub fn pfs_norm(psi: &ComplexField, field: &VectorField, grid: &Grid) -> f64 {
    pfs_norm_with(psi, &assemble_pf_generator(field, grid))
}

pub fn pfs_norm_with(psi: &ComplexField, pf: &SparseOperator) -> f64 {
    let w = pf.weights();
    let d = flux_divergence(pf, psi);
    (psi.norm_w(w).powi(2) + d.norm_w(w).powi(2)).sqrt()
}
