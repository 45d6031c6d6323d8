//! Fixtures shared by the benchmarks.

use kvn_core::{build_grid, Complex64, ComplexField, Domain, Grid, VectorField};

/// Rotation on the unit disk with `n` cells per axis.
pub fn rotation_disk(n: usize) -> (VectorField, Domain, Grid) {
    let domain = Domain::unit_disk();
    let grid = build_grid(&domain, &[n, n]).expect("valid resolution");
    (VectorField::rotation(), domain, grid)
}

/// Logistic field on [0, 1] with `n` cells.
pub fn logistic_interval(n: usize) -> (VectorField, Domain, Grid) {
    let domain = Domain::interval(0.0, 1.0).expect("valid interval");
    let grid = build_grid(&domain, &[n]).expect("valid resolution");
    (VectorField::logistic(), domain, grid)
}

/// Unit-norm Gaussian centred at `c` (first coordinates) with width `sigma`.
pub fn gaussian(grid: &Grid, c: &[f64], sigma: f64) -> ComplexField {
    let mut psi = ComplexField::sample(grid, |x| {
        let r2: f64 = c.iter().enumerate().map(|(k, ck)| (x[k] - ck).powi(2)).sum();
        Complex64::new((-r2 / (2.0 * sigma * sigma)).exp(), 0.0)
    });
    let n = psi.norm_w(grid.volumes());
    psi.scale(1.0 / n);
    psi
}
