//! Bounded domains and their cell-centered finite-volume grids.
//!
//! Three domain shapes are supported: an interval, an axis-aligned box in two
//! or three dimensions, and a disk. Disk grids mask a uniform lattice over the
//! bounding square; their boundary faces sit on the staircase interface but
//! carry the analytic circle normal so that boundary classification matches
//! the continuum geometry.

use crate::point::{Point, MAX_DIM};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("domain extent along axis {axis} must be positive (got [{lo}, {hi}])")]
    InvalidExtent { axis: usize, lo: f64, hi: f64 },
    #[error("disk radius must be positive (got {0})")]
    InvalidRadius(f64),
    #[error("rectangle dimension must be 2 or 3 (got {0})")]
    InvalidDimension(usize),
    #[error("resolution must be at least 3 per axis (got {0:?})")]
    InvalidResolution(Vec<usize>),
    #[error("resolution has {got} axes but the domain has dimension {expected}")]
    ResolutionMismatch { expected: usize, got: usize },
    #[error("domain parameter is not finite")]
    NonFinite,
}

/// A bounded open domain Ω ⊂ R^d.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Interval { lo: f64, hi: f64 },
    Rectangle { lo: Vec<f64>, hi: Vec<f64> },
    Disk { center: [f64; 2], radius: f64 },
}

impl Domain {
    pub fn interval(lo: f64, hi: f64) -> Result<Self, GeometryError> {
        let d = Domain::Interval { lo, hi };
        d.validate()?;
        Ok(d)
    }

    pub fn rectangle(lo: &[f64], hi: &[f64]) -> Result<Self, GeometryError> {
        let d = Domain::Rectangle {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn disk(center: [f64; 2], radius: f64) -> Result<Self, GeometryError> {
        let d = Domain::Disk { center, radius };
        d.validate()?;
        Ok(d)
    }

    pub fn unit_disk() -> Self {
        Domain::Disk {
            center: [0.0, 0.0],
            radius: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        match self {
            Domain::Interval { lo, hi } => check_extent(0, *lo, *hi),
            Domain::Rectangle { lo, hi } => {
                if lo.len() != hi.len() || !(2..=MAX_DIM).contains(&lo.len()) {
                    return Err(GeometryError::InvalidDimension(lo.len().max(hi.len())));
                }
                lo.iter()
                    .zip(hi)
                    .enumerate()
                    .try_for_each(|(axis, (&l, &h))| check_extent(axis, l, h))
            }
            Domain::Disk { center, radius } => {
                if !center.iter().all(|c| c.is_finite()) || !radius.is_finite() {
                    return Err(GeometryError::NonFinite);
                }
                if *radius <= 0.0 {
                    return Err(GeometryError::InvalidRadius(*radius));
                }
                Ok(())
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            Domain::Rectangle { lo, .. } => lo.len(),
            Domain::Disk { .. } => 2,
        }
    }

    /// Lower and upper corners of the axis-aligned bounding box.
    pub fn bounding_box(&self) -> (Point, Point) {
        match self {
            Domain::Interval { lo, hi } => (Point::x(*lo), Point::x(*hi)),
            Domain::Rectangle { lo, hi } => (Point::new(lo), Point::new(hi)),
            Domain::Disk { center, radius } => (
                Point::xy(center[0] - radius, center[1] - radius),
                Point::xy(center[0] + radius, center[1] + radius),
            ),
        }
    }

    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        match self {
            Domain::Disk { radius, .. } => 2.0 * radius,
            _ => (hi - lo).norm(),
        }
    }

    /// Analytic Lebesgue measure of Ω.
    pub fn volume(&self) -> f64 {
        match self {
            Domain::Disk { radius, .. } => std::f64::consts::PI * radius * radius,
            _ => {
                let (lo, hi) = self.bounding_box();
                (hi - lo).as_slice().iter().product()
            }
        }
    }

    /// Membership in the open domain.
    pub fn contains(&self, x: &Point) -> bool {
        self.signed_distance(x) < 0.0
    }

    /// Membership in the closed domain, allowing `tol` of overshoot.
    pub fn contains_closed(&self, x: &Point, tol: f64) -> bool {
        self.signed_distance(x) <= tol
    }

    /// Negative inside, zero on ∂Ω, positive outside (exact Euclidean
    /// distance outside and on the disk; an L∞-type value inside boxes).
    pub fn signed_distance(&self, x: &Point) -> f64 {
        debug_assert_eq!(x.dim(), self.dim());
        match self {
            Domain::Disk { center, radius } => {
                let c = Point::xy(center[0], center[1]);
                (*x - c).norm() - radius
            }
            _ => {
                let (lo, hi) = self.bounding_box();
                let mut outside = 0.0f64;
                let mut inside = f64::NEG_INFINITY;
                for k in 0..x.dim() {
                    let below = lo[k] - x[k];
                    let above = x[k] - hi[k];
                    let worst = below.max(above);
                    if worst > 0.0 {
                        outside += worst * worst;
                    }
                    inside = inside.max(worst);
                }
                if outside > 0.0 {
                    outside.sqrt()
                } else {
                    inside
                }
            }
        }
    }

    /// Nearest point of the closed domain.
    pub fn project(&self, x: &Point) -> Point {
        match self {
            Domain::Disk { center, radius } => {
                let c = Point::xy(center[0], center[1]);
                let r = *x - c;
                let n = r.norm();
                if n <= *radius {
                    *x
                } else {
                    c + r * (radius / n)
                }
            }
            _ => {
                let (lo, hi) = self.bounding_box();
                let mut p = *x;
                for k in 0..x.dim() {
                    p[k] = p[k].clamp(lo[k], hi[k]);
                }
                p
            }
        }
    }

    /// Outward unit normal of the analytic boundary nearest to `x`.
    fn outward_normal_near(&self, x: &Point) -> Point {
        match self {
            Domain::Disk { center, .. } => {
                let r = *x - Point::xy(center[0], center[1]);
                r * (1.0 / r.norm())
            }
            _ => unreachable!("box normals are axis-aligned"),
        }
    }
}

fn check_extent(axis: usize, lo: f64, hi: f64) -> Result<(), GeometryError> {
    if !lo.is_finite() || !hi.is_finite() {
        return Err(GeometryError::NonFinite);
    }
    if hi <= lo {
        return Err(GeometryError::InvalidExtent { axis, lo, hi });
    }
    Ok(())
}

/// A face on ∂Ω owned by exactly one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFace {
    pub cell_index: usize,
    /// Point on the analytic boundary associated with the face.
    pub centroid: Point,
    /// Outward unit normal ν.
    pub normal: Point,
    /// (d−1)-dimensional measure; 1 for the endpoints of an interval.
    pub area: f64,
}

/// A face shared by two active cells. The normal points along `+axis`, i.e.
/// from `lower` into `upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorFace {
    pub lower: usize,
    pub upper: usize,
    pub axis: usize,
    pub centroid: Point,
    pub area: f64,
}

/// Cell-centered grid on a masked uniform lattice.
#[derive(Debug, Clone)]
pub struct Grid {
    domain: Domain,
    shape: Vec<usize>,
    spacing: Vec<f64>,
    cells: Vec<Point>,
    volumes: Vec<f64>,
    /// Lattice slot → active cell index.
    lattice: Vec<Option<usize>>,
    /// Per cell, per axis: (minus, plus) neighbors.
    neighbors: Vec<[(Option<usize>, Option<usize>); MAX_DIM]>,
    interior_faces: Vec<InteriorFace>,
    boundary_faces: Vec<BoundaryFace>,
}

/// Builds the cell-centered grid for `domain` with `resolution[k]` lattice
/// cells along axis k.
pub fn build_grid(domain: &Domain, resolution: &[usize]) -> Result<Grid, GeometryError> {
    domain.validate()?;
    let dim = domain.dim();
    if resolution.len() != dim {
        return Err(GeometryError::ResolutionMismatch {
            expected: dim,
            got: resolution.len(),
        });
    }
    if resolution.iter().any(|&n| n < 3) {
        return Err(GeometryError::InvalidResolution(resolution.to_vec()));
    }

    let (lo, hi) = domain.bounding_box();
    let spacing: Vec<f64> = (0..dim)
        .map(|k| (hi[k] - lo[k]) / resolution[k] as f64)
        .collect();
    let volume: f64 = spacing.iter().product();
    let total: usize = resolution.iter().product();

    let center_of = |multi: &[usize; MAX_DIM]| {
        let mut p = Point::zeros(dim);
        for k in 0..dim {
            p[k] = lo[k] + (multi[k] as f64 + 0.5) * spacing[k];
        }
        p
    };

    let mut lattice = vec![None; total];
    let mut cells = Vec::new();
    let mut multis = Vec::new();
    for (slot, entry) in lattice.iter_mut().enumerate() {
        let multi = unflatten(slot, resolution);
        let c = center_of(&multi);
        let active = match domain {
            Domain::Disk { .. } => domain.contains(&c),
            _ => true,
        };
        if active {
            *entry = Some(cells.len());
            cells.push(c);
            multis.push(multi);
        }
    }

    let neighbors: Vec<_> = multis
        .iter()
        .map(|multi| {
            let mut nb = [(None, None); MAX_DIM];
            for (axis, pair) in nb.iter_mut().enumerate().take(dim) {
                let mut m = *multi;
                if multi[axis] > 0 {
                    m[axis] = multi[axis] - 1;
                    pair.0 = lattice[flatten(&m, resolution)];
                }
                if multi[axis] + 1 < resolution[axis] {
                    m[axis] = multi[axis] + 1;
                    pair.1 = lattice[flatten(&m, resolution)];
                }
            }
            nb
        })
        .collect();

    let face_area = |axis: usize| -> f64 {
        (0..dim)
            .filter(|&k| k != axis)
            .map(|k| spacing[k])
            .product()
    };

    let mut interior_faces = Vec::new();
    let mut boundary_faces = Vec::new();
    for (i, c) in cells.iter().enumerate() {
        for axis in 0..dim {
            let (minus, plus) = neighbors[i][axis];
            if let Some(j) = plus {
                interior_faces.push(InteriorFace {
                    lower: i,
                    upper: j,
                    axis,
                    centroid: c.axpy(0.5 * spacing[axis], &Point::unit(dim, axis)),
                    area: face_area(axis),
                });
            }
            for (side, neighbor) in [(-1.0, minus), (1.0, plus)] {
                if neighbor.is_some() {
                    continue;
                }
                let face = match domain {
                    Domain::Disk { center, radius } => {
                        let stair = c.axpy(side * 0.5 * spacing[axis], &Point::unit(dim, axis));
                        let normal = domain.outward_normal_near(&stair);
                        BoundaryFace {
                            cell_index: i,
                            centroid: Point::xy(center[0], center[1]) + normal * *radius,
                            normal,
                            area: face_area(axis),
                        }
                    }
                    _ => {
                        let mut centroid = *c;
                        centroid[axis] = if side < 0.0 { lo[axis] } else { hi[axis] };
                        BoundaryFace {
                            cell_index: i,
                            centroid,
                            normal: Point::unit(dim, axis) * side,
                            area: face_area(axis),
                        }
                    }
                };
                boundary_faces.push(face);
            }
        }
    }

    let n = cells.len();
    Ok(Grid {
        domain: domain.clone(),
        shape: resolution.to_vec(),
        spacing,
        cells,
        volumes: vec![volume; n],
        lattice,
        neighbors,
        interior_faces,
        boundary_faces,
    })
}

fn unflatten(mut slot: usize, shape: &[usize]) -> [usize; MAX_DIM] {
    let mut m = [0; MAX_DIM];
    for (k, &n) in shape.iter().enumerate() {
        m[k] = slot % n;
        slot /= n;
    }
    m
}

fn flatten(m: &[usize; MAX_DIM], shape: &[usize]) -> usize {
    shape
        .iter()
        .enumerate()
        .rev()
        .fold(0, |acc, (k, &n)| acc * n + m[k])
}

impl Grid {
    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Number of active cells N.
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn resolution(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Largest lattice spacing.
    pub fn h(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    pub fn cells(&self) -> &[Point] {
        &self.cells
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    pub fn total_volume(&self) -> f64 {
        self.volumes.iter().sum()
    }

    /// Lattice mask: `true` where the lattice cell is part of the grid.
    pub fn interior_mask(&self) -> Vec<bool> {
        self.lattice.iter().map(Option::is_some).collect()
    }

    /// Neighbors of `cell` along `axis` as `(minus, plus)`.
    #[inline]
    pub fn neighbors(&self, cell: usize, axis: usize) -> (Option<usize>, Option<usize>) {
        self.neighbors[cell][axis]
    }

    /// Whether `cell` has a full stencil along every axis.
    pub fn is_interior_cell(&self, cell: usize) -> bool {
        (0..self.dim()).all(|a| {
            let (m, p) = self.neighbors[cell][a];
            m.is_some() && p.is_some()
        })
    }

    pub fn interior_faces(&self) -> &[InteriorFace] {
        &self.interior_faces
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary_faces
    }

    pub fn boundary_area(&self) -> f64 {
        self.boundary_faces.iter().map(|f| f.area).sum()
    }

    /// Σ area·ν over the boundary faces; zero for a closed surface.
    pub fn boundary_normal_sum(&self) -> Point {
        self.boundary_faces
            .iter()
            .fold(Point::zeros(self.dim()), |acc, f| acc.axpy(f.area, &f.normal))
    }
}

/// Open-domain membership.
pub fn contains(domain: &Domain, x: &Point) -> bool {
    domain.contains(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_interval_four_cells() {
        let g = build_grid(&Domain::interval(0.0, 1.0).unwrap(), &[4]).unwrap();
        let centers: Vec<f64> = g.cells().iter().map(|c| c[0]).collect();
        assert_eq!(centers, vec![0.125, 0.375, 0.625, 0.875]);
        assert_eq!(g.spacing(), &[0.25]);
        assert!(g.volumes().iter().all(|&v| v == 0.25));
        let faces = g.boundary_faces();
        assert_eq!(faces.len(), 2);
        assert_eq!(faces[0].normal[0], -1.0);
        assert_eq!(faces[0].cell_index, 0);
        assert_eq!(faces[1].normal[0], 1.0);
        assert_eq!(faces[1].cell_index, 3);
        assert_eq!(g.interior_faces().len(), 3);
    }

    #[test]
    fn unit_square_counts() {
        let g = build_grid(&Domain::rectangle(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), &[10, 10]).unwrap();
        assert_eq!(g.len(), 100);
        assert_relative_eq!(g.total_volume(), 1.0, max_relative = 1e-12);
        assert_eq!(g.boundary_faces().len(), 40);
        assert_eq!(g.interior_faces().len(), 2 * 9 * 10);
    }

    #[test]
    fn box_volume_matches_extents() {
        let g = build_grid(
            &Domain::rectangle(&[-1.0, 0.0, 2.0], &[0.5, 0.3, 2.7]).unwrap(),
            &[5, 4, 3],
        )
        .unwrap();
        assert_eq!(g.len(), 60);
        assert_relative_eq!(g.total_volume(), 1.5 * 0.3 * 0.7, max_relative = 1e-12);
        assert_eq!(g.boundary_faces().len(), 2 * (4 * 3 + 5 * 3 + 5 * 4));
    }

    #[test]
    fn unit_disk_area_against_monte_carlo() {
        // Independent membership count over the bounding square.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples = 400_000;
        let hits = (0..samples)
            .filter(|_| {
                let x: f64 = rng.random_range(-1.0..1.0);
                let y: f64 = rng.random_range(-1.0..1.0);
                x * x + y * y < 1.0
            })
            .count();
        let mc_area = 4.0 * hits as f64 / samples as f64;
        let g = build_grid(&Domain::unit_disk(), &[64, 64]).unwrap();
        let area = g.total_volume();
        assert!((area - mc_area).abs() / mc_area < 0.05);
        assert!((area - std::f64::consts::PI).abs() / std::f64::consts::PI < 0.05);
        assert!(area <= 4.0);
    }

    #[test]
    fn disk_area_error_shrinks_with_refinement() {
        let errs: Vec<f64> = [32, 64, 128, 256]
            .iter()
            .map(|&n| {
                let g = build_grid(&Domain::unit_disk(), &[n, n]).unwrap();
                (g.total_volume() - std::f64::consts::PI).abs()
            })
            .collect();
        for w in errs.windows(2) {
            assert!(w[1] < w[0], "{errs:?}");
        }
    }

    #[test]
    fn boundary_normals_close_up() {
        for (domain, res) in [
            (Domain::interval(0.0, 1.0).unwrap(), vec![7]),
            (Domain::rectangle(&[0.0, -1.0], &[2.0, 1.0]).unwrap(), vec![9, 5]),
            (
                Domain::rectangle(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0]).unwrap(),
                vec![4, 5, 6],
            ),
        ] {
            let g = build_grid(&domain, &res).unwrap();
            let s = g.boundary_normal_sum();
            assert!(s.norm() <= 1e-10 * g.boundary_area(), "{s:?}");
        }
        for n in [16, 32, 64, 128] {
            let g = build_grid(&Domain::unit_disk(), &[n, n]).unwrap();
            let s = g.boundary_normal_sum();
            assert!(s.norm() <= 2.0 * g.h() * g.boundary_area(), "n={n} {s:?}");
        }
    }

    #[test]
    fn boundary_faces_point_outward() {
        for (domain, res) in [
            (Domain::interval(-1.0, 1.0).unwrap(), vec![5]),
            (Domain::rectangle(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), vec![6, 4]),
            (Domain::unit_disk(), vec![24, 24]),
            (Domain::disk([0.5, -0.25], 0.3).unwrap(), vec![17, 17]),
        ] {
            let g = build_grid(&domain, &res).unwrap();
            let eps = 1e-6 * domain.diameter();
            for f in g.boundary_faces() {
                assert!((f.normal.norm() - 1.0).abs() <= 1e-12);
                assert!(f.area > 0.0);
                assert!(f.cell_index < g.len());
                assert!(!domain.contains(&f.centroid.axpy(eps, &f.normal)));
                assert!(domain.contains(&f.centroid.axpy(-eps, &f.normal)));
            }
        }
    }

    #[test]
    fn membership_queries() {
        let unit = Domain::interval(0.0, 1.0).unwrap();
        assert!(contains(&unit, &Point::x(0.5)));
        assert!(!contains(&unit, &Point::x(1.0)));
        assert!(!contains(&unit, &Point::x(0.0)));
        assert!(unit.contains_closed(&Point::x(1.0), 0.0));
        let disk = Domain::unit_disk();
        assert!(!contains(&disk, &Point::xy(0.6, 0.8)));
        assert!(contains(&disk, &Point::xy(0.6, 0.79)));
        assert_eq!(disk.project(&Point::xy(0.0, 2.0)).as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            Domain::interval(1.0, 1.0),
            Err(GeometryError::InvalidExtent { .. })
        ));
        assert!(matches!(
            Domain::disk([0.0, 0.0], -1.0),
            Err(GeometryError::InvalidRadius(_))
        ));
        assert!(Domain::rectangle(&[0.0], &[1.0]).is_err());
        let d = Domain::interval(0.0, 1.0).unwrap();
        assert!(matches!(
            build_grid(&d, &[2]),
            Err(GeometryError::InvalidResolution(_))
        ));
        assert!(matches!(
            build_grid(&d, &[4, 4]),
            Err(GeometryError::ResolutionMismatch { .. })
        ));
    }

    #[test]
    fn every_disk_boundary_cell_is_active() {
        let g = build_grid(&Domain::unit_disk(), &[20, 20]).unwrap();
        let mask = g.interior_mask();
        assert_eq!(mask.iter().filter(|m| **m).count(), g.len());
        for f in g.boundary_faces() {
            assert!(!g.is_interior_cell(f.cell_index));
        }
    }
}
