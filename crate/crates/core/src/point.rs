//! Small fixed-capacity points and vectors in R^d, d ≤ 3.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

/// Largest spatial dimension supported by the simulator.
pub const MAX_DIM: usize = 3;

/// A point (or vector) in R^d with d ≤ [`MAX_DIM`].
///
/// Unused trailing coordinates are kept at zero so that arithmetic and
/// norms never need to consult the dimension.
#[derive(Clone, Copy, PartialEq, Default)]
pub struct Point {
    coords: [f64; MAX_DIM],
    dim: usize,
}

impl Point {
    /// Panics if `coords` is empty or longer than [`MAX_DIM`].
    pub fn new(coords: &[f64]) -> Self {
        assert!(
            !coords.is_empty() && coords.len() <= MAX_DIM,
            "point dimension must be in 1..={MAX_DIM}, got {}",
            coords.len()
        );
        let mut c = [0.0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Point {
            coords: c,
            dim: coords.len(),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim));
        Point {
            coords: [0.0; MAX_DIM],
            dim,
        }
    }

    pub fn x(x: f64) -> Self {
        Point::new(&[x])
    }

    pub fn xy(x: f64, y: f64) -> Self {
        Point::new(&[x, y])
    }

    /// Unit vector along `axis`.
    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut p = Point::zeros(dim);
        p.coords[axis] = 1.0;
        p
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.coords[..self.dim]
    }

    #[inline]
    pub fn dot(&self, other: &Point) -> f64 {
        self.coords
            .iter()
            .zip(other.coords.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|c| c.is_finite())
    }

    /// `self + s * other`
    #[inline]
    pub fn axpy(&self, s: f64, other: &Point) -> Point {
        let mut out = *self;
        for k in 0..MAX_DIM {
            out.coords[k] += s * other.coords[k];
        }
        out
    }
}

impl Index<usize> for Point {
    type Output = f64;
    #[inline]
    fn index(&self, i: usize) -> &f64 {
        &self.as_slice()[i]
    }
}

impl IndexMut<usize> for Point {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.coords[..self.dim][i]
    }
}

impl Add for Point {
    type Output = Point;
    #[inline]
    fn add(self, rhs: Point) -> Point {
        self.axpy(1.0, &rhs)
    }
}

impl Sub for Point {
    type Output = Point;
    #[inline]
    fn sub(self, rhs: Point) -> Point {
        self.axpy(-1.0, &rhs)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    #[inline]
    fn mul(mut self, s: f64) -> Point {
        for c in self.coords.iter_mut() {
            *c *= s;
        }
        self
    }
}

impl Neg for Point {
    type Output = Point;
    #[inline]
    fn neg(self) -> Point {
        self * -1.0
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.as_slice()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_respects_dimension() {
        let a = Point::xy(1.0, 2.0);
        let b = Point::xy(0.5, -1.0);
        assert_eq!((a + b).as_slice(), &[1.5, 1.0]);
        assert_eq!((a - b).as_slice(), &[0.5, 3.0]);
        assert_eq!((a * 2.0).as_slice(), &[2.0, 4.0]);
        assert_eq!(a.dot(&b), -1.5);
        assert_eq!(Point::xy(3.0, 4.0).norm(), 5.0);
    }

    #[test]
    #[should_panic]
    fn rejects_four_dimensions() {
        Point::new(&[0.0; 4]);
    }
}
