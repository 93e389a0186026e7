//! Pixel grids: scalar, 2-vector and symmetric 2×2 tensor fields.
//!
//! All fields are stored row-major, one `Vec<f64>` per channel. The pixel at
//! column `c` and row `r` lives at index `r * width + c`. The `u` channel of a
//! [`VectorField`] is the horizontal (column) direction, `v` the vertical one.

use crate::error::{Error, Result};

/// Width and height of a pixel grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
}

impl Grid {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1, "grid must be at least 1x1");
        Self { width, height }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    /// Returns a dimension error unless `other` is the same grid.
    pub fn check(&self, other: Grid) -> Result<()> {
        if *self == other {
            Ok(())
        } else {
            Err(Error::Dimension {
                expected: (self.width, self.height),
                found: (other.width, other.height),
            })
        }
    }
}

/// A vector space of grid-valued quantities with a (possibly weighted)
/// Euclidean inner product.
///
/// Each channel carries a weight in the inner product; the `xy` channel of a
/// [`SymTensorField`] counts twice, everything else once.
pub trait GridVector: Clone {
    fn channels(&self) -> Vec<(&[f64], f64)>;
    fn channels_mut(&mut self) -> Vec<&mut [f64]>;

    fn dot(&self, other: &Self) -> f64 {
        let mut acc = 0.0;
        for ((a, w), (b, _)) in self.channels().into_iter().zip(other.channels()) {
            let s: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            acc += w * s;
        }
        acc
    }

    fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    fn scale(&mut self, factor: f64) {
        for ch in self.channels_mut() {
            ch.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// `self += factor * other`
    fn axpy(&mut self, factor: f64, other: &Self) {
        let src: Vec<Vec<f64>> = other.channels().into_iter().map(|(c, _)| c.to_vec()).collect();
        for (dst, s) in self.channels_mut().into_iter().zip(src) {
            dst.iter_mut().zip(s).for_each(|(d, s)| *d += factor * s);
        }
    }

    fn is_finite(&self) -> bool {
        self.channels().iter().all(|(c, _)| c.iter().all(|x| x.is_finite()))
    }
}

/// Euclidean distance between two grid vectors.
pub fn distance<T: GridVector>(a: &T, b: &T) -> f64 {
    let mut d = a.clone();
    d.axpy(-1.0, b);
    d.norm()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self { grid, data: vec![value; grid.len()] }
    }

    /// Builds a field from row-major data; fails when the length does not
    /// match the grid.
    pub fn from_vec(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::Dimension {
                expected: (grid.width, grid.height),
                found: (data.len(), 1),
            });
        }
        Ok(Self { grid, data })
    }

    /// Builds a field from nested rows (outer = rows).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        if height == 0 || width == 0 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::Config("rows must be non-empty and rectangular".into()));
        }
        Ok(Self { grid: Grid::new(width, height), data: rows.concat() })
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for r in 0..grid.height {
            for c in 0..grid.width {
                data.push(f(r, c));
            }
        }
        Self { grid, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.grid.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.grid.height
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[self.grid.index(row, col)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let i = self.grid.index(row, col);
        self.data[i] = value;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl GridVector for ScalarField {
    fn channels(&self) -> Vec<(&[f64], f64)> {
        vec![(&self.data, 1.0)]
    }
    fn channels_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.data]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: Grid,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, u: vec![0.0; grid.len()], v: vec![0.0; grid.len()] }
    }

    /// Per-pixel Euclidean magnitude.
    #[inline]
    pub fn magnitude(&self, i: usize) -> f64 {
        self.u[i].hypot(self.v[i])
    }
}

impl GridVector for VectorField {
    fn channels(&self) -> Vec<(&[f64], f64)> {
        vec![(&self.u, 1.0), (&self.v, 1.0)]
    }
    fn channels_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.u, &mut self.v]
    }
}

/// Symmetric 2×2 tensor per pixel; the off-diagonal entry is stored once.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensorField {
    pub grid: Grid,
    pub xx: Vec<f64>,
    pub yy: Vec<f64>,
    pub xy: Vec<f64>,
}

impl SymTensorField {
    pub fn zeros(grid: Grid) -> Self {
        let n = grid.len();
        Self { grid, xx: vec![0.0; n], yy: vec![0.0; n], xy: vec![0.0; n] }
    }

    /// Frobenius magnitude of the full 2×2 tensor at pixel `i`.
    #[inline]
    pub fn magnitude(&self, i: usize) -> f64 {
        (self.xx[i] * self.xx[i] + self.yy[i] * self.yy[i] + 2.0 * self.xy[i] * self.xy[i]).sqrt()
    }
}

impl GridVector for SymTensorField {
    fn channels(&self) -> Vec<(&[f64], f64)> {
        vec![(&self.xx, 1.0), (&self.yy, 1.0), (&self.xy, 2.0)]
    }
    fn channels_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.xx, &mut self.yy, &mut self.xy]
    }
}

impl<A: GridVector, B: GridVector> GridVector for (A, B) {
    fn channels(&self) -> Vec<(&[f64], f64)> {
        let mut c = self.0.channels();
        c.extend(self.1.channels());
        c
    }
    fn channels_mut(&mut self) -> Vec<&mut [f64]> {
        let mut c = self.0.channels_mut();
        c.extend(self.1.channels_mut());
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_inner_product_counts_off_diagonal_twice() {
        let g = Grid::new(1, 1);
        let mut t = SymTensorField::zeros(g);
        t.xy[0] = 1.0;
        assert_eq!(t.dot(&t), 2.0);
        assert_eq!(t.magnitude(0), 2f64.sqrt());
    }

    #[test]
    fn from_rows_rejects_ragged_input() {
        assert!(ScalarField::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        let f = ScalarField::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(f.get(1, 0), 3.0);
    }

    #[test]
    fn grid_check_reports_mismatch() {
        let a = Grid::new(2, 3);
        assert!(a.check(Grid::new(3, 2)).is_err());
        assert!(a.check(Grid::new(2, 3)).is_ok());
    }
}
