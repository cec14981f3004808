//! Periodic grids on the unit complex torus.
//!
//! The model manifold is the torus `C^n / (Z + iZ)^n` with `n` in {1, 2}.
//! A grid resolves each of the `2n` real axes `(x_1, y_1, ..., x_n, y_n)`
//! with `res` equispaced points, `res` a power of two, for `res^(2n)` points
//! total. Storage is row-major with the last axis contiguous; axis `2j`
//! carries `x_j = Re z_j` and axis `2j+1` carries `y_j = Im z_j`.

use crate::error::{CmaError, Result};
use serde::{Deserialize, Serialize};

pub const MIN_RES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    n: usize,
    res: usize,
}

impl GridSpec {
    pub fn new(n: usize, res: usize) -> Result<Self> {
        if n != 1 && n != 2 {
            return Err(CmaError::Grid(format!("complex dimension must be 1 or 2, got {n}")));
        }
        if res < MIN_RES || !res.is_power_of_two() {
            return Err(CmaError::Grid(format!(
                "res must be a power of two >= {MIN_RES}, got {res}"
            )));
        }
        Ok(GridSpec { n, res })
    }

    /// Complex dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Grid points per real axis.
    pub fn res(&self) -> usize {
        self.res
    }

    /// Number of real axes (2n).
    pub fn axes(&self) -> usize {
        2 * self.n
    }

    /// Total grid points, res^(2n).
    pub fn points(&self) -> usize {
        self.res.pow(self.axes() as u32)
    }

    /// Real-axis grid spacing.
    pub fn spacing(&self) -> f64 {
        1.0 / self.res as f64
    }

    /// Element stride of `axis` in the flat row-major layout.
    pub fn stride(&self, axis: usize) -> usize {
        self.res.pow((self.axes() - 1 - axis) as u32)
    }

    /// Real coordinates in [0,1)^{2n} of the flat index.
    pub fn coords(&self, mut idx: usize) -> [f64; 4] {
        let mut out = [0.0; 4];
        let h = self.spacing();
        for axis in (0..self.axes()).rev() {
            out[axis] = (idx % self.res) as f64 * h;
            idx /= self.res;
        }
        out
    }

    /// Shortest signed displacement t -> s on the unit circle, in (-1/2, 1/2].
    pub fn wrap(d: f64) -> f64 {
        let mut d = d - d.round();
        if d <= -0.5 {
            d += 1.0;
        }
        d
    }

    /// Squared torus distance between real coordinate tuples.
    pub fn dist2(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .take(self.axes())
            .map(|(x, y)| {
                let d = Self::wrap(x - y);
                d * d
            })
            .sum()
    }

    pub fn same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(CmaError::GridMismatch(
                format!("(n={}, res={})", self.n, self.res),
                format!("(n={}, res={})", other.n, other.res),
            ));
        }
        Ok(())
    }

    /// Grid refined by `factor` along every axis.
    pub fn refined(&self, factor: usize) -> Result<GridSpec> {
        GridSpec::new(self.n, self.res * factor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_dims() {
        assert!(GridSpec::new(3, 32).is_err());
        assert!(GridSpec::new(0, 32).is_err());
        assert!(GridSpec::new(1, 12).is_err());
        assert!(GridSpec::new(1, 4).is_err());
    }

    #[test]
    fn point_count_and_strides() {
        let g = GridSpec::new(2, 8).unwrap();
        assert_eq!(g.points(), 8usize.pow(4));
        assert_eq!(g.stride(3), 1);
        assert_eq!(g.stride(0), 512);
        let g1 = GridSpec::new(1, 16).unwrap();
        assert_eq!(g1.points(), 256);
    }

    #[test]
    fn coords_roundtrip() {
        let g = GridSpec::new(1, 8).unwrap();
        let c = g.coords(8 * 3 + 5);
        assert_eq!(c[0], 3.0 / 8.0);
        assert_eq!(c[1], 5.0 / 8.0);
    }

    #[test]
    fn torus_wrap_is_shortest() {
        assert_eq!(GridSpec::wrap(0.75), -0.25);
        assert_eq!(GridSpec::wrap(-0.75), 0.25);
        assert_eq!(GridSpec::wrap(0.5), 0.5);
    }
}
