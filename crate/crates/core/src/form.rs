//! Hermitian (1,1)-forms as coefficient-matrix fields.
//!
//! A `Form11` stores, at every grid point, the n x n Hermitian matrix
//! `a_{jk}` of the form `i sum a_{jk} dz_j dz_bar_k`. Storage is planar:
//! one `Vec<f64>` per independent real component (diagonals real; the n=2
//! off-diagonal split into real and imaginary parts), which keeps spectral
//! writes contiguous. Positivity is always validated, never assumed.

use crate::error::{CmaError, Result};
use crate::field::{min_of, ScalarField, TopDensity};
use crate::grid::GridSpec;
use crate::herm::Herm2;
use rayon::prelude::*;

pub const HERMITIAN_REL_TOL: f64 = 1e-12;
pub const SEMIPOSITIVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Form11 {
    grid: GridSpec,
    /// Diagonal a_00.
    pub(crate) d0: Vec<f64>,
    /// Diagonal a_11 (n = 2 only, empty otherwise).
    pub(crate) d1: Vec<f64>,
    /// Re a_01 (n = 2 only).
    pub(crate) re: Vec<f64>,
    /// Im a_01 (n = 2 only).
    pub(crate) im: Vec<f64>,
}

impl Form11 {
    pub fn zeros(grid: GridSpec) -> Self {
        let p = grid.points();
        match grid.n() {
            1 => Form11 { grid, d0: vec![0.0; p], d1: Vec::new(), re: Vec::new(), im: Vec::new() },
            _ => Form11 { grid, d0: vec![0.0; p], d1: vec![0.0; p], re: vec![0.0; p], im: vec![0.0; p] },
        }
    }

    /// Flat identity metric.
    pub fn flat(grid: GridSpec) -> Self {
        let mut f = Form11::zeros(grid);
        f.d0.iter_mut().for_each(|v| *v = 1.0);
        if grid.n() == 2 {
            f.d1.iter_mut().for_each(|v| *v = 1.0);
        }
        f
    }

    /// Pointwise construction from the coordinate tuple.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> Herm2 + Sync) -> Self {
        let mut out = Form11::zeros(grid);
        let n = grid.n();
        let axes = grid.axes();
        let d1_ptr = UnsafeSendPtr(out.d1.as_mut_ptr());
        let re_ptr = UnsafeSendPtr(out.re.as_mut_ptr());
        let im_ptr = UnsafeSendPtr(out.im.as_mut_ptr());
        out.d0
            .par_iter_mut()
            .with_min_len(1 << 12)
            .enumerate()
            .for_each(|(i, v0)| {
                let h = f(&grid.coords(i)[..axes]);
                *v0 = h.d0;
                if n == 2 {
                    unsafe {
                        d1_ptr.write(i, h.d1);
                        re_ptr.write(i, h.re);
                        im_ptr.write(i, h.im);
                    }
                }
            });
        out
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn at(&self, i: usize) -> Herm2 {
        if self.grid.n() == 1 {
            Herm2 { d0: self.d0[i], d1: 0.0, re: 0.0, im: 0.0 }
        } else {
            Herm2 { d0: self.d0[i], d1: self.d1[i], re: self.re[i], im: self.im[i] }
        }
    }

    pub fn set(&mut self, i: usize, h: Herm2) {
        self.d0[i] = h.d0;
        if self.grid.n() == 2 {
            self.d1[i] = h.d1;
            self.re[i] = h.re;
            self.im[i] = h.im;
        }
    }

    /// self += t * other
    pub fn add_scaled(&mut self, t: f64, other: &Form11) -> Result<()> {
        self.grid.same(&other.grid)?;
        crate::field::axpy(&mut self.d0, t, &other.d0);
        if self.grid.n() == 2 {
            crate::field::axpy(&mut self.d1, t, &other.d1);
            crate::field::axpy(&mut self.re, t, &other.re);
            crate::field::axpy(&mut self.im, t, &other.im);
        }
        Ok(())
    }

    pub fn sum(&self, other: &Form11) -> Result<Form11> {
        let mut out = self.clone();
        out.add_scaled(1.0, other)?;
        Ok(out)
    }

    pub fn scaled(&self, t: f64) -> Form11 {
        let mut out = self.clone();
        out.d0.iter_mut().for_each(|v| *v *= t);
        out.d1.iter_mut().for_each(|v| *v *= t);
        out.re.iter_mut().for_each(|v| *v *= t);
        out.im.iter_mut().for_each(|v| *v *= t);
        out
    }

    /// Pointwise minimum eigenvalue over the whole grid.
    pub fn min_eig(&self) -> f64 {
        if self.grid.n() == 1 {
            min_of(&self.d0)
        } else {
            let mut m = f64::INFINITY;
            for i in 0..self.d0.len() {
                let half = 0.5 * (self.d0[i] + self.d1[i]);
                let gap = 0.5 * (self.d0[i] - self.d1[i]);
                let e = half - (gap * gap + self.re[i] * self.re[i] + self.im[i] * self.im[i]).sqrt();
                if e < m {
                    m = e;
                }
            }
            m
        }
    }

    /// Minimum eigenvalue of `self + t * other` without forming the sum.
    pub fn min_eig_shifted(&self, t: f64, other: &Form11) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        if self.grid.n() == 1 {
            let mut m = f64::INFINITY;
            for i in 0..self.d0.len() {
                let v = self.d0[i] + t * other.d0[i];
                if v < m {
                    m = v;
                }
            }
            m
        } else {
            let mut m = f64::INFINITY;
            for i in 0..self.d0.len() {
                let d0 = self.d0[i] + t * other.d0[i];
                let d1 = self.d1[i] + t * other.d1[i];
                let re = self.re[i] + t * other.re[i];
                let im = self.im[i] + t * other.im[i];
                let half = 0.5 * (d0 + d1);
                let gap = 0.5 * (d0 - d1);
                let e = half - (gap * gap + re * re + im * im).sqrt();
                if e < m {
                    m = e;
                }
            }
            m
        }
    }

    /// Validate the semipositive flag: min eigenvalue >= -tol.
    pub fn validate_semipositive(&self, tol: f64) -> Result<f64> {
        let m = self.min_eig();
        if m < -tol {
            return Err(CmaError::NotPositive { min_eig: m, required: -tol });
        }
        Ok(m)
    }

    /// Validate the positive flag: min eigenvalue >= margin > 0.
    pub fn validate_positive(&self, margin: f64) -> Result<f64> {
        let m = self.min_eig();
        if m < margin {
            return Err(CmaError::NotPositive { min_eig: m, required: margin });
        }
        Ok(m)
    }

    /// Density of the top power: pointwise det of the coefficient matrix in
    /// the normalization where the flat identity metric has density 1.
    pub fn det_density(&self) -> TopDensity {
        let mut out = vec![0.0; self.d0.len()];
        if self.grid.n() == 1 {
            out.copy_from_slice(&self.d0);
        } else {
            out.par_iter_mut()
                .with_min_len(1 << 14)
                .enumerate()
                .for_each(|(i, v)| {
                    *v = self.d0[i] * self.d1[i] - (self.re[i] * self.re[i] + self.im[i] * self.im[i])
                });
        }
        TopDensity::from_values(self.grid, out).expect("length matches grid")
    }

    /// Pointwise log det into a scalar field; caller guarantees positivity.
    pub fn log_det(&self) -> ScalarField {
        let mut out = vec![0.0; self.d0.len()];
        if self.grid.n() == 1 {
            out.par_iter_mut()
                .with_min_len(1 << 14)
                .enumerate()
                .for_each(|(i, v)| *v = self.d0[i].ln());
        } else {
            out.par_iter_mut()
                .with_min_len(1 << 14)
                .enumerate()
                .for_each(|(i, v)| {
                    *v = (self.d0[i] * self.d1[i]
                        - (self.re[i] * self.re[i] + self.im[i] * self.im[i]))
                        .ln()
                });
        }
        ScalarField::from_values(self.grid, out).expect("length matches grid")
    }

    /// Mean coefficient matrix (order-fixed reduction).
    pub fn mean(&self) -> Herm2 {
        let len = self.d0.len() as f64;
        if self.grid.n() == 1 {
            Herm2 { d0: crate::field::pairwise_sum(&self.d0) / len, d1: 0.0, re: 0.0, im: 0.0 }
        } else {
            Herm2 {
                d0: crate::field::pairwise_sum(&self.d0) / len,
                d1: crate::field::pairwise_sum(&self.d1) / len,
                re: crate::field::pairwise_sum(&self.re) / len,
                im: crate::field::pairwise_sum(&self.im) / len,
            }
        }
    }

    /// Largest |coefficient| over the grid, a crude sup norm.
    pub fn sup_coeff(&self) -> f64 {
        let mut m = crate::field::sup_abs(&self.d0);
        if self.grid.n() == 2 {
            m = m
                .max(crate::field::sup_abs(&self.d1))
                .max(crate::field::sup_abs(&self.re))
                .max(crate::field::sup_abs(&self.im));
        }
        m
    }
}

struct UnsafeSendPtr<T>(*mut T);
unsafe impl<T> Send for UnsafeSendPtr<T> {}
unsafe impl<T> Sync for UnsafeSendPtr<T> {}

impl<T> UnsafeSendPtr<T> {
    /// Callers write disjoint indices only.
    unsafe fn write(&self, i: usize, v: T) {
        *self.0.add(i) = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_has_unit_density() {
        let g = GridSpec::new(2, 8).unwrap();
        let f = Form11::flat(g);
        let d = f.det_density();
        assert!(d.values().iter().all(|&v| v == 1.0));
        assert_eq!(d.integrate(), 1.0);
    }

    #[test]
    fn min_eig_shifted_matches_formed_sum() {
        let g = GridSpec::new(2, 8).unwrap();
        let a = Form11::from_fn(g, |c| {
            Herm2::new(2.0 + c[0], 1.5, num_complex::Complex64::new(0.2 * c[2], 0.1))
        });
        let b = Form11::from_fn(g, |c| {
            Herm2::new(-c[1], 0.3, num_complex::Complex64::new(0.05, -0.2 * c[3]))
        });
        let mut sum = a.clone();
        sum.add_scaled(0.7, &b).unwrap();
        assert!((a.min_eig_shifted(0.7, &b) - sum.min_eig()).abs() < 1e-13);
    }

    #[test]
    fn positivity_validation() {
        let g = GridSpec::new(1, 8).unwrap();
        let f = Form11::from_fn(g, |c| Herm2 { d0: c[0] - 0.4, d1: 0.0, re: 0.0, im: 0.0 });
        assert!(f.validate_semipositive(SEMIPOSITIVE_TOL).is_err());
        assert!(Form11::flat(g).validate_positive(0.5).is_ok());
    }
}
