//! Pointwise Hermitian matrix kernels for n <= 2.
//!
//! A 2x2 Hermitian matrix is stored as (d0, d1, re, im) for
//! [[d0, re+i*im], [re-i*im, d1]]; the 1x1 case is just d0.

use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Herm2 {
    pub d0: f64,
    pub d1: f64,
    pub re: f64,
    pub im: f64,
}

impl Herm2 {
    pub const ZERO: Herm2 = Herm2 { d0: 0.0, d1: 0.0, re: 0.0, im: 0.0 };
    pub const IDENTITY: Herm2 = Herm2 { d0: 1.0, d1: 1.0, re: 0.0, im: 0.0 };

    pub fn new(d0: f64, d1: f64, off: Complex64) -> Self {
        Herm2 { d0, d1, re: off.re, im: off.im }
    }

    pub fn diag(d0: f64, d1: f64) -> Self {
        Herm2 { d0, d1, re: 0.0, im: 0.0 }
    }

    pub fn off(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    pub fn det(&self) -> f64 {
        self.d0 * self.d1 - (self.re * self.re + self.im * self.im)
    }

    pub fn trace(&self) -> f64 {
        self.d0 + self.d1
    }

    /// Smaller eigenvalue, exact closed form.
    pub fn min_eig(&self) -> f64 {
        let half = 0.5 * (self.d0 + self.d1);
        let gap = 0.5 * (self.d0 - self.d1);
        half - (gap * gap + self.re * self.re + self.im * self.im).sqrt()
    }

    pub fn add(&self, o: &Herm2) -> Herm2 {
        Herm2 {
            d0: self.d0 + o.d0,
            d1: self.d1 + o.d1,
            re: self.re + o.re,
            im: self.im + o.im,
        }
    }

    pub fn scaled(&self, t: f64) -> Herm2 {
        Herm2 { d0: t * self.d0, d1: t * self.d1, re: t * self.re, im: t * self.im }
    }

    /// tr(self^{-1} m); self must be nonsingular.
    pub fn inv_trace_with(&self, m: &Herm2) -> f64 {
        let det = self.det();
        (self.d1 * m.d0 + self.d0 * m.d1 - 2.0 * (self.re * m.re + self.im * m.im)) / det
    }

    /// Symmetric bilinear wedge density of two Hermitian forms: the n=2 mixed
    /// discriminant, normalized so w(a, a) = det(a).
    pub fn wedge(&self, o: &Herm2) -> f64 {
        0.5 * (self.d0 * o.d1 + self.d1 * o.d0 - 2.0 * (self.re * o.re + self.im * o.im))
    }
}

/// Wedge density for possibly non-Hermitian 2x2 complex coefficient matrices:
/// (1/2)(a00 b11 + a11 b00 - a01 b10 - a10 b01). Real metrics pair with
/// complex second-derivative matrices through this form.
pub fn wedge_c(a: &[Complex64; 4], b: &[Complex64; 4]) -> Complex64 {
    0.5 * (a[0] * b[3] + a[3] * b[0] - a[1] * b[2] - a[2] * b[1])
}

/// Gauss-quadrature-free mixed discriminant by inclusion-exclusion
/// polarization over subsets; normalized so equal arguments give det.
/// Arity must equal the dimension (1 or 2).
pub fn mixed_discriminant_2(mats: &[Herm2; 2]) -> f64 {
    let sum = mats[0].add(&mats[1]);
    0.5 * (sum.det() - mats[0].det() - mats[1].det())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_eig_diag() {
        let h = Herm2::diag(3.0, 1.0);
        assert_eq!(h.min_eig(), 1.0);
    }

    #[test]
    fn inv_trace_identity() {
        let a = Herm2::IDENTITY;
        let m = Herm2::diag(2.0, 5.0);
        assert!((a.inv_trace_with(&m) - 7.0).abs() < 1e-15);
    }

    #[test]
    fn mixed_discriminant_polarization_example() {
        // D(diag(1,2), diag(3,1)) = (det(4,3) - det A - det B)/2 = (12-2-3)/2
        let d = mixed_discriminant_2(&[Herm2::diag(1.0, 2.0), Herm2::diag(3.0, 1.0)]);
        assert_eq!(d, 3.5);
    }

    #[test]
    fn wedge_reduces_to_det() {
        let a = Herm2::new(2.0, 3.0, Complex64::new(0.4, -0.7));
        assert!((a.wedge(&a) - a.det()).abs() < 1e-15);
        let b = Herm2::new(1.0, 0.5, Complex64::new(-0.2, 0.1));
        assert!((a.wedge(&b) - mixed_discriminant_2(&[a, b])).abs() < 1e-14);
    }
}
