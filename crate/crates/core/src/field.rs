//! Real-valued grid functions and top-degree densities.
//!
//! All reductions (sums, dot products) are order-fixed pairwise folds so that
//! results do not depend on the worker-thread count. `TopDensity` stores a
//! top-degree form as a real density against the reference volume, normalized
//! so the flat identity metric has total volume 1; its integral is the plain
//! mean of the density values.

use crate::error::{CmaError, Result};
use crate::grid::GridSpec;
use rayon::prelude::*;

const PAIRWISE_BASE: usize = 128;

/// Order-fixed pairwise sum; identical result for any thread count.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= PAIRWISE_BASE {
        let mut s = 0.0;
        for &x in v {
            s += x;
        }
        return s;
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Order-fixed pairwise dot product.
pub fn pairwise_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.len() <= PAIRWISE_BASE {
        let mut s = 0.0;
        for i in 0..a.len() {
            s += a[i] * b[i];
        }
        return s;
    }
    let mid = a.len() / 2;
    pairwise_dot(&a[..mid], &b[..mid]) + pairwise_dot(&a[mid..], &b[mid..])
}

pub fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

pub fn max_of(v: &[f64]) -> f64 {
    v.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x))
}

pub fn min_of(v: &[f64]) -> f64 {
    v.iter().fold(f64::INFINITY, |m, &x| m.min(x))
}

/// y += t * x
pub fn axpy(y: &mut [f64], t: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    y.par_iter_mut()
        .with_min_len(1 << 14)
        .zip(x.par_iter())
        .for_each(|(yi, &xi)| *yi += t * xi);
}

#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        ScalarField { grid, values: vec![0.0; grid.points()] }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        ScalarField { grid, values: vec![c; grid.points()] }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.points() {
            return Err(CmaError::Grid(format!(
                "value count {} does not match grid points {}",
                values.len(),
                grid.points()
            )));
        }
        Ok(ScalarField { grid, values })
    }

    /// Evaluate a coordinate function on every grid point.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64 + Sync) -> Self {
        let mut values = vec![0.0; grid.points()];
        values
            .par_iter_mut()
            .with_min_len(1 << 12)
            .enumerate()
            .for_each(|(i, v)| *v = f(&grid.coords(i)[..grid.axes()]));
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn assert_finite(&self) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(CmaError::Grid("field contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn sup(&self) -> f64 {
        max_of(&self.values)
    }

    pub fn inf(&self) -> f64 {
        min_of(&self.values)
    }

    pub fn sup_abs(&self) -> f64 {
        sup_abs(&self.values)
    }

    pub fn osc(&self) -> f64 {
        self.sup() - self.inf()
    }

    pub fn mean(&self) -> f64 {
        pairwise_sum(&self.values) / self.values.len() as f64
    }

    pub fn shift(&mut self, c: f64) {
        self.values.iter_mut().for_each(|v| *v += c);
    }

    pub fn scale(&mut self, c: f64) {
        self.values.iter_mut().for_each(|v| *v *= c);
    }

    /// Normalize so sup = 0.
    pub fn normalize_sup(&mut self) {
        let m = self.sup();
        self.shift(-m);
    }

    pub fn add_scaled(&mut self, t: f64, other: &ScalarField) -> Result<()> {
        self.grid.same(&other.grid)?;
        axpy(&mut self.values, t, &other.values);
        Ok(())
    }

    pub fn sup_abs_diff(&self, other: &ScalarField) -> Result<f64> {
        self.grid.same(&other.grid)?;
        let m = self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        Ok(m)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> ScalarField {
        let mut out = self.clone();
        out.values.par_iter_mut().with_min_len(1 << 14).for_each(|v| *v = f(*v));
        out
    }
}

/// Top-degree form as a density against the normalized reference volume.
#[derive(Debug, Clone)]
pub struct TopDensity {
    grid: GridSpec,
    density: Vec<f64>,
}

impl TopDensity {
    pub fn from_values(grid: GridSpec, density: Vec<f64>) -> Result<Self> {
        if density.len() != grid.points() {
            return Err(CmaError::Grid(format!(
                "density count {} does not match grid points {}",
                density.len(),
                grid.points()
            )));
        }
        Ok(TopDensity { grid, density })
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        TopDensity { grid, density: vec![c; grid.points()] }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64 + Sync) -> Self {
        let s = ScalarField::from_fn(grid, f);
        TopDensity { grid, density: s.into_values() }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.density
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.density
    }

    /// Total mass: the reference measure has unit mass, so this is the mean.
    pub fn integrate(&self) -> f64 {
        pairwise_sum(&self.density) / self.density.len() as f64
    }

    pub fn min(&self) -> f64 {
        min_of(&self.density)
    }

    /// Check the density represents a positive measure (>= -tol pointwise).
    pub fn assert_positive_measure(&self, tol: f64) -> Result<()> {
        let m = self.min();
        if m < -tol {
            return Err(CmaError::Rhs(format!(
                "density has negative values: min {m:.3e} < -{tol:.1e}"
            )));
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        self.density.iter_mut().for_each(|v| *v *= c);
    }

    pub fn into_scalar(self) -> ScalarField {
        ScalarField { grid: self.grid, values: self.density }
    }

    pub fn as_scalar(&self) -> ScalarField {
        ScalarField { grid: self.grid, values: self.density.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64) * 0.1 - 3.0).collect();
        let naive: f64 = v.iter().sum();
        assert!((pairwise_sum(&v) - naive).abs() < 1e-9);
    }

    #[test]
    fn integrate_constant_is_one() {
        let g = GridSpec::new(1, 16).unwrap();
        let d = TopDensity::constant(g, 1.0);
        assert_eq!(d.integrate(), 1.0);
    }

    #[test]
    fn integrate_mean_of_oscillation() {
        let g = GridSpec::new(1, 16).unwrap();
        let d = TopDensity::from_fn(g, |c| 1.0 + (2.0 * std::f64::consts::PI * c[0]).cos());
        assert!((d.integrate() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn grid_mismatch_rejected() {
        let a = ScalarField::zeros(GridSpec::new(1, 16).unwrap());
        let mut b = ScalarField::zeros(GridSpec::new(1, 32).unwrap());
        assert!(b.add_scaled(1.0, &a).is_err());
    }
}
