//! Named metric and right-hand-side builders used by the CLI and tests.
//!
//! All builders produce band-limited coefficient fields (modes <= 2), so
//! products of a few of them stay alias-free on any supported grid.

use crate::error::{CmaError, Result};
use crate::field::TopDensity;
use crate::form::Form11;
use crate::grid::GridSpec;
use crate::herm::Herm2;
use std::f64::consts::TAU;

/// Flat identity metric; closed, Kaehler.
pub fn flat(grid: GridSpec) -> Form11 {
    Form11::flat(grid)
}

/// Positive Hermitian metric with variable diagonal coefficients.
///
/// For n = 2 each diagonal entry is perturbed by the *other* complex
/// coordinate, which makes the metric non-closed and non-pluriclosed
/// (a diagonal entry depending only on its own coordinate drops out of
/// both d omega and ddc omega on the torus). A small off-diagonal term is
/// included so the matrix field is not diagonal.
pub fn perturbed_diagonal(grid: GridSpec, amplitude: f64) -> Result<Form11> {
    if !(0.0..0.8).contains(&amplitude) {
        return Err(CmaError::Config(format!(
            "perturbed-diagonal amplitude must be in [0, 0.8), got {amplitude}"
        )));
    }
    let form = if grid.n() == 1 {
        Form11::from_fn(grid, |c| Herm2 {
            d0: 1.0 + amplitude * (TAU * c[0]).cos() + 0.5 * amplitude * (TAU * c[1]).sin(),
            d1: 0.0,
            re: 0.0,
            im: 0.0,
        })
    } else {
        Form11::from_fn(grid, |c| Herm2 {
            d0: 1.0 + amplitude * (TAU * c[2]).cos(),
            d1: 1.0 + amplitude * (TAU * c[1]).sin(),
            re: 0.25 * amplitude * (TAU * (c[0] + c[3])).cos(),
            im: 0.25 * amplitude * (TAU * c[3]).sin(),
        })
    };
    form.validate_positive(1e-6)?;
    Ok(form)
}

/// Closed semipositive form degenerating along `x_0 = 0`, with positive
/// total mass: diag(1 - cos(2 pi x_0), 1, ...). Each diagonal entry depends
/// only on its own complex coordinate, so the form is closed on the torus.
pub fn degenerate_beta(grid: GridSpec) -> Form11 {
    if grid.n() == 1 {
        Form11::from_fn(grid, |c| Herm2 { d0: 1.0 - (TAU * c[0]).cos(), d1: 0.0, re: 0.0, im: 0.0 })
    } else {
        Form11::from_fn(grid, |c| Herm2::diag(1.0 - (TAU * c[0]).cos(), 1.0))
    }
}

/// Closed positive Kaehler metric with non-constant coefficients:
/// flat + ddc of a fixed band-limited potential, kept positive.
pub fn kaehler_perturbed(grid: GridSpec, spectral: &crate::Spectral, amplitude: f64) -> Result<Form11> {
    let phi = crate::field::ScalarField::from_fn(grid, |c| {
        let mut v = (TAU * c[0]).cos();
        if grid.n() == 2 {
            v += 0.7 * (TAU * (c[2] + c[3])).sin();
        } else {
            v += 0.7 * (TAU * (c[0] + c[1])).sin();
        }
        amplitude * v / (TAU * TAU)
    });
    let mut form = spectral.ddc(&phi)?;
    form.add_scaled(1.0, &Form11::flat(grid))?;
    form.validate_positive(1e-6)?;
    Ok(form)
}

// ----------------------------------------------------------------------
// Right-hand sides: the function multiplying omega^n
// ----------------------------------------------------------------------

/// f identically `value`.
pub fn rhs_constant(grid: GridSpec, value: f64) -> Result<TopDensity> {
    if value < 0.0 {
        return Err(CmaError::Rhs(format!("constant rhs must be >= 0, got {value}")));
    }
    Ok(TopDensity::constant(grid, value))
}

/// Positive localized bump on a constant floor; band-limited (modes <= 2).
pub fn rhs_bump(grid: GridSpec, floor: f64, height: f64, center: &[f64]) -> Result<TopDensity> {
    if floor <= 0.0 || height < 0.0 {
        return Err(CmaError::Rhs("bump rhs needs floor > 0 and height >= 0".into()));
    }
    let center = center.to_vec();
    Ok(TopDensity::from_fn(grid, move |c| {
        let mut b = 1.0;
        for a in 0..grid.axes() {
            let d = c[a] - center.get(a).copied().unwrap_or(0.5);
            b *= 0.5 * (1.0 + (TAU * d).cos());
        }
        floor + height * b * b
    }))
}

/// Nonnegative density vanishing on the slice x_0 = 0 (a genuinely
/// degenerate right-hand side with positive mass).
pub fn rhs_vanishing(grid: GridSpec, scale: f64) -> Result<TopDensity> {
    if scale <= 0.0 {
        return Err(CmaError::Rhs("vanishing rhs needs scale > 0".into()));
    }
    Ok(TopDensity::from_fn(grid, move |c| {
        let s = 0.5 * (1.0 - (TAU * c[0]).cos());
        scale * s * s
    }))
}

/// Scale f so that `integral of f omega^n` equals `integral of omega^n`.
pub fn normalize_mass(f: &mut TopDensity, omega: &Form11) -> Result<f64> {
    f.grid().same(&omega.grid())?;
    let vol = omega.det_density();
    let target = vol.integrate();
    let current = crate::field::pairwise_dot(f.values(), vol.values()) / vol.values().len() as f64;
    if current <= 0.0 {
        return Err(CmaError::Rhs("cannot normalize a zero-mass rhs".into()));
    }
    let s = target / current;
    f.scale(s);
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ma;
    use crate::Spectral;

    #[test]
    fn perturbed_diagonal_is_positive_and_nonclosed() {
        let grid = GridSpec::new(2, 16).unwrap();
        let sp = Spectral::new(grid);
        let w = perturbed_diagonal(grid, 0.2).unwrap();
        assert!(w.min_eig() > 0.5);
        let rep = ma::curvature_constant(&sp, &w).unwrap();
        assert!(rep.b > 1e-3, "expected genuine torsion, B = {}", rep.b);
    }

    #[test]
    fn degenerate_beta_is_closed_semipositive_with_mass() {
        let grid = GridSpec::new(2, 16).unwrap();
        let sp = Spectral::new(grid);
        let beta = degenerate_beta(grid);
        assert!(beta.validate_semipositive(1e-12).is_ok());
        assert!(beta.min_eig().abs() < 1e-12, "degenerate somewhere");
        assert!(beta.det_density().integrate() > 0.5);
        let d = sp.form_ddc_density(&beta).unwrap();
        assert!(crate::field::sup_abs(d.values()) < 1e-10);
    }

    #[test]
    fn normalize_mass_hits_target() {
        let grid = GridSpec::new(1, 16).unwrap();
        let w = perturbed_diagonal(grid, 0.3).unwrap();
        let mut f = rhs_bump(grid, 0.5, 2.0, &[0.25, 0.5]).unwrap();
        normalize_mass(&mut f, &w).unwrap();
        let vol = w.det_density();
        let mass = crate::field::pairwise_dot(f.values(), vol.values()) / grid.points() as f64;
        assert!((mass - vol.integrate()).abs() < 1e-12);
    }
}
