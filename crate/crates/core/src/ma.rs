//! Monge-Ampere densities, mixed products, curvature constants, traces,
//! and the Gauduchon conformal factor.
//!
//! Pointwise a wedge of n Hermitian (1,1)-forms is the normalized mixed
//! discriminant of their coefficient matrices (equal arguments give det),
//! evaluated here by inclusion-exclusion polarization, which is exact and
//! cheap for n <= 2.

use crate::error::{CmaError, Result};
use crate::field::{pairwise_sum, sup_abs, ScalarField, TopDensity};
use crate::form::Form11;

use crate::spectral::Spectral;
use rayon::prelude::*;
use serde::Serialize;

/// Pointwise tolerance for validating semipositivity of inputs.
pub const SEMIPOS_TOL: f64 = 1e-10;
/// ma_density refuses below this eigenvalue.
pub const MA_DENSITY_FLOOR: f64 = -1e-8;

/// Density of `(omega + ddc(phi))^n` together with the pointwise positivity
/// margin. Refuses when the min eigenvalue drops below -1e-8 and reports how
/// many points are negative.
pub fn ma_density(sp: &Spectral, omega: &Form11, phi: &ScalarField) -> Result<(TopDensity, f64)> {
    omega.grid().same(&phi.grid())?;
    let mut a = sp.ddc(phi)?;
    a.add_scaled(1.0, omega)?;
    let margin = a.min_eig();
    if margin < MA_DENSITY_FLOOR {
        let bad = count_negative(&a);
        return Err(CmaError::Rhs(format!(
            "omega + ddc(phi) has min eigenvalue {margin:.3e} at {bad} points (floor {MA_DENSITY_FLOOR:.1e})"
        )));
    }
    Ok((a.det_density(), margin))
}

fn count_negative(a: &Form11) -> usize {
    let mut bad = 0;
    for i in 0..a.grid().points() {
        if a.at(i).min_eig() < MA_DENSITY_FLOOR {
            bad += 1;
        }
    }
    bad
}

/// Pointwise wedge density of exactly `n` semipositive forms via polarization
/// of det; symmetric in its arguments and equal to `det_density` when all
/// arguments coincide.
pub fn mixed_density(forms: &[&Form11]) -> Result<TopDensity> {
    if forms.is_empty() {
        return Err(CmaError::Diagnostic("mixed_density needs at least one form".into()));
    }
    let grid = forms[0].grid();
    let n = grid.n();
    if forms.len() != n {
        return Err(CmaError::Diagnostic(format!(
            "mixed_density arity {} does not match dimension {n}",
            forms.len()
        )));
    }
    for f in forms {
        grid.same(&f.grid())?;
        f.validate_semipositive(SEMIPOS_TOL)?;
    }
    Ok(mixed_density_unchecked(forms))
}

pub(crate) fn mixed_density_unchecked(forms: &[&Form11]) -> TopDensity {
    let grid = forms[0].grid();
    if grid.n() == 1 {
        return forms[0].det_density();
    }
    let (a, b) = (forms[0], forms[1]);
    wedge_density(a, b)
}

/// n = 2 bilinear wedge density of two forms (no positivity requirements);
/// used both for mixed products and for transpose applications.
pub fn wedge_density(a: &Form11, b: &Form11) -> TopDensity {
    let grid = a.grid();
    debug_assert_eq!(grid.n(), 2);
    let mut out = vec![0.0; grid.points()];
    out.par_iter_mut()
        .with_min_len(1 << 14)
        .enumerate()
        .for_each(|(i, o)| {
            *o = 0.5
                * (a.d0[i] * b.d1[i] + a.d1[i] * b.d0[i]
                    - 2.0 * (a.re[i] * b.re[i] + a.im[i] * b.im[i]));
        });
    TopDensity::from_values(grid, out).expect("length matches grid")
}

/// Pointwise trace of `g^{-1} tau`; `g` must be positive (singular rejected).
pub fn trace(g: &Form11, tau: &Form11) -> Result<ScalarField> {
    g.grid().same(&tau.grid())?;
    g.validate_positive(1e-12)?;
    let grid = g.grid();
    let mut out = vec![0.0; grid.points()];
    if grid.n() == 1 {
        out.par_iter_mut()
            .with_min_len(1 << 14)
            .enumerate()
            .for_each(|(i, o)| *o = tau.d0[i] / g.d0[i]);
    } else {
        out.par_iter_mut()
            .with_min_len(1 << 14)
            .enumerate()
            .for_each(|(i, o)| *o = g.at(i).inv_trace_with(&tau.at(i)));
    }
    ScalarField::from_values(grid, out)
}

/// Density of `2n * ddc(omega)`, a top form when n = 2. The degree-6 clause
/// `4 n^2 d omega ^ dc omega` vanishes identically in dimension 2 and is not
/// represented. Rejects n != 2.
pub fn torsion_top(sp: &Spectral, omega: &Form11) -> Result<TopDensity> {
    let n = omega.grid().n();
    if n != 2 {
        return Err(CmaError::Dimension { required: 2, got: n });
    }
    let mut d = sp.form_ddc_density(omega)?;
    d.scale(2.0 * n as f64);
    Ok(d)
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvatureReport {
    /// Smallest constant with -B omega^2 <= 2n ddc(omega) <= B omega^2
    /// pointwise on the grid.
    pub b: f64,
    /// Flat index of the maximizing grid point.
    pub argmax: usize,
    /// The degree-6 torsion clause, identically zero for n = 2.
    pub d_omega_clause_zero: bool,
}

/// Curvature constant of a positive Hermitian metric, n = 2.
pub fn curvature_constant(sp: &Spectral, omega: &Form11) -> Result<CurvatureReport> {
    omega.validate_positive(1e-12)?;
    curvature_constant_rel(sp, omega, omega)
}

/// Curvature constant of `omega` measured against a reference metric:
/// sup |density(2n ddc omega)| / density(omega_ref^2).
pub fn curvature_constant_rel(
    sp: &Spectral,
    omega: &Form11,
    omega_ref: &Form11,
) -> Result<CurvatureReport> {
    omega.grid().same(&omega_ref.grid())?;
    omega_ref.validate_positive(1e-12)?;
    let tors = torsion_top(sp, omega)?;
    let vol = omega_ref.det_density();
    let mut b = 0.0;
    let mut argmax = 0;
    for (i, (&t, &v)) in tors.values().iter().zip(vol.values()).enumerate() {
        let r = t.abs() / v;
        if r > b {
            b = r;
            argmax = i;
        }
    }
    Ok(CurvatureReport { b, argmax, d_omega_clause_zero: true })
}

// ----------------------------------------------------------------------
// Gauduchon conformal factor
// ----------------------------------------------------------------------

pub const GAUDUCHON_CG_TOL: f64 = 1e-13;
pub const GAUDUCHON_CG_MAX: usize = 600;
const KERNEL_COLLINEARITY_TOL: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GauduchonResult {
    /// Log of the conformal factor; `e^G omega^{n-1}` is ddc-closed.
    pub g: ScalarField,
    /// Sup norm of the density of `ddc(e^G omega^{n-1})` after the solve.
    pub residual: f64,
    /// Relative residual against sup density(omega^n).
    pub residual_rel: f64,
    /// Collinearity defect of a second projected seed; small means the
    /// discrete kernel is one-dimensional as expected.
    pub kernel_defect: f64,
    pub iterations: usize,
}

/// Conformal weight u > 0 with `ddc(u omega^{n-1}) = 0`, returned as
/// G = log u, normalized so that the mean of `e^G omega^n` equals the mean
/// of `omega^n`. For n = 1 the weight is trivial and G = 0 exactly.
///
/// The weight is the kernel direction of the linear map
/// `L u = density(ddc(u omega))` (n = 2). Since every Hessian-entry symbol
/// is even, the transpose of L under the grid mean pairing is
/// `Lt v = wedge_density(omega, ddc v)`, and the kernel is computed by
/// projecting a seed onto ker(Lt L) with a preconditioned CG solve; the
/// kernel dimension is checked with a second, independent seed.
pub fn gauduchon(sp: &Spectral, omega: &Form11) -> Result<GauduchonResult> {
    let grid = omega.grid();
    omega.validate_positive(1e-12)?;
    if grid.n() == 1 {
        return Ok(GauduchonResult {
            g: ScalarField::zeros(grid),
            residual: 0.0,
            residual_rel: 0.0,
            kernel_defect: 0.0,
            iterations: 0,
        });
    }

    let vol_sup = sup_abs(omega.det_density().values()).max(f64::MIN_POSITIVE);
    let mut history = Vec::new();

    // seed 1: the flat weight
    let ones = vec![1.0; grid.points()];
    let (u, it1) = kernel_project(sp, omega, &ones, &mut history)?;
    let mut u = u;

    // sign and positivity of the kernel vector
    if pairwise_sum(&u) < 0.0 {
        u.iter_mut().for_each(|v| *v = -*v);
    }
    let (umin, umax) = (crate::field::min_of(&u), crate::field::max_of(&u));
    if umin <= 1e-10 * umax.abs() {
        return Err(CmaError::KernelIteration {
            msg: format!("kernel vector is not positive: min {umin:.3e}, max {umax:.3e}"),
            history,
        });
    }

    // seed 2: a generic field; its kernel projection must be collinear with u
    let w0: Vec<f64> = (0..grid.points())
        .map(|i| {
            let c = grid.coords(i);
            1.0 + 0.37 * (std::f64::consts::TAU * c[0]).cos()
                + 0.21 * (std::f64::consts::TAU * (c[1] + c[2])).sin()
        })
        .collect();
    let (w, it2) = kernel_project(sp, omega, &w0, &mut history)?;
    let uu = crate::field::pairwise_dot(&u, &u);
    let uw = crate::field::pairwise_dot(&u, &w);
    let ww = crate::field::pairwise_dot(&w, &w);
    let defect = (ww - uw * uw / uu).max(0.0).sqrt() / ww.sqrt().max(f64::MIN_POSITIVE);
    if defect > KERNEL_COLLINEARITY_TOL {
        return Err(CmaError::KernelIteration {
            msg: format!("discrete kernel not one-dimensional: collinearity defect {defect:.3e}"),
            history,
        });
    }

    // normalize: mean(u * det omega) = mean(det omega)
    let vol = omega.det_density();
    let total = pairwise_sum(vol.values());
    let weighted = crate::field::pairwise_dot(&u, vol.values());
    let scale = total / weighted;
    u.iter_mut().for_each(|v| *v *= scale);

    let residual = sup_abs(apply_l(sp, omega, &u).values());
    let g = ScalarField::from_values(grid, u.iter().map(|v| v.ln()).collect())?;
    Ok(GauduchonResult {
        g,
        residual,
        residual_rel: residual / vol_sup,
        kernel_defect: defect,
        iterations: it1 + it2,
    })
}

/// L u = density(ddc(u omega)).
fn apply_l(sp: &Spectral, omega: &Form11, u: &[f64]) -> TopDensity {
    let mut scaled = omega.clone();
    scaled.d0.par_iter_mut().with_min_len(1 << 14).enumerate().for_each(|(i, v)| *v *= u[i]);
    scaled.d1.par_iter_mut().with_min_len(1 << 14).enumerate().for_each(|(i, v)| *v *= u[i]);
    scaled.re.par_iter_mut().with_min_len(1 << 14).enumerate().for_each(|(i, v)| *v *= u[i]);
    scaled.im.par_iter_mut().with_min_len(1 << 14).enumerate().for_each(|(i, v)| *v *= u[i]);
    sp.form_ddc_density(&scaled).expect("n = 2 checked by caller")
}

/// Lt v = wedge_density(omega, ddc v).
fn apply_lt(sp: &Spectral, omega: &Form11, v: &[f64]) -> ScalarField {
    let grid = omega.grid();
    let vf = ScalarField::from_values(grid, v.to_vec()).expect("length");
    let h = sp.ddc(&vf).expect("grid matches");
    wedge_density(omega, &h).into_scalar()
}

/// Project `seed` onto ker(Lt L): solve (Lt L) d = (Lt L) seed by CG and
/// return seed - d. Returns the CG iteration count.
fn kernel_project(
    sp: &Spectral,
    omega: &Form11,
    seed: &[f64],
    history: &mut Vec<f64>,
) -> Result<(Vec<f64>, usize)> {
    let grid = omega.grid();
    let len = grid.points();
    let abar = omega.mean();

    let apply_n = |x: &[f64]| -> Vec<f64> {
        let lu = apply_l(sp, omega, x);
        apply_lt(sp, omega, lu.values()).into_values()
    };

    let b = apply_n(seed);
    let bnorm = crate::field::pairwise_dot(&b, &b).sqrt();
    if bnorm == 0.0 {
        return Ok((seed.to_vec(), 0));
    }

    // preconditioner: constant-coefficient normal operator in Fourier space
    let precond = |r: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; len];
        sp.gauduchon_precond(r, &abar, &mut out);
        out
    };

    let mut x = vec![0.0; len];
    let mut r = b.clone();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = crate::field::pairwise_dot(&r, &z);
    let mut iters = 0;
    for _ in 0..GAUDUCHON_CG_MAX {
        let rnorm = crate::field::pairwise_dot(&r, &r).sqrt();
        history.push(rnorm / bnorm);
        if rnorm <= GAUDUCHON_CG_TOL * bnorm {
            break;
        }
        let ap = apply_n(&p);
        let pap = crate::field::pairwise_dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..len {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        z = precond(&r);
        let rz_new = crate::field::pairwise_dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..len {
            p[i] = z[i] + beta * p[i];
        }
        iters += 1;
    }
    let rnorm = crate::field::pairwise_dot(&r, &r).sqrt();
    if rnorm > 1e-6 * bnorm {
        return Err(CmaError::KernelIteration {
            msg: format!("CG stalled at relative residual {:.3e}", rnorm / bnorm),
            history: history.clone(),
        });
    }
    let mut out = seed.to_vec();
    for i in 0..len {
        out[i] -= x[i];
    }
    Ok((out, iters))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders;
    use crate::grid::GridSpec;
    use crate::herm::Herm2;

    #[test]
    fn flat_density_is_one() {
        let grid = GridSpec::new(2, 8).unwrap();
        let sp = Spectral::new(grid);
        let flat = Form11::flat(grid);
        let (d, margin) = ma_density(&sp, &flat, &ScalarField::zeros(grid)).unwrap();
        assert!(d.values().iter().all(|&v| (v - 1.0).abs() < 1e-14));
        assert!((margin - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ma_density_n1_matches_linear_formula() {
        // n = 1: det(1 + H(phi)) = 1 + H(phi)
        let grid = GridSpec::new(1, 32).unwrap();
        let sp = Spectral::new(grid);
        let flat = Form11::flat(grid);
        let phi = ScalarField::from_fn(grid, |c| 0.02 * (std::f64::consts::TAU * c[0]).cos());
        let h = sp.ddc(&phi).unwrap();
        let (d, _) = ma_density(&sp, &flat, &phi).unwrap();
        for i in 0..grid.points() {
            assert!((d.values()[i] - (1.0 + h.d0[i])).abs() < 1e-13);
        }
    }

    #[test]
    fn mixed_density_symmetry_bit_identical() {
        let grid = GridSpec::new(2, 8).unwrap();
        let a = builders::perturbed_diagonal(grid, 0.2).unwrap();
        let b = Form11::flat(grid).scaled(1.5);
        let ab = mixed_density(&[&a, &b]).unwrap();
        let ba = mixed_density(&[&b, &a]).unwrap();
        assert_eq!(ab.values(), ba.values());
    }

    #[test]
    fn mixed_density_wrong_arity() {
        let grid = GridSpec::new(2, 8).unwrap();
        let a = Form11::flat(grid);
        assert!(mixed_density(&[&a]).is_err());
    }

    #[test]
    fn trace_of_itself_is_n() {
        let grid = GridSpec::new(2, 8).unwrap();
        let g = builders::perturbed_diagonal(grid, 0.2).unwrap();
        let t = trace(&g, &g).unwrap();
        assert!(t.values().iter().all(|&v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn trace_identity_diag() {
        let grid = GridSpec::new(2, 8).unwrap();
        let g = Form11::flat(grid);
        let tau = Form11::from_fn(grid, |_| Herm2::diag(0.7, 2.3));
        let t = trace(&g, &tau).unwrap();
        assert!(t.values().iter().all(|&v| (v - 3.0).abs() < 1e-13));
    }

    #[test]
    fn flat_curvature_is_zero() {
        let grid = GridSpec::new(2, 8).unwrap();
        let sp = Spectral::new(grid);
        let rep = curvature_constant(&sp, &Form11::flat(grid)).unwrap();
        assert!(rep.b < 1e-13);
    }

    #[test]
    fn kaehler_perturbation_has_zero_torsion() {
        // omega = flat + ddc(phi) is closed, so ddc(omega) = ddc ddc phi = 0
        let grid = GridSpec::new(2, 8).unwrap();
        let sp = Spectral::new(grid);
        let phi = ScalarField::from_fn(grid, |c| {
            0.02 * (std::f64::consts::TAU * c[0]).cos()
                + 0.01 * (std::f64::consts::TAU * (c[2] + c[3])).sin()
        });
        let mut omega = sp.ddc(&phi).unwrap();
        omega.add_scaled(1.0, &Form11::flat(grid)).unwrap();
        let t = torsion_top(&sp, &omega).unwrap();
        assert!(sup_abs(t.values()) < 1e-12);
    }

    #[test]
    fn gauduchon_trivial_for_n1() {
        let grid = GridSpec::new(1, 16).unwrap();
        let sp = Spectral::new(grid);
        let res = gauduchon(&sp, &Form11::flat(grid)).unwrap();
        assert_eq!(res.residual, 0.0);
        assert!(res.g.sup_abs() == 0.0);
    }

    #[test]
    fn gauduchon_flat_n2_is_zero() {
        let grid = GridSpec::new(2, 8).unwrap();
        let sp = Spectral::new(grid);
        let res = gauduchon(&sp, &Form11::flat(grid)).unwrap();
        assert!(res.g.sup_abs() < 1e-10, "G sup {}", res.g.sup_abs());
        assert!(res.residual < 1e-10);
    }
}
