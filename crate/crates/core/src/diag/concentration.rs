//! Mass concentration with regularized log poles.
//!
//! For a point x_j and width eps, the pole form is
//! `gamma = ddc( chi(log(|z - x_j| / eps)) )` with chi the convex increasing
//! spline that is t for t >= 0, -1/2 for t <= -1, and t + t^2/2 between
//! (the unique cubic matching value and slope at both ends; its cubic
//! coefficient vanishes). gamma has an analytic coefficient matrix,
//! vanishes outside the annulus eps/e < r < eps in the n = 1 case, and its
//! top power vanishes outside the ball of radius eps for n = 2.
//!
//! Masses here use the unnormalized volume convention (2^n n! times the
//! det-normalized density): in that convention `ddc log|z|` is the unit
//! Dirac mass, the continuum mass of gamma^n is exactly 1, and solving
//! `(beta + ddc phi)^n = sum tau_j^n gamma_j^n + delta-background` produces
//! log poles of slope tau_j. The grid mass carries quadrature error, so
//! gamma^n is renormalized to unit mass before entering the right-hand
//! side; the raw pre-normalization mass is recorded.

use crate::error::{CmaError, Result};
use crate::field::{ScalarField, TopDensity};
use crate::form::Form11;
use crate::grid::GridSpec;
use crate::herm::Herm2;
use crate::solve::{self, SolverConfig};
use crate::spectral::Spectral;
use num_complex::Complex64;
use serde::Serialize;

/// Radial fit window, in units of eps.
pub const FIT_WINDOW: (f64, f64) = (1.5, 3.5);
/// Poles thinner than this many grid spacings are unresolvable.
pub const MIN_EPS_SPACINGS: f64 = 4.0;
/// Relative slope tolerance for the log-pole check.
pub const SLOPE_REL_TOL: f64 = 0.05;

pub fn chi(t: f64) -> f64 {
    if t >= 0.0 {
        t
    } else if t <= -1.0 {
        -0.5
    } else {
        t + 0.5 * t * t
    }
}

pub fn chi_prime(t: f64) -> f64 {
    if t >= 0.0 {
        1.0
    } else if t <= -1.0 {
        0.0
    } else {
        1.0 + t
    }
}

pub fn chi_second(t: f64) -> f64 {
    if (-1.0..0.0).contains(&t) {
        1.0
    } else {
        0.0
    }
}

/// Coefficient matrix of `ddc(chi(log(|w|/eps)))` at displacement w.
fn gamma_matrix(w: &[Complex64], eps: f64) -> Herm2 {
    let n = w.len();
    let r2: f64 = w.iter().map(|z| z.norm_sqr()).sum();
    if r2 < 1e-300 {
        return Herm2::ZERO;
    }
    let t = 0.5 * (r2 / (eps * eps)).ln();
    let cp = chi_prime(t);
    let cs = chi_second(t);
    if cp == 0.0 && cs == 0.0 {
        return Herm2::ZERO;
    }
    let inv_pi = 1.0 / std::f64::consts::PI;
    // d^2/dz_j dzbar_k of chi(t): cs * wbar_j w_k / (4 r^4)
    //                            + cp * (delta_jk / (2 r^2) - wbar_j w_k / (2 r^4))
    let entry = |j: usize, k: usize| -> Complex64 {
        let cross = w[j].conj() * w[k];
        let mut v = cross * (cs / (4.0 * r2 * r2) - cp / (2.0 * r2 * r2));
        if j == k {
            v += Complex64::new(cp / (2.0 * r2), 0.0);
        }
        v * inv_pi
    };
    if n == 1 {
        Herm2 { d0: entry(0, 0).re, d1: 0.0, re: 0.0, im: 0.0 }
    } else {
        let off = entry(0, 1);
        Herm2 { d0: entry(0, 0).re, d1: entry(1, 1).re, re: off.re, im: off.im }
    }
}

fn displacement(grid: GridSpec, coords: &[f64], center: &[f64]) -> [Complex64; 2] {
    let mut w = [Complex64::default(); 2];
    for j in 0..grid.n() {
        let dx = GridSpec::wrap(coords[2 * j] - center[2 * j]);
        let dy = GridSpec::wrap(coords[2 * j + 1] - center[2 * j + 1]);
        w[j] = Complex64::new(dx, dy);
    }
    w
}

/// The pole (1,1)-form on the grid.
pub fn gamma_form(grid: GridSpec, center: &[f64], eps: f64) -> Form11 {
    let c = center.to_vec();
    Form11::from_fn(grid, move |x| {
        let w = displacement(grid, x, &c);
        gamma_matrix(&w[..grid.n()], eps)
    })
}

/// Density of gamma^n in the unnormalized volume convention, and its raw
/// grid mass (continuum value 1).
pub fn gamma_top_unnormalized(grid: GridSpec, center: &[f64], eps: f64) -> (TopDensity, f64) {
    let scale = (2f64.powi(grid.n() as i32)) * factorial(grid.n());
    let c = center.to_vec();
    let dens = TopDensity::from_fn(grid, move |x| {
        let w = displacement(grid, x, &c);
        let m = gamma_matrix(&w[..grid.n()], eps);
        let det = if grid.n() == 1 { m.d0 } else { m.det() };
        scale * det
    });
    let mass = dens.integrate();
    (dens, mass)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product::<f64>().max(1.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationConfig {
    /// Pole locations, 2n real coordinates each.
    pub points: Vec<Vec<f64>>,
    /// Pole weights tau_j > 0.
    pub tau: Vec<f64>,
    /// Pole widths to sweep.
    pub eps_schedule: Vec<f64>,
}

impl ConcentrationConfig {
    pub fn validate(&self, grid: GridSpec, beta_mass_unnormalized: f64) -> Result<f64> {
        if self.points.len() != self.tau.len() || self.points.is_empty() {
            return Err(CmaError::Config("need matching nonempty points and tau lists".into()));
        }
        for p in &self.points {
            if p.len() != grid.axes() {
                return Err(CmaError::Config(format!(
                    "pole point needs {} coordinates, got {}",
                    grid.axes(),
                    p.len()
                )));
            }
        }
        if self.tau.iter().any(|&t| t <= 0.0) {
            return Err(CmaError::Config("pole weights must be positive".into()));
        }
        let n = grid.n() as i32;
        let tau_mass: f64 = self.tau.iter().map(|t| t.powi(n)).sum();
        let delta = beta_mass_unnormalized - tau_mass;
        if delta <= 0.0 {
            return Err(CmaError::Config(format!(
                "pole masses {tau_mass:.6e} must stay below the total mass {beta_mass_unnormalized:.6e}"
            )));
        }
        let h = grid.spacing();
        for &e in &self.eps_schedule {
            if e < MIN_EPS_SPACINGS * h {
                return Err(CmaError::Config(format!(
                    "eps {e:.4e} below {MIN_EPS_SPACINGS} grid spacings; pole unresolvable"
                )));
            }
            if e * FIT_WINDOW.1 >= 0.5 {
                return Err(CmaError::Config(format!(
                    "eps {e:.4e} too wide: fit window leaves the coordinate chart"
                )));
            }
        }
        Ok(delta)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsOutcome {
    pub eps: f64,
    /// Raw grid mass of each gamma_j^n before renormalization.
    pub gamma_premass: Vec<f64>,
    /// Fitted radial slope of the potential at each pole.
    pub slopes: Vec<f64>,
    pub c: f64,
    #[serde(skip)]
    pub potential: ScalarField,
    pub solve_flags: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationOutcome {
    pub per_eps: Vec<EpsOutcome>,
    pub delta: f64,
    pub report: super::InequalityReport,
}

/// Solve `(beta + ddc phi)^n = sum tau_j^n gamma_{j,eps}^n + delta * omega^n / V`
/// for each eps in the schedule and fit the radial slope of phi at each pole
/// against tau_j log |z|.
pub fn mass_concentration(
    sp: &Spectral,
    beta: &Form11,
    omega: &Form11,
    cfg: &ConcentrationConfig,
    solver_cfg: &SolverConfig,
) -> Result<ConcentrationOutcome> {
    let grid = sp.grid();
    grid.same(&beta.grid())?;
    grid.same(&omega.grid())?;
    let n = grid.n();
    let unnorm = 2f64.powi(n as i32) * factorial(n);
    let beta_mass = unnorm * beta.det_density().integrate();
    let delta = cfg.validate(grid, beta_mass)?;

    let det_g = omega.det_density();
    let vol_spec = det_g.integrate();
    let mut per_eps = Vec::new();
    let mut report = super::InequalityReport::new("mass-concentration");
    let mut worst_rel = f64::NEG_INFINITY;
    let mut slope_series = Vec::new();
    let mut premass_series = Vec::new();

    for &eps in &cfg.eps_schedule {
        // assemble the multiplier of omega^n
        let mut f_vals = vec![0.0; grid.points()];
        let mut premass = Vec::new();
        for (p, &tau) in cfg.points.iter().zip(&cfg.tau) {
            let (dens, m) = gamma_top_unnormalized(grid, p, eps);
            premass.push(m);
            if m <= 0.0 {
                return Err(CmaError::Diagnostic(format!(
                    "gamma mass {m:.3e} not positive at eps {eps:.3e}"
                )));
            }
            let w = tau.powi(n as i32) / m;
            for (o, &d) in f_vals.iter_mut().zip(dens.values()) {
                *o += w * d;
            }
        }
        for (i, o) in f_vals.iter_mut().enumerate() {
            *o = (*o + delta * det_g.values()[i] / vol_spec) / (unnorm * det_g.values()[i]);
        }
        let f = TopDensity::from_values(grid, f_vals)?;

        let (psi, c, srep) = solve::solve_degenerate_lambda_zero(sp, beta, omega, &f, solver_cfg)?;
        let mut slopes = Vec::new();
        for p in &cfg.points {
            let slope = radial_slope(grid, &psi, p, eps);
            slopes.push(slope);
        }
        for (j, &s) in slopes.iter().enumerate() {
            let rel = (s - cfg.tau[j]).abs() / cfg.tau[j];
            worst_rel = worst_rel.max(rel);
            slope_series.push(s);
        }
        premass_series.extend(premass.iter().cloned());
        per_eps.push(EpsOutcome {
            eps,
            gamma_premass: premass,
            slopes,
            c,
            potential: psi,
            solve_flags: srep.flags.clone(),
        });
        let _ = srep;
    }

    report.samples = cfg.eps_schedule.len() * cfg.points.len();
    report.worst_margin = SLOPE_REL_TOL - worst_rel;
    report.fitted.insert("worst_slope_rel_err".into(), worst_rel);
    report.pass = worst_rel <= SLOPE_REL_TOL;
    report.series.insert("slope".into(), slope_series);
    report.series.insert("gamma_premass".into(), premass_series);
    Ok(ConcentrationOutcome { per_eps, delta, report })
}

/// Least-squares slope of psi against log r over the annulus
/// FIT_WINDOW * eps around the pole.
pub fn radial_slope(grid: GridSpec, psi: &ScalarField, center: &[f64], eps: f64) -> f64 {
    let (lo, hi) = (FIT_WINDOW.0 * eps, FIT_WINDOW.1 * eps);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &v) in psi.values().iter().enumerate() {
        let d2 = grid.dist2(&grid.coords(i), center);
        if d2 >= lo * lo && d2 <= hi * hi {
            xs.push(0.5 * d2.ln());
            ys.push(v);
        }
    }
    if xs.len() < 8 {
        return f64::NAN;
    }
    super::linear_fit(&xs, &ys).0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_matches_endpoint_constraints() {
        assert_eq!(chi(0.0), 0.0);
        assert_eq!(chi_prime(0.0), 1.0);
        assert_eq!(chi(-1.0), -0.5);
        assert_eq!(chi_prime(-1.0), 0.0);
        // convex on the smoothing interval
        for k in 0..10 {
            let t = -1.0 + 0.1 * k as f64;
            assert!(chi_second(t) >= 0.0);
        }
        // increasing overall
        let mut prev = chi(-2.0);
        for k in 1..40 {
            let t = -2.0 + 0.1 * k as f64;
            assert!(chi(t) >= prev);
            prev = chi(t);
        }
    }

    #[test]
    fn gamma_mass_near_one_n1() {
        let grid = GridSpec::new(1, 64).unwrap();
        let (_, m) = gamma_top_unnormalized(grid, &[0.5, 0.5], 0.125);
        assert!((m - 1.0).abs() < 0.05, "pre-normalization mass {m}");
    }

    #[test]
    fn gamma_supported_in_annulus_n1() {
        let grid = GridSpec::new(1, 64).unwrap();
        let eps = 0.125;
        let (d, _) = gamma_top_unnormalized(grid, &[0.5, 0.5], eps);
        for (i, &v) in d.values().iter().enumerate() {
            let r = grid.dist2(&grid.coords(i), &[0.5, 0.5]).sqrt();
            if r > eps || r < eps / std::f64::consts::E - 1e-12 {
                assert_eq!(v, 0.0, "density must vanish off the annulus, r = {r}");
            } else {
                assert!(v >= 0.0);
            }
        }
    }

    #[test]
    fn gamma_top_vanishes_outside_ball_n2() {
        let grid = GridSpec::new(2, 16).unwrap();
        let eps = 0.3;
        let (d, m) = gamma_top_unnormalized(grid, &[0.5, 0.5, 0.5, 0.5], eps);
        assert!(m > 0.0);
        for (i, &v) in d.values().iter().enumerate() {
            let r = grid.dist2(&grid.coords(i), &[0.5, 0.5, 0.5, 0.5]).sqrt();
            if r > eps {
                assert!(v.abs() < 1e-14, "gamma^2 must vanish for r > eps");
            }
        }
    }

    #[test]
    fn rejects_unresolvable_eps() {
        let grid = GridSpec::new(1, 16).unwrap();
        let cfg = ConcentrationConfig {
            points: vec![vec![0.5, 0.5]],
            tau: vec![0.5],
            eps_schedule: vec![0.1],
        };
        // 0.1 < 4/16
        assert!(cfg.validate(grid, 2.0).is_err());
    }

    #[test]
    fn rejects_excess_pole_mass() {
        let grid = GridSpec::new(1, 64).unwrap();
        let cfg = ConcentrationConfig {
            points: vec![vec![0.5, 0.5]],
            tau: vec![5.0],
            eps_schedule: vec![0.125],
        };
        assert!(cfg.validate(grid, 2.0).is_err());
    }
}
