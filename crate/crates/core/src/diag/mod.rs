//! Numerical exercise of the pluripotential estimates: Chern-Levine-
//! Nirenberg mass bounds, the torsion Cauchy-Schwarz bound, total-mass and
//! energy comparisons along the path beta + eps omega, mixed-type
//! inequalities, and the pointwise trace inequality.
//!
//! Existential constants are fitted and tracked, never asserted. Every
//! report is reproducible bit-for-bit from (seed, config): sampling uses an
//! explicitly seeded stream cipher and reductions are order-fixed.

pub mod capacity;
pub mod concentration;

use crate::error::{CmaError, Result};
use crate::field::{pairwise_dot, ScalarField};
use crate::form::Form11;
use crate::herm::Herm2;
use crate::ma;
use crate::random;
use crate::spectral::Spectral;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Serialize)]
pub struct InequalityReport {
    pub name: String,
    pub samples: usize,
    /// lhs - rhs in the inequality's native orientation (worst case).
    pub worst_margin: f64,
    /// Fitted constants where the underlying constant is existential.
    pub fitted: BTreeMap<String, f64>,
    pub pass: bool,
    /// Named per-sample data, plot-ready.
    pub series: BTreeMap<String, Vec<f64>>,
}

impl InequalityReport {
    fn new(name: &str) -> Self {
        InequalityReport {
            name: name.to_string(),
            samples: 0,
            worst_margin: f64::INFINITY,
            fitted: BTreeMap::new(),
            pass: false,
            series: BTreeMap::new(),
        }
    }
}

pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let sx = crate::field::pairwise_sum(x);
    let sy = crate::field::pairwise_sum(y);
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return (0.0, sy / n);
    }
    let slope = (n * sxy - sx * sy) / denom;
    (slope, (sy - slope * sx) / n)
}

// ----------------------------------------------------------------------
// Pointwise trace inequality: (tr_g tau)(tr_tau w) >= tr_g w
// ----------------------------------------------------------------------

pub const TRACE_INEQ_REL_TOL: f64 = 1e-12;

fn random_posdef(rng: &mut ChaCha12Rng) -> Herm2 {
    let d0: f64 = rng.random_range(0.2..3.0);
    let d1: f64 = rng.random_range(0.2..3.0);
    let cap = 0.7 * (d0 * d1).sqrt() / std::f64::consts::SQRT_2;
    Herm2 {
        d0,
        d1,
        re: rng.random_range(-cap..cap),
        im: rng.random_range(-cap..cap),
    }
}

pub fn check_trace_inequality(samples: usize, seed: u64) -> InequalityReport {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut rep = InequalityReport::new("trace-inequality");
    let mut worst = f64::INFINITY;
    let mut violations = 0usize;
    for _ in 0..samples {
        let g = random_posdef(&mut rng);
        let tau = random_posdef(&mut rng);
        let w = random_posdef(&mut rng);
        let lhs = g.inv_trace_with(&tau) * tau.inv_trace_with(&w);
        let rhs = g.inv_trace_with(&w);
        let rel = (lhs - rhs) / rhs.abs().max(f64::MIN_POSITIVE);
        if rel < worst {
            worst = rel;
        }
        if rel < -TRACE_INEQ_REL_TOL {
            violations += 1;
        }
    }
    rep.samples = samples;
    rep.worst_margin = worst;
    rep.fitted.insert("violations".into(), violations as f64);
    rep.pass = violations == 0;
    rep
}

// ----------------------------------------------------------------------
// CLN mass bound: integral of |psi| against omega_phi^n stays bounded
// ----------------------------------------------------------------------

/// Rescale an admissible potential into [0, 1] keeping admissibility
/// (scaling down and shifting preserves both).
fn into_unit_range(phi: &ScalarField) -> ScalarField {
    let osc = phi.osc();
    let k = if osc > 1.0 { 1.0 / osc } else { 1.0 };
    let mut out = phi.clone();
    out.scale(k);
    let inf = out.inf();
    out.shift(-inf);
    out
}

pub fn check_cln(
    sp: &Spectral,
    omega: &Form11,
    samples: usize,
    seed: u64,
) -> Result<InequalityReport> {
    omega.validate_positive(f64::MIN_POSITIVE)?;
    let mut rep = InequalityReport::new("cln-mass-bound");
    let mut values = Vec::with_capacity(samples);
    for s in 0..samples as u64 {
        let psi = random::random_admissible(sp, omega, seed ^ (2 * s + 1), 1.0, random::DEFAULT_MARGIN_FRAC)?;
        if psi.sup().abs() > 1e-12 {
            return Err(CmaError::Diagnostic("psi must have sup 0".into()));
        }
        let phi_raw =
            random::random_admissible(sp, omega, seed ^ (2 * s + 2), 1.0, random::DEFAULT_MARGIN_FRAC)?;
        let phi = into_unit_range(&phi_raw);
        if phi.inf() < -1e-12 || phi.sup() > 1.0 + 1e-12 {
            return Err(CmaError::Diagnostic("phi must take values in [0,1]".into()));
        }
        let (dens, _) = ma::ma_density(sp, omega, &phi)?;
        let abspsi: Vec<f64> = psi.values().iter().map(|v| v.abs()).collect();
        values.push(pairwise_dot(&abspsi, dens.values()) / abspsi.len() as f64);
    }
    let max = crate::field::max_of(&values);
    let mean = crate::field::pairwise_sum(&values) / values.len().max(1) as f64;
    rep.samples = samples;
    rep.worst_margin = max;
    rep.fitted.insert("c_fit_max".into(), max);
    rep.fitted.insert("mean".into(), mean);
    rep.pass = values.iter().all(|v| v.is_finite());
    rep.series.insert("mass".into(), values);
    Ok(rep)
}

// ----------------------------------------------------------------------
// Cauchy-Schwarz torsion bound (n = 2, T = 1):
// |int du ^ dc(omega)| <= C (int du ^ dc(u) ^ omega)^{1/2} (int omega^2)^{1/2}
// ----------------------------------------------------------------------

/// Rank-one form (1/pi) du ^ dc(u) from the complex gradient.
fn gradient_square_form(sp: &Spectral, u: &ScalarField) -> Result<Form11> {
    let grid = sp.grid();
    let grads = sp.grad_z(u)?;
    let mut out = Form11::zeros(grid);
    let inv_pi = 1.0 / std::f64::consts::PI;
    if grid.n() == 1 {
        for i in 0..grid.points() {
            out.d0[i] = grads[0][i].norm_sqr() * inv_pi;
        }
    } else {
        for i in 0..grid.points() {
            let a = grads[0][i];
            let b = grads[1][i];
            out.d0[i] = a.norm_sqr() * inv_pi;
            out.d1[i] = b.norm_sqr() * inv_pi;
            let cross = a * b.conj();
            out.re[i] = cross.re * inv_pi;
            out.im[i] = cross.im * inv_pi;
        }
    }
    Ok(out)
}

pub fn check_cauchy_schwarz(
    sp: &Spectral,
    omega: &Form11,
    samples: usize,
    seed: u64,
) -> Result<InequalityReport> {
    if sp.grid().n() != 2 {
        return Err(CmaError::Dimension { required: 2, got: sp.grid().n() });
    }
    omega.validate_positive(f64::MIN_POSITIVE)?;
    let torsion = sp.form_ddc_density(omega)?;
    let vol2 = omega.det_density().integrate();
    let mut rep = InequalityReport::new("cauchy-schwarz-torsion");
    let mut ratios = Vec::with_capacity(samples);
    let mut lhs_series = Vec::with_capacity(samples);
    for s in 0..samples as u64 {
        let u = random::random_admissible(sp, omega, seed ^ (s + 1), 1.0, random::DEFAULT_MARGIN_FRAC)?;
        // int du ^ dc omega = -int u ddc omega (Stokes, alias-free data)
        let lhs = (pairwise_dot(u.values(), torsion.values()) / u.values().len() as f64).abs();
        let p = gradient_square_form(sp, &u)?;
        let dirichlet = ma::wedge_density(&p, omega).integrate();
        let rhs = dirichlet.max(0.0).sqrt() * vol2.sqrt();
        let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
        ratios.push(ratio);
        lhs_series.push(lhs);
    }
    let cfit = crate::field::max_of(&ratios);
    rep.samples = samples;
    rep.worst_margin = cfit;
    rep.fitted.insert("c_fit".into(), cfit);
    rep.pass = ratios.iter().all(|v| v.is_finite());
    rep.series.insert("ratio".into(), ratios);
    rep.series.insert("lhs".into(), lhs_series);
    Ok(rep)
}

// ----------------------------------------------------------------------
// Total-mass deviation along Omega = beta + eps omega
// ----------------------------------------------------------------------

pub fn check_mass_estimate(
    sp: &Spectral,
    beta: &Form11,
    omega: &Form11,
    seed: u64,
    eps_schedule: &[f64],
) -> Result<InequalityReport> {
    if eps_schedule.is_empty() {
        return Err(CmaError::Diagnostic("empty eps schedule".into()));
    }
    let eps_min = eps_schedule.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut base = omega.scaled(eps_min);
    base.add_scaled(1.0, beta)?;
    let u = random::random_admissible(sp, &base, seed, 1.0, random::DEFAULT_MARGIN_FRAC)?;
    let h = sp.ddc(&u)?;

    let mut rep = InequalityReport::new("mass-estimate");
    let mut deltas = Vec::new();
    for &eps in eps_schedule {
        let mut om = omega.scaled(eps);
        om.add_scaled(1.0, beta)?;
        let m0 = om.det_density().integrate();
        let mut omu = om.clone();
        omu.add_scaled(1.0, &h)?;
        let m1 = omu.det_density().integrate();
        deltas.push((m1 - m0).abs());
    }
    let maxd = crate::field::max_of(&deltas);
    rep.samples = eps_schedule.len();
    rep.series.insert("eps".into(), eps_schedule.to_vec());
    rep.series.insert("delta".into(), deltas.clone());
    if maxd < 1e-13 {
        // closed case: exact mass invariance
        rep.worst_margin = maxd;
        rep.fitted.insert("exact".into(), 1.0);
        rep.fitted.insert("slope".into(), 0.0);
        rep.pass = true;
        return Ok(rep);
    }
    let xs: Vec<f64> = eps_schedule.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = deltas.iter().map(|d| d.max(1e-300).ln()).collect();
    let (slope, _) = linear_fit(&xs, &ys);
    rep.worst_margin = slope - 0.9;
    rep.fitted.insert("slope".into(), slope);
    rep.fitted.insert("exact".into(), 0.0);
    rep.pass = slope >= 0.9;
    Ok(rep)
}

// ----------------------------------------------------------------------
// Energy comparison: int(-v) Omega_v^n <= 2^n int(-u) Omega_u^n + slack(eps)
// ----------------------------------------------------------------------

pub fn check_energy_inequality(
    sp: &Spectral,
    beta: &Form11,
    omega: &Form11,
    seed: u64,
    eps_schedule: &[f64],
) -> Result<InequalityReport> {
    let n = sp.grid().n();
    let mut rep = InequalityReport::new("energy-inequality");
    let mut slacks = Vec::new();
    let mut epses = Vec::new();
    for (k, &eps) in eps_schedule.iter().enumerate() {
        let mut om = beta.clone();
        if eps > 0.0 {
            om.add_scaled(eps, omega)?;
        }
        om.validate_positive(f64::MIN_POSITIVE)?;
        let v_raw = random::random_admissible(sp, &om, seed ^ (2 * k as u64 + 1), 1.0, random::DEFAULT_MARGIN_FRAC)?;
        let w_raw = random::random_admissible(sp, &om, seed ^ (2 * k as u64 + 2), 1.0, random::DEFAULT_MARGIN_FRAC)?;
        // v <= -1, u = average shifted so u <= v <= -1 with H(u) = (Hv + Hw)/2
        let mut v = v_raw.clone();
        v.shift(-1.0);
        let mut u = v_raw.clone();
        u.add_scaled(1.0, &w_raw)?;
        u.scale(0.5);
        let shift = u
            .values()
            .iter()
            .zip(v_raw.values())
            .fold(f64::NEG_INFINITY, |m, (a, b)| m.max(a - b));
        u.shift(-shift - 1.0);

        let hv = sp.ddc(&v)?;
        let hu = sp.ddc(&u)?;
        let mut av = om.clone();
        av.add_scaled(1.0, &hv)?;
        let mut au = om.clone();
        au.add_scaled(1.0, &hu)?;
        let dv = av.det_density();
        let du = au.det_density();
        let neg_v: Vec<f64> = v.values().iter().map(|x| -x).collect();
        let neg_u: Vec<f64> = u.values().iter().map(|x| -x).collect();
        let lhs = pairwise_dot(&neg_v, dv.values()) / neg_v.len() as f64;
        let rhs = 2f64.powi(n as i32) * pairwise_dot(&neg_u, du.values()) / neg_u.len() as f64;
        slacks.push((lhs - rhs).max(0.0));
        epses.push(eps);
    }
    let worst = crate::field::max_of(&slacks);
    rep.samples = eps_schedule.len();
    rep.series.insert("eps".into(), epses.clone());
    rep.series.insert("slack".into(), slacks.clone());
    rep.worst_margin = -worst;
    if worst < 1e-12 {
        rep.fitted.insert("slope".into(), 0.0);
        rep.pass = true;
        return Ok(rep);
    }
    let pos: Vec<(f64, f64)> = epses
        .iter()
        .zip(&slacks)
        .filter(|(&e, &s)| e > 0.0 && s > 1e-15)
        .map(|(&e, &s)| (e.ln(), s.ln()))
        .collect();
    let (slope, _) = linear_fit(
        &pos.iter().map(|p| p.0).collect::<Vec<_>>(),
        &pos.iter().map(|p| p.1).collect::<Vec<_>>(),
    );
    rep.fitted.insert("slope".into(), slope);
    rep.pass = slope >= 0.9;
    Ok(rep)
}

// ----------------------------------------------------------------------
// Mixed-type inequalities (pointwise, both displays)
// ----------------------------------------------------------------------

pub const MIXED_REL_TOL: f64 = 1e-10;
pub const MIXED_DELTAS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

pub fn check_mixed_type(
    sp: &Spectral,
    omega: &Form11,
    samples: usize,
    seed: u64,
) -> Result<InequalityReport> {
    let grid = sp.grid();
    let n = grid.n();
    let mut rep = InequalityReport::new("mixed-type");
    let mut worst = f64::INFINITY;
    let mut per_sample = Vec::with_capacity(samples);
    for s in 0..samples as u64 {
        let u = random::random_admissible(sp, omega, seed ^ (2 * s + 1), 1.0, random::DEFAULT_MARGIN_FRAC)?;
        let v = random::random_admissible(sp, omega, seed ^ (2 * s + 2), 1.0, random::DEFAULT_MARGIN_FRAC)?;
        let mut a = sp.ddc(&u)?;
        a.add_scaled(1.0, omega)?;
        let mut b = sp.ddc(&v)?;
        b.add_scaled(1.0, omega)?;
        let da = a.det_density();
        let db = b.det_density();

        let mut local = f64::INFINITY;
        // wedge display, the non-trivial power for n = 2
        if n == 2 {
            let mixed = ma::wedge_density(&a, &b);
            for i in 0..grid.points() {
                let rhs = (da.values()[i] * db.values()[i]).max(0.0).sqrt();
                let rel = (mixed.values()[i] - rhs) / rhs.max(1e-300);
                local = local.min(rel);
            }
        }
        // convex-combination display
        for &d in &MIXED_DELTAS {
            let mut conv = a.scaled(d);
            conv.add_scaled(1.0 - d, &b)?;
            let dc = conv.det_density();
            for i in 0..grid.points() {
                let rhs = (d * da.values()[i].max(0.0).powf(1.0 / n as f64)
                    + (1.0 - d) * db.values()[i].max(0.0).powf(1.0 / n as f64))
                .powi(n as i32);
                let rel = (dc.values()[i] - rhs) / rhs.max(1e-300);
                local = local.min(rel);
            }
        }
        worst = worst.min(local);
        per_sample.push(local);
    }
    rep.samples = samples;
    rep.worst_margin = worst;
    rep.pass = worst >= -MIXED_REL_TOL;
    rep.series.insert("worst_rel_margin".into(), per_sample);
    Ok(rep)
}

// ----------------------------------------------------------------------
// Constant comparison: sup density ratio >= 1
// ----------------------------------------------------------------------

pub fn check_constant_lower_bound(
    sp: &Spectral,
    omega: &Form11,
    samples: usize,
    seed: u64,
) -> Result<InequalityReport> {
    let grid = sp.grid();
    let mut rep = InequalityReport::new("constant-lower-bound");
    let mut ratios = Vec::with_capacity(samples);
    let mut worst = f64::INFINITY;
    for s in 0..samples as u64 {
        let u = random::random_admissible(sp, omega, seed ^ (2 * s + 1), 1.0, random::DEFAULT_MARGIN_FRAC)?;
        let v = random::random_admissible(sp, omega, seed ^ (2 * s + 2), 1.0, random::DEFAULT_MARGIN_FRAC)?;
        let mut a = sp.ddc(&u)?;
        a.add_scaled(1.0, omega)?;
        let mut b = sp.ddc(&v)?;
        b.add_scaled(1.0, omega)?;
        let da = a.det_density();
        let db = b.det_density();
        let mut sup = f64::NEG_INFINITY;
        for i in 0..grid.points() {
            sup = sup.max(da.values()[i] / db.values()[i]);
        }
        ratios.push(sup);
        worst = worst.min(sup - 1.0);
    }
    rep.samples = samples;
    rep.worst_margin = worst;
    rep.pass = worst >= -1e-10;
    rep.series.insert("sup_ratio".into(), ratios);
    Ok(rep)
}

// ----------------------------------------------------------------------
// Growth of the normalized iterates along a degenerate path
// ----------------------------------------------------------------------

/// Ratio trend check on `||psi_eps||_inf / log(1/eps)^n`: pass when the
/// tail (after the first two stages) is non-increasing up to `tol`.
pub fn growth_trend(ratios: &[f64], tol: f64) -> InequalityReport {
    let mut rep = InequalityReport::new("growth-lemma");
    rep.samples = ratios.len();
    rep.series.insert("ratio".into(), ratios.to_vec());
    if ratios.len() < 3 {
        rep.pass = true;
        rep.worst_margin = 0.0;
        return rep;
    }
    let tail = &ratios[2..];
    let worst = tail
        .windows(2)
        .fold(f64::NEG_INFINITY, |m, w| m.max(w[1] - w[0]));
    rep.worst_margin = -worst;
    rep.pass = worst <= tol;
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders;
    use crate::grid::GridSpec;
    use crate::field::TopDensity as _TD;

    #[test]
    fn trace_inequality_identity_cases() {
        let g = Herm2::IDENTITY;
        // g = tau = w = id: n*n >= n
        assert!(g.inv_trace_with(&g) * g.inv_trace_with(&g) >= g.inv_trace_with(&g));
        let rep = check_trace_inequality(2000, 3);
        assert!(rep.pass, "worst {}", rep.worst_margin);
    }

    #[test]
    fn cln_zero_psi_gives_zero() {
        let grid = GridSpec::new(1, 16).unwrap();
        let sp = Spectral::new(grid);
        let w = Form11::flat(grid);
        let phi = ScalarField::zeros(grid);
        let (dens, _) = ma::ma_density(&sp, &w, &phi).unwrap();
        let psi = ScalarField::zeros(grid);
        let abspsi: Vec<f64> = psi.values().iter().map(|v| v.abs()).collect();
        let val = pairwise_dot(&abspsi, dens.values());
        assert_eq!(val, 0.0);
    }

    #[test]
    fn cauchy_schwarz_kaehler_is_zero() {
        let grid = GridSpec::new(2, 16).unwrap();
        let sp = Spectral::new(grid);
        let w = Form11::flat(grid);
        let rep = check_cauchy_schwarz(&sp, &w, 5, 11).unwrap();
        assert!(rep.pass);
        assert!(rep.fitted["c_fit"] < 1e-10, "c_fit {}", rep.fitted["c_fit"]);
    }

    #[test]
    fn mass_estimate_closed_case_exact() {
        let grid = GridSpec::new(2, 16).unwrap();
        let sp = Spectral::new(grid);
        let beta = builders::degenerate_beta(grid);
        let flat = Form11::flat(grid);
        let eps: Vec<f64> = (0..6).map(|k| 0.5f64.powi(k)).collect();
        let rep = check_mass_estimate(&sp, &beta, &flat, 5, &eps).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.fitted["exact"], 1.0, "flat omega is closed: {rep:?}");
    }

    #[test]
    fn mass_estimate_nonclosed_slope_one() {
        let grid = GridSpec::new(2, 16).unwrap();
        let sp = Spectral::new(grid);
        let beta = builders::degenerate_beta(grid);
        let w = builders::perturbed_diagonal(grid, 0.2).unwrap();
        let eps: Vec<f64> = (0..6).map(|k| 0.5f64.powi(k)).collect();
        let rep = check_mass_estimate(&sp, &beta, &w, 5, &eps).unwrap();
        assert!(rep.pass, "slope {:?}", rep.fitted);
        let slope = rep.fitted["slope"];
        assert!((slope - 1.0).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn mixed_type_holds_on_flat() {
        let grid = GridSpec::new(2, 8).unwrap();
        let sp = Spectral::new(grid);
        let w = Form11::flat(grid);
        let rep = check_mixed_type(&sp, &w, 5, 17).unwrap();
        assert!(rep.pass, "worst {}", rep.worst_margin);
    }

    #[test]
    fn growth_trend_flags_increase() {
        let ok = growth_trend(&[5.0, 1.0, 0.5, 0.4, 0.35], 1e-9);
        assert!(ok.pass);
        let bad = growth_trend(&[0.1, 0.1, 0.1, 0.5, 0.9], 1e-9);
        assert!(!bad.pass);
    }

    #[test]
    fn energy_trivial_equal_arguments() {
        // u = v <= -1: margin (2^n - 1) int(-u) Omega_u^n >= 0 by construction
        let grid = GridSpec::new(1, 16).unwrap();
        let sp = Spectral::new(grid);
        let w = Form11::flat(grid);
        let u = {
            let mut f = random::random_admissible(&sp, &w, 5, 1.0, 0.05).unwrap();
            f.shift(-1.0);
            f
        };
        let mut a = sp.ddc(&u).unwrap();
        a.add_scaled(1.0, &w).unwrap();
        let d = a.det_density();
        let neg: Vec<f64> = u.values().iter().map(|x| -x).collect();
        let e = pairwise_dot(&neg, d.values()) / neg.len() as f64;
        assert!(2.0 * e >= e && e > 0.0);
        let _ = _TD::constant(grid, 1.0);
    }
}
