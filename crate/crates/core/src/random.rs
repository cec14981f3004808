//! Reproducible band-limited random fields and admissible potentials.
//!
//! Mode coefficients are drawn in a fixed lexicographic order over the mode
//! box, so a (seed, max_mode) pair identifies one trigonometric polynomial
//! independently of the grid resolution; evaluating it on a finer grid gives
//! the same continuum function. All randomness comes from a counter-based
//! stream cipher seeded explicitly, never from ambient state.

use crate::error::{CmaError, Result};
use crate::field::ScalarField;
use crate::form::Form11;
use crate::spectral::Spectral;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Default pointwise positivity retained by admissible potentials, as a
/// fraction of the metric's own minimum eigenvalue.
pub const DEFAULT_MARGIN_FRAC: f64 = 0.05;
const MAX_HALVINGS: usize = 60;

/// Mean-zero band-limited field with modes |k_a| <= max_mode on every axis,
/// unit coefficient l2 norm. Deterministic in (seed, max_mode) and
/// resolution-independent for res >= 4 * max_mode.
pub fn band_limited(sp: &Spectral, seed: u64, max_mode: i64) -> Result<ScalarField> {
    let grid = sp.grid();
    if max_mode < 1 || 4 * max_mode > grid.res() as i64 {
        return Err(CmaError::Admissible(format!(
            "max_mode {max_mode} outside [1, res/4] for res {}",
            grid.res()
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let axes = grid.axes();
    let mut spec = vec![Complex64::default(); grid.points()];
    let mut l2 = 0.0f64;

    // half-space: first nonzero component positive, fixed lexicographic order
    let mut k = [0i64; 4];
    fn walk(
        axes: usize,
        max_mode: i64,
        k: &mut [i64; 4],
        axis: usize,
        rng: &mut ChaCha12Rng,
        sp: &Spectral,
        spec: &mut [Complex64],
        l2: &mut f64,
    ) -> Result<()> {
        if axis == axes {
            if k[..axes].iter().all(|&v| v == 0) {
                return Ok(());
            }
            if k[..axes].iter().find(|&&v| v != 0).map(|&v| v < 0).unwrap_or(false) {
                return Ok(());
            }
            let norm2: i64 = k[..axes].iter().map(|&v| v * v).sum();
            let decay = 1.0 / (1.0 + norm2 as f64).powf((axes as f64 + 1.0) / 2.0);
            let re: f64 = rng.random_range(-1.0..1.0);
            let im: f64 = rng.random_range(-1.0..1.0);
            let c = Complex64::new(re, im) * decay;
            let neg: Vec<i64> = k[..axes].iter().map(|&v| -v).collect();
            spec[sp.slot(&k[..axes])?] = c;
            spec[sp.slot(&neg)?] = c.conj();
            *l2 += 2.0 * c.norm_sqr();
            return Ok(());
        }
        for v in -max_mode..=max_mode {
            k[axis] = v;
            walk(axes, max_mode, k, axis + 1, rng, sp, spec, l2)?;
        }
        Ok(())
    }
    walk(axes, max_mode, &mut k, 0, &mut rng, sp, &mut spec, &mut l2)?;

    let scale = 1.0 / l2.sqrt();
    spec.iter_mut().for_each(|c| *c *= scale);
    Ok(sp.synthesize(spec))
}

/// Deterministic omega-plurisubharmonic test potential: band-limited
/// (modes <= res/4), scaled by halving until
/// `min_eig(omega + ddc(phi)) >= margin_frac * min_eig(omega)` pointwise,
/// then normalized to sup = 0.
pub fn random_admissible(
    sp: &Spectral,
    omega: &Form11,
    seed: u64,
    amplitude: f64,
    margin_frac: f64,
) -> Result<ScalarField> {
    let grid = sp.grid();
    grid.same(&omega.grid())?;
    let m0 = omega.validate_positive(f64::MIN_POSITIVE).map_err(|e| {
        CmaError::Admissible(format!("metric must be positive: {e}"))
    })?;
    if amplitude == 0.0 {
        return Ok(ScalarField::zeros(grid));
    }
    if amplitude < 0.0 {
        return Err(CmaError::Admissible("amplitude must be >= 0".into()));
    }
    let raw = band_limited(sp, seed, (grid.res() / 4) as i64)?;
    let h = sp.ddc(&raw)?;
    let target = margin_frac * m0;
    let mut a = amplitude;
    for _ in 0..MAX_HALVINGS {
        if omega.min_eig_shifted(a, &h) >= target {
            let mut phi = raw.clone();
            phi.scale(a);
            phi.normalize_sup();
            return Ok(phi);
        }
        a *= 0.5;
    }
    Err(CmaError::Admissible(format!(
        "amplitude scaling underflowed after {MAX_HALVINGS} halvings (metric min eig {m0:.3e})"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn deterministic_in_seed() {
        let grid = GridSpec::new(2, 16).unwrap();
        let sp = Spectral::new(grid);
        let w = Form11::flat(grid);
        let a = random_admissible(&sp, &w, 7, 1.0, DEFAULT_MARGIN_FRAC).unwrap();
        let b = random_admissible(&sp, &w, 7, 1.0, DEFAULT_MARGIN_FRAC).unwrap();
        assert_eq!(a.values(), b.values());
        let c = random_admissible(&sp, &w, 8, 1.0, DEFAULT_MARGIN_FRAC).unwrap();
        assert!(a.sup_abs_diff(&c).unwrap() > 1e-6);
    }

    #[test]
    fn zero_amplitude_gives_zero() {
        let grid = GridSpec::new(1, 16).unwrap();
        let sp = Spectral::new(grid);
        let phi = random_admissible(&sp, &Form11::flat(grid), 3, 0.0, 0.05).unwrap();
        assert!(phi.sup_abs() == 0.0);
    }

    #[test]
    fn margin_holds_pointwise() {
        let grid = GridSpec::new(2, 16).unwrap();
        let sp = Spectral::new(grid);
        let w = Form11::flat(grid);
        for seed in 0..5 {
            let phi = random_admissible(&sp, &w, seed, 1.0, DEFAULT_MARGIN_FRAC).unwrap();
            let mut a = sp.ddc(&phi).unwrap();
            a.add_scaled(1.0, &w).unwrap();
            assert!(a.min_eig() >= DEFAULT_MARGIN_FRAC - 1e-12);
            assert!(phi.sup().abs() < 1e-12);
        }
    }

    #[test]
    fn band_limited_is_resolution_independent() {
        let g1 = GridSpec::new(1, 16).unwrap();
        let g2 = GridSpec::new(1, 32).unwrap();
        let sp1 = Spectral::new(g1);
        let sp2 = Spectral::new(g2);
        let f1 = band_limited(&sp1, 11, 4).unwrap();
        let f2 = band_limited(&sp2, 11, 4).unwrap();
        let up = sp1.refine_scalar(&f1, &sp2).unwrap();
        assert!(up.sup_abs_diff(&f2).unwrap() < 1e-12);
    }
}
