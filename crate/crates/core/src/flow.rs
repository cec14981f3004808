//! Normalized Chern-Ricci flow at the potential level.
//!
//! With a reference path `ghat_t` running from the start metric to the
//! closed limit form, the metric flow `d omega/dt = -Ric(omega) - omega`
//! reduces to the scalar equation
//!
//! `d phi/dt = log[ density((ghat_t + ddc phi)^n) / vol ] - phi`
//!
//! whose steady state at ghat = beta is the elliptic equation
//! `(beta + ddc phi)^n = e^phi vol`. Stepping is explicit forward Euler with
//! an adaptive dt: besides the positivity safeguard, dt is capped by the
//! forward-Euler stability bound of the constant-coefficient linearization
//! (spectral stiffness makes an uncapped explicit step blow up long before
//! positivity is lost, and the cap makes the stability restriction visible
//! in the trace).

use crate::error::{CmaError, Result};
use crate::field::{ScalarField, TopDensity};
use crate::form::Form11;
use crate::herm::Herm2;
use crate::spectral::Spectral;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferencePath {
    /// ghat_t = e^{-t} omega0 + (1 - e^{-t}) beta
    Exponential,
    /// ghat_t = (1 - min(t,1)) omega0 + min(t,1) beta
    Linear,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowConfig {
    pub dt_init: f64,
    pub dt_max: f64,
    pub t_end: f64,
    /// Pointwise eigenvalue safeguard for ghat_t + ddc(phi).
    pub safeguard_margin: f64,
    /// Record every k-th accepted step (the final step is always recorded).
    pub output_every: usize,
    pub reference_path: ReferencePath,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            dt_init: 1e-3,
            dt_max: 0.25,
            t_end: 20.0,
            safeguard_margin: 1e-8,
            output_every: 10,
            reference_path: ReferencePath::Exponential,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dt_init <= 0.0 || self.dt_init > self.dt_max {
            return Err(CmaError::Config("need 0 < dt_init <= dt_max".into()));
        }
        if self.t_end <= 0.0 {
            return Err(CmaError::Config("t_end must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowSample {
    pub t: f64,
    pub dt: f64,
    pub sup: f64,
    pub inf: f64,
    /// Sup residual of the steady equation at beta; None while
    /// beta + ddc(phi) is not yet positive.
    pub steady_residual: Option<f64>,
    pub positivity_margin: f64,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct FlowTrace {
    pub samples: Vec<FlowSample>,
    pub steps: usize,
    pub dt_rejections: usize,
    pub wall_ms: f64,
}

impl FlowTrace {
    /// CSV with header: time, sup, inf, residual, margin.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("time,sup,inf,residual,margin\n");
        for row in &self.samples {
            let r = row
                .steady_residual
                .map(|v| format!("{v:.12e}"))
                .unwrap_or_else(|| "inf".into());
            s.push_str(&format!(
                "{:.9},{:.12e},{:.12e},{},{:.6e}\n",
                row.t, row.sup, row.inf, r, row.positivity_margin
            ));
        }
        s
    }
}

fn reference_metric(
    omega0: &Form11,
    beta: &Form11,
    t: f64,
    path: ReferencePath,
) -> Form11 {
    let s = match path {
        ReferencePath::Exponential => 1.0 - (-t).exp(),
        ReferencePath::Linear => t.min(1.0),
    };
    let mut g = omega0.scaled(1.0 - s);
    g.add_scaled(s, beta).expect("same grid");
    g
}

/// Forward-Euler stability cap for the linearized flow: the most negative
/// linearization eigenvalue is estimated from the constant-coefficient
/// symbol at the all-Nyquist corner mode.
fn stability_dt(grid: crate::grid::GridSpec, abar: &Herm2) -> f64 {
    let half = grid.res() as f64 / 2.0;
    let corner = if grid.n() == 1 {
        -PI * (half * half + half * half) / abar.d0
    } else {
        let h = Herm2::diag(-PI * 2.0 * half * half, -PI * 2.0 * half * half);
        abar.inv_trace_with(&h)
    };
    1.8 / (corner.abs() + 1.0)
}

/// Run the flow from phi = 0; returns phi(t_end) and the trace.
pub fn chern_ricci_flow(
    sp: &Spectral,
    omega0: &Form11,
    beta: &Form11,
    vol: &TopDensity,
    cfg: &FlowConfig,
) -> Result<(ScalarField, FlowTrace)> {
    let start = std::time::Instant::now();
    cfg.validate()?;
    let grid = sp.grid();
    grid.same(&omega0.grid())?;
    grid.same(&beta.grid())?;
    grid.same(&vol.grid())?;
    omega0.validate_positive(f64::MIN_POSITIVE)?;
    beta.validate_semipositive(1e-10)?;
    if grid.n() == 2 {
        let d = sp.form_ddc_density(beta)?;
        if crate::field::sup_abs(d.values()) > 1e-10 {
            return Err(CmaError::Config("beta must be closed".into()));
        }
    }
    if beta.det_density().integrate() <= 0.0 {
        return Err(CmaError::Config("beta^n must have positive mass".into()));
    }
    if vol.min() <= 0.0 {
        return Err(CmaError::Config("volume density must be positive".into()));
    }
    let v0 = omega0.det_density().integrate();
    let vm = vol.integrate();
    if (vm - v0).abs() > 1e-8 * v0.abs().max(1.0) {
        return Err(CmaError::Config(format!(
            "volume normalization violated: integral {vm:.12e} vs omega0 mass {v0:.12e}"
        )));
    }

    let log_vol: Vec<f64> = vol.values().iter().map(|v| v.ln()).collect();
    let mut phi = ScalarField::zeros(grid);
    let mut t = 0.0f64;
    let mut dt = cfg.dt_init;
    let mut trace = FlowTrace::default();
    let mut rate = vec![0.0; grid.points()];
    let dt_floor = 1e-9;

    while t < cfg.t_end {
        let ghat = reference_metric(omega0, beta, t, cfg.reference_path);
        let mut a = sp.ddc(&phi)?;
        a.add_scaled(1.0, &ghat)?;
        let margin = a.min_eig();
        if margin <= 0.0 {
            return Err(CmaError::Flow(format!(
                "positivity lost at t = {t:.6} (margin {margin:.3e})"
            )));
        }
        // rate = log det(a) - log vol - phi
        let n1 = grid.n() == 1;
        for i in 0..rate.len() {
            let det = if n1 {
                a.d0[i]
            } else {
                a.d0[i] * a.d1[i] - (a.re[i] * a.re[i] + a.im[i] * a.im[i])
            };
            rate[i] = det.ln() - log_vol[i] - phi.values()[i];
        }

        // steady residual against the limit metric beta
        let steady = steady_residual(&a, &ghat, beta, &phi, &log_vol);

        let cap = stability_dt(grid, &a.mean());
        let mut step = dt.min(cap).min(cfg.dt_max).min(cfg.t_end - t);

        // positivity safeguard on the trial step
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial = phi.clone();
            crate::field::axpy(trial.values_mut(), step, &rate);
            let h_trial = sp.ddc(&trial)?;
            let ghat_next = reference_metric(omega0, beta, t + step, cfg.reference_path);
            if ghat_next.min_eig_shifted(1.0, &h_trial) >= cfg.safeguard_margin {
                phi = trial;
                accepted = true;
                break;
            }
            trace.dt_rejections += 1;
            step *= 0.5;
            if step < dt_floor {
                break;
            }
        }
        if !accepted {
            return Err(CmaError::Flow(format!(
                "dt fell below floor at t = {t:.6}; trace has {} samples",
                trace.samples.len()
            )));
        }

        t += step;
        trace.steps += 1;
        dt = (step * 1.25).min(cfg.dt_max);
        if trace.steps % cfg.output_every.max(1) == 0 || t >= cfg.t_end {
            trace.samples.push(FlowSample {
                t,
                dt: step,
                sup: phi.sup(),
                inf: phi.inf(),
                steady_residual: steady,
                positivity_margin: margin,
            });
        }
    }
    trace.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((phi, trace))
}

fn steady_residual(
    a: &Form11,
    ghat: &Form11,
    beta: &Form11,
    phi: &ScalarField,
    log_vol: &[f64],
) -> Option<f64> {
    // b = a - ghat + beta = beta + ddc(phi)
    let n1 = a.grid().n() == 1;
    let mut sup = 0.0f64;
    for i in 0..log_vol.len() {
        let det = if n1 {
            a.d0[i] - ghat.d0[i] + beta.d0[i]
        } else {
            let d0 = a.d0[i] - ghat.d0[i] + beta.d0[i];
            let d1 = a.d1[i] - ghat.d1[i] + beta.d1[i];
            let re = a.re[i] - ghat.re[i] + beta.re[i];
            let im = a.im[i] - ghat.im[i] + beta.im[i];
            d0 * d1 - (re * re + im * im)
        };
        if det <= 0.0 {
            return None;
        }
        let r = det.ln() - log_vol[i] - phi.values()[i];
        sup = sup.max(r.abs());
    }
    Some(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn flat_fixed_point_stays_zero() {
        let grid = GridSpec::new(1, 16).unwrap();
        let sp = Spectral::new(grid);
        let flat = Form11::flat(grid);
        let vol = flat.det_density();
        let cfg = FlowConfig { t_end: 1.0, ..FlowConfig::default() };
        let (phi, trace) = chern_ricci_flow(&sp, &flat, &flat, &vol, &cfg).unwrap();
        assert!(phi.sup_abs() < 1e-13, "sup {}", phi.sup_abs());
        assert!(trace.steps > 0);
        let times: Vec<f64> = trace.samples.iter().map(|s| s.t).collect();
        assert!(times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rejects_bad_volume_normalization() {
        let grid = GridSpec::new(1, 16).unwrap();
        let sp = Spectral::new(grid);
        let flat = Form11::flat(grid);
        let vol = TopDensity::constant(grid, 2.0);
        assert!(chern_ricci_flow(&sp, &flat, &flat, &vol, &FlowConfig::default()).is_err());
    }
}
