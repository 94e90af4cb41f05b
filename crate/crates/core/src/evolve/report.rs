use serde::{Deserialize, Serialize};

use super::track::ShockTrack;
use super::PerturbationField;
use crate::error::{Error, Result};
use crate::model::FluxModel;
use crate::profile::{profile_family, Profile};
use crate::templates::{template_sum, TemplateParams};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LpSlope {
    /// `"1"`, `"2"` or `"inf"`.
    pub p: String,
    pub slope: Option<f64>,
    /// `"fitted"` or `"undefined"`.
    pub status: String,
    pub t_min: f64,
    pub t_max: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Ceilings {
    pub t_min: f64,
    pub t_max: f64,
    pub template: f64,
    pub delta_dot: f64,
    pub delta: f64,
    pub zeta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub times: Vec<f64>,
    /// `sup_x |u| / (theta + psi1 + psi2)` per time.
    pub template_ratio: Vec<f64>,
    /// `|delta'(t)| (1 + t)`.
    pub delta_dot_ratio: Vec<f64>,
    /// `|delta(t) - delta(inf)| (1 + t)^{1/2}`.
    pub delta_ratio: Vec<f64>,
    /// Running sup of `template_ratio + delta_dot_ratio`.
    pub zeta: Vec<f64>,
    pub l1: Vec<f64>,
    pub l2: Vec<f64>,
    pub linf: Vec<f64>,
    pub lp_slopes: Vec<LpSlope>,
    /// Smoothing ratio `sup|u_x|/T (t)` over `tau^{-1/2} sup|u|/T (t - tau)`, `tau ~ 1`.
    pub derivative_ratio: Vec<Option<f64>>,
    pub ceilings: Ceilings,
    pub e0: f64,
}

fn fit_slope(t: &[f64], y: &[f64]) -> Option<f64> {
    if t.len() < 2 || y.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    let xs: Vec<f64> = t.iter().map(|t| (1.0 + t).ln()).collect();
    let ys: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

fn window_max(t: &[f64], v: &[f64], lo: f64, hi: f64) -> f64 {
    t.iter().zip(v).filter(|(t, _)| **t >= lo && **t <= hi).map(|(_, v)| *v).fold(0.0, f64::max)
}

impl BoundReport {
    /// Largest ratios over `t in [t_min, t_max]`.
    pub fn ceilings(&self, t_min: f64, t_max: f64) -> Ceilings {
        Ceilings {
            t_min,
            t_max,
            template: window_max(&self.times, &self.template_ratio, t_min, t_max),
            delta_dot: window_max(&self.times, &self.delta_dot_ratio, t_min, t_max),
            delta: window_max(&self.times, &self.delta_ratio, t_min, t_max),
            zeta: window_max(&self.times, &self.zeta, t_min, t_max),
        }
    }

    /// Log-log slopes of the `L^p` norms against `1 + t` over `[t_min, t_max]`.
    pub fn slopes(&self, t_min: f64, t_max: f64) -> Vec<LpSlope> {
        let pick = |v: &[f64]| -> (Vec<f64>, Vec<f64>) {
            self.times
                .iter()
                .zip(v)
                .filter(|(t, _)| **t >= t_min && **t <= t_max)
                .map(|(t, v)| (*t, *v))
                .unzip()
        };
        [("1", &self.l1), ("2", &self.l2), ("inf", &self.linf)]
            .into_iter()
            .map(|(p, v)| {
                let (t, y) = pick(v);
                let slope = fit_slope(&t, &y);
                LpSlope {
                    p: p.to_string(),
                    slope,
                    status: if slope.is_some() { "fitted" } else { "undefined" }.to_string(),
                    t_min,
                    t_max,
                }
            })
            .collect()
    }
}

fn vec_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
}

/// Perturbation about the tracked family member at every snapshot.
fn centered_history(
    field: &PerturbationField,
    track: &ShockTrack,
    model: &FluxModel,
    profile: &Profile,
) -> Result<Vec<Vec<f64>>> {
    let bg = &field.background;
    (0..field.times.len())
        .map(|j| {
            if profile.ell == 1 {
                Ok(field.centered(profile, j, track.delta[j][0]))
            } else {
                let member = profile_family(model, profile, &track.delta[j])?;
                let mut u = field.values[j].clone();
                for (i, &x) in bg.grid.iter().enumerate() {
                    let w = member.eval(x);
                    for c in 0..field.n {
                        u[i * field.n + c] += bg.ubar[i * field.n + c] - w[c];
                    }
                }
                Ok(u)
            }
        })
        .collect()
}

/// Ratios of the pointwise bounds, `zeta`, `L^p` decay slopes and the smoothing ratio.
pub fn bound_report(
    field: &PerturbationField,
    track: &ShockTrack,
    model: &FluxModel,
    profile: &Profile,
    p: &TemplateParams,
) -> Result<BoundReport> {
    if track.times.len() != field.times.len() {
        return Err(Error::DomainError("track and field have different time grids".into()));
    }
    let n = field.n;
    let dx = field.dx();
    let grid = &field.grid;
    let times = &field.times;
    let m = times.len();
    let us = centered_history(field, track, model, profile)?;
    let mut template_ratio = Vec::with_capacity(m);
    let mut deriv_sup = Vec::with_capacity(m);
    let (mut l1, mut l2, mut linf) = (Vec::new(), Vec::new(), Vec::new());
    for (j, u) in us.iter().enumerate() {
        let t = times[j];
        let (mut r, mut rd) = (0.0f64, 0.0f64);
        let (mut a1, mut a2, mut ai) = (0.0, 0.0, 0.0f64);
        for (i, &x) in grid.iter().enumerate() {
            let ui = vec_abs(&u[i * n..(i + 1) * n]);
            let tm = template_sum(x, t, p);
            r = r.max(ui / tm);
            a1 += ui * dx;
            a2 += ui * ui * dx;
            ai = ai.max(ui);
            let (l, h, s) = if i == 0 {
                (0, 1, dx)
            } else if i + 1 == grid.len() {
                (i - 1, i, dx)
            } else {
                (i - 1, i + 1, 2.0 * dx)
            };
            let ux = (0..n).fold(0.0f64, |mm, c| mm.max(((u[h * n + c] - u[l * n + c]) / s).abs()));
            rd = rd.max(ux / tm);
        }
        template_ratio.push(r);
        deriv_sup.push(rd);
        l1.push(a1);
        l2.push(a2.sqrt());
        linf.push(ai);
    }
    let delta_dot_ratio: Vec<f64> =
        track.delta_dot.iter().zip(times).map(|(d, t)| vec_abs(d) * (1.0 + t)).collect();
    let delta_ratio: Vec<f64> = track
        .delta
        .iter()
        .zip(times)
        .map(|(d, t)| {
            let diff: Vec<f64> = d.iter().zip(&track.delta_infinity).map(|(a, b)| a - b).collect();
            vec_abs(&diff) * (1.0 + t).sqrt()
        })
        .collect();
    let mut zeta = Vec::with_capacity(m);
    let mut run: f64 = 0.0;
    for j in 0..m {
        run = run.max(template_ratio[j] + delta_dot_ratio[j]);
        zeta.push(run);
    }
    let tau = 1.0;
    let derivative_ratio = (0..m)
        .map(|j| {
            let target = times[j] - tau;
            if target < 0.0 {
                return None;
            }
            let k = times.partition_point(|&s| s <= target + 1e-12).checked_sub(1)?;
            let tau_eff = times[j] - times[k];
            let den = template_ratio[k] / tau_eff.sqrt();
            Some(if deriv_sup[j] == 0.0 { 0.0 } else { deriv_sup[j] / den })
        })
        .collect();
    let t_end = times[m - 1];
    let mut report = BoundReport {
        times: times.clone(),
        template_ratio,
        delta_dot_ratio,
        delta_ratio,
        zeta,
        l1,
        l2,
        linf,
        lp_slopes: Vec::new(),
        derivative_ratio,
        ceilings: Ceilings { t_min: 0.0, t_max: t_end, template: 0.0, delta_dot: 0.0, delta: 0.0, zeta: 0.0 },
        e0: field.e0,
    };
    report.ceilings = report.ceilings(0.0, t_end);
    report.lp_slopes = report.slopes(10.0_f64.min(0.5 * t_end), t_end);
    Ok(report)
}
