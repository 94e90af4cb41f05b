use serde::{Deserialize, Serialize};

use super::track::FamilyLattice;
use super::{evolve_linearized, EvolveControls, InitialData};
use crate::error::{Error, Result};
use crate::model::FluxModel;
use crate::profile::{predicted_tail_rate, Profile};
use crate::templates::{green_envelope, ExcitedKernel, TemplateParams};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeOptions {
    pub controls: EvolveControls,
    /// Component of the initial delta mass.
    pub component: usize,
    /// Samples with `t < t_min` are excluded from the fit.
    pub t_min: f64,
    /// Points where the envelope is below this fraction of its sup at that time are excluded.
    pub significance: f64,
    /// Allowed relative change of the fitted constant between consecutive widths.
    pub stability: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            controls: EvolveControls { dx: 0.05, dt: 0.025, ..EvolveControls::default() },
            component: 0,
            t_min: 1.0,
            significance: 1e-6,
            stability: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeColumn {
    pub width: f64,
    pub dx: f64,
    /// Fitted constants for the `E`-subtracted remainder over the whole sample set,
    /// the first half and the second half of the run.
    pub c_subtracted: f64,
    pub c_subtracted_early: f64,
    pub c_subtracted_late: f64,
    /// Same for the raw column.
    pub c_raw: f64,
    pub c_raw_early: f64,
    pub c_raw_late: f64,
    pub sup_remainder_final: f64,
    pub sup_raw_final: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GreenProbe {
    pub y0: f64,
    pub t_final: f64,
    pub columns: Vec<ProbeColumn>,
    /// Largest `|C(w/2) / C(w) - 1|` over consecutive widths.
    pub width_change: f64,
    pub subtracted_stable: bool,
    /// Growth of the raw column's fitted constant from the first to the second half.
    pub raw_growth: f64,
    pub raw_fails: bool,
    pub verdict: bool,
}

/// Evolves narrow Gaussian columns centred at `y0` under the linearized flow,
/// removes the excited part `E(x,t;y0)` and fits the remainder against the
/// Green-function envelope.
pub fn green_probe(
    model: &FluxModel,
    profile: &Profile,
    y0: f64,
    widths: &[f64],
    t_final: f64,
    opts: &ProbeOptions,
) -> Result<GreenProbe> {
    if widths.is_empty() {
        return Err(Error::DomainError("at least one width is required".into()));
    }
    let n = model.dim();
    if opts.component >= n {
        return Err(Error::DomainError(format!("component {} out of range", opts.component)));
    }
    let ell = profile.ell;
    let params = TemplateParams::from_model(model, ell, predicted_tail_rate(model)?)?;
    let kernel = ExcitedKernel::new(params.clone())?;
    let mut columns = Vec::with_capacity(widths.len());
    for &w in widths {
        let mut c = opts.controls.clone();
        c.frame = super::Frame::Lab;
        c.dx = c.dx.min(w / 4.0);
        c.dt = c.dt.min(c.dx / 2.0);
        let mut dir = vec![0.0; n];
        dir[opts.component] = 1.0;
        let v0 = InitialData::Gaussian { mass: 1.0, center: y0, width: w, direction: Some(dir) };
        let field = evolve_linearized(model, profile, &v0, t_final, &c)?;
        let bg = &field.background;
        if y0 <= bg.grid[0] || y0 >= bg.grid[bg.nodes() - 1] {
            return Err(Error::DomainError(format!("y0 = {y0} lies outside the grid")));
        }
        let tangents: Vec<Vec<f64>> = if ell == 1 {
            vec![bg.ubar_x.iter().map(|v| -v).collect()]
        } else {
            FamilyLattice::new(model, profile, bg, &vec![0.0; ell], 1e-4)?.eval(&vec![0.0; ell]).2
        };
        let half = 0.5 * t_final;
        let mut col = ProbeColumn {
            width: w,
            dx: c.dx,
            c_subtracted: 0.0,
            c_subtracted_early: 0.0,
            c_subtracted_late: 0.0,
            c_raw: 0.0,
            c_raw_early: 0.0,
            c_raw_late: 0.0,
            sup_remainder_final: 0.0,
            sup_raw_final: 0.0,
        };
        let last = field.times.len() - 1;
        for (j, &t) in field.times.iter().enumerate() {
            if t < opts.t_min && j != last {
                continue;
            }
            let e = kernel.excited_kernel(y0, t);
            let env: Vec<f64> = bg.grid.iter().map(|&x| green_envelope(x, t, y0, &params, 0, 0)).collect();
            let env_max = env.iter().cloned().fold(0.0, f64::max);
            let (mut cs, mut cr, mut sr, mut sv) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
            for i in 0..bg.nodes() {
                let mut rem: f64 = 0.0;
                let mut raw: f64 = 0.0;
                for cc in 0..n {
                    let v = field.values[j][i * n + cc];
                    let ex: f64 = (0..ell).map(|r| tangents[r][i * n + cc] * e[(r, opts.component)]).sum();
                    rem = rem.max((v - ex).abs());
                    raw = raw.max(v.abs());
                }
                sr = sr.max(rem);
                sv = sv.max(raw);
                if env[i] >= opts.significance * env_max && env[i] > 0.0 {
                    cs = cs.max(rem / env[i]);
                    cr = cr.max(raw / env[i]);
                }
            }
            if j == last {
                col.sup_remainder_final = sr;
                col.sup_raw_final = sv;
            }
            if t < opts.t_min {
                continue;
            }
            col.c_subtracted = col.c_subtracted.max(cs);
            col.c_raw = col.c_raw.max(cr);
            if t <= half {
                col.c_subtracted_early = col.c_subtracted_early.max(cs);
                col.c_raw_early = col.c_raw_early.max(cr);
            } else {
                col.c_subtracted_late = col.c_subtracted_late.max(cs);
                col.c_raw_late = col.c_raw_late.max(cr);
            }
        }
        columns.push(col);
    }
    let width_change = columns
        .windows(2)
        .map(|p| (p[1].c_subtracted / p[0].c_subtracted - 1.0).abs())
        .fold(0.0, f64::max);
    let last = columns.last().unwrap();
    let raw_growth = last.c_raw_late / last.c_raw_early.max(1e-300);
    let subtracted_stable = columns.len() >= 2 && width_change <= opts.stability && last.c_subtracted.is_finite();
    let raw_fails = raw_growth > 1.0 + opts.stability;
    Ok(GreenProbe {
        y0,
        t_final,
        columns,
        width_change,
        subtracted_stable,
        raw_growth,
        raw_fails,
        verdict: subtracted_stable && raw_fails,
    })
}
