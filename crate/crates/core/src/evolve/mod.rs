//! Time evolution of perturbed profiles, phase tracking and bound reports.
//!
//! The nonlinear solver evolves the perturbation `v` of the profile in a
//! well-balanced form `v_t = D(ubar + v) - D(ubar)`, so `v = 0` is an exact
//! discrete steady state. For one-parameter families the solver runs in a
//! comoving frame whose shift `sigma(t)` keeps `<v, ubar'> = 0`; the lab-frame
//! perturbation `u~ - ubar` is reconstructed at every snapshot.

mod probe;
mod report;
mod stepper;
mod track;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{endstate_spectrum, FluxModel, Side};
use crate::profile::Profile;
use stepper::Stepper;

pub use probe::{green_probe, GreenProbe, ProbeColumn, ProbeOptions};
pub use report::{bound_report, BoundReport, Ceilings, LpSlope};
pub use track::{
    asymptotic_location, fit_shift, track_phase, track_phase_oc, AsymptoticLocation, ShockTrack, TrackMethod,
    TrackOptions,
};

/// Relative tolerance of the tracking cross-checks, in units of `E_0`.
pub const TOL_TRACK: f64 = 0.05;
/// Per-step tolerance of the discrete mass balance.
pub const TOL_CONS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    /// Comoving frame for one-parameter families, lab frame otherwise.
    Auto,
    Tracked,
    Lab,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveControls {
    pub dx: f64,
    pub dt: f64,
    /// Half-width of the domain; default `a_max T + margin`.
    pub x_dom: Option<f64>,
    /// Extra half-width beyond the fastest signal; default `20 / eta + 6 sqrt(4 beta_max T)`,
    /// which keeps boundary inflow away from the shock layer for the whole run.
    pub margin: Option<f64>,
    /// Courant number limit for the explicit convection.
    pub cfl: f64,
    /// Snapshot spacing `max(snapshot_min, snapshot_rel * t)`.
    pub snapshot_min: f64,
    pub snapshot_rel: f64,
    pub frame: Frame,
    /// Admissible `E_0`; a nonlinear run aborts once `|u|_inf > 10 e0_cap`,
    /// a linearized one once `|v|_inf > 1000 |v0|_inf`.
    pub e0_cap: f64,
    /// Relaxation time of the phase condition in steps.
    pub relax_steps: f64,
    pub min_dt: f64,
}

impl Default for EvolveControls {
    fn default() -> Self {
        Self {
            dx: 0.2,
            dt: 0.1,
            x_dom: None,
            margin: None,
            cfl: 0.6,
            snapshot_min: 0.25,
            snapshot_rel: 0.04,
            frame: Frame::Auto,
            e0_cap: 0.1,
            relax_steps: 10.0,
            min_dt: 1e-6,
        }
    }
}

impl EvolveControls {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        pos(self.dx, "dx")?;
        pos(self.dt, "dt")?;
        pos(self.cfl, "cfl")?;
        pos(self.snapshot_min, "snapshot_min")?;
        pos(self.e0_cap, "e0_cap")?;
        pos(self.relax_steps, "relax_steps")?;
        pos(self.min_dt, "min_dt")?;
        if !(self.snapshot_rel >= 0.0 && self.snapshot_rel < 1.0) {
            return Err(Error::Config("snapshot_rel must lie in [0, 1)".into()));
        }
        if let Some(x) = self.x_dom {
            pos(x, "x_dom")?;
        }
        if let Some(m) = self.margin {
            pos(m, "margin")?;
        }
        Ok(())
    }
}

/// Initial perturbation `u0 = u~(., 0) - ubar`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    Zero,
    /// `e0 (1 + |x|)^{-3/2} d`, `d` a direction (default all ones).
    Algebraic { e0: f64, direction: Option<Vec<f64>> },
    /// `e0 ubar'(x)`.
    TranslationMode { e0: f64 },
    /// Gaussian of total mass `mass` and standard deviation `width`.
    Gaussian { mass: f64, center: f64, width: f64, direction: Option<Vec<f64>> },
    /// Values on the evolution grid (see [`evolution_grid`]), node-major.
    Samples { values: Vec<f64> },
}

impl InitialData {
    pub fn sample(&self, bg: &Background) -> Result<Vec<f64>> {
        let n = bg.n;
        let dir = |d: &Option<Vec<f64>>| -> Result<Vec<f64>> {
            match d {
                None => Ok(vec![1.0; n]),
                Some(v) if v.len() == n => Ok(v.clone()),
                Some(v) => Err(Error::Config(format!("direction has {} entries, expected {n}", v.len()))),
            }
        };
        let mut out = vec![0.0; bg.grid.len() * n];
        match self {
            InitialData::Zero => {}
            InitialData::Algebraic { e0, direction } => {
                let d = dir(direction)?;
                for (i, &x) in bg.grid.iter().enumerate() {
                    let s = e0 * (1.0 + x.abs()).powf(-1.5);
                    for c in 0..n {
                        out[i * n + c] = s * d[c];
                    }
                }
            }
            InitialData::TranslationMode { e0 } => {
                for (o, d) in out.iter_mut().zip(&bg.ubar_x) {
                    *o = e0 * d;
                }
            }
            InitialData::Gaussian { mass, center, width, direction } => {
                if !(*width > 0.0) {
                    return Err(Error::Config("gaussian width must be positive".into()));
                }
                let d = dir(direction)?;
                let norm = mass / (width * (2.0 * std::f64::consts::PI).sqrt());
                for (i, &x) in bg.grid.iter().enumerate() {
                    let z = (x - center) / width;
                    let s = norm * (-0.5 * z * z).exp();
                    for c in 0..n {
                        out[i * n + c] = s * d[c];
                    }
                }
            }
            InitialData::Samples { values } => {
                if values.len() != out.len() {
                    return Err(Error::Config(format!(
                        "initial samples have {} entries, grid needs {}",
                        values.len(),
                        out.len()
                    )));
                }
                out.copy_from_slice(values);
            }
        }
        Ok(out)
    }
}

/// Profile sampled on the uniform evolution grid.
#[derive(Debug, Clone)]
pub struct Background {
    pub n: usize,
    pub dx: f64,
    pub grid: Vec<f64>,
    pub ubar: Vec<f64>,
    pub ubar_x: Vec<f64>,
    ghost_left: Vec<f64>,
    ghost_right: Vec<f64>,
    core: f64,
}

impl Background {
    pub fn new(profile: &Profile, dx: f64, x_dom: f64) -> Self {
        let half = (x_dom / dx).ceil() as i64;
        let grid: Vec<f64> = (-half..=half).map(|k| k as f64 * dx).collect();
        let n = profile.n();
        let mut ubar = Vec::with_capacity(grid.len() * n);
        let mut ubar_x = Vec::with_capacity(grid.len() * n);
        for &x in &grid {
            let (u, du) = profile.eval_with_derivative(x);
            ubar.extend(u.iter());
            ubar_x.extend(du.iter());
        }
        let ghost_left = profile.eval(grid[0] - dx).iter().copied().collect();
        let ghost_right = profile.eval(grid[grid.len() - 1] + dx).iter().copied().collect();
        let eta = profile.eta.max(1e-3);
        Self { n, dx, grid, ubar, ubar_x, ghost_left, ghost_right, core: 40.0 / eta }
    }

    pub fn nodes(&self) -> usize {
        self.grid.len()
    }

    fn with_ghosts(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.ubar.len() + 2 * self.n);
        v.extend(&self.ghost_left);
        v.extend(&self.ubar);
        v.extend(&self.ghost_right);
        v
    }

    /// `ubar(x + d) - ubar(x)` at the nodes. Outside the profile core the
    /// first-order expansion is used, which is exact to rounding there.
    pub fn shift_difference(&self, profile: &Profile, d: f64) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; self.ubar.len()];
        if d == 0.0 {
            return out;
        }
        for (i, &x) in self.grid.iter().enumerate() {
            if x.abs() <= self.core + d.abs() {
                let u = profile.eval(x + d);
                for c in 0..n {
                    out[i * n + c] = u[c] - self.ubar[i * n + c];
                }
            } else {
                for c in 0..n {
                    out[i * n + c] = self.ubar_x[i * n + c] * d;
                }
            }
        }
        out
    }
}

/// `v(x_i + s)` for node-major data on a uniform grid, by 4-point Lagrange
/// interpolation with constant extension past the ends.
pub fn shift_samples(v: &[f64], n: usize, dx: f64, s: f64) -> Vec<f64> {
    if s == 0.0 {
        return v.to_vec();
    }
    let nodes = v.len() / n;
    let q = s / dx;
    let m = q.floor();
    let r = q - m;
    let m = m as i64;
    let w = [
        -r * (r - 1.0) * (r - 2.0) / 6.0,
        (r + 1.0) * (r - 1.0) * (r - 2.0) / 2.0,
        -(r + 1.0) * r * (r - 2.0) / 2.0,
        (r + 1.0) * r * (r - 1.0) / 6.0,
    ];
    let last = nodes as i64 - 1;
    let mut out = vec![0.0; v.len()];
    for i in 0..nodes as i64 {
        for (k, wk) in w.iter().enumerate() {
            let j = (i + m + k as i64 - 1).clamp(0, last) as usize;
            for c in 0..n {
                out[i as usize * n + c] += wk * v[j * n + c];
            }
        }
    }
    out
}

/// Largest characteristic speed at the endstates.
pub fn max_speed(model: &FluxModel) -> Result<f64> {
    let mut a: f64 = 0.0;
    for side in [Side::Minus, Side::Plus] {
        let s = endstate_spectrum(model, side)?;
        for v in &s.a {
            a = a.max(v.abs());
        }
    }
    Ok(a)
}

fn domain_half_width(model: &FluxModel, profile: &Profile, t_final: f64, c: &EvolveControls) -> Result<f64> {
    if let Some(x) = c.x_dom {
        return Ok(x);
    }
    let margin = match c.margin {
        Some(m) => m,
        None => {
            let mut beta: f64 = 0.0;
            for side in [Side::Minus, Side::Plus] {
                beta = endstate_spectrum(model, side)?.beta.iter().fold(beta, |b, v| b.max(v.abs()));
            }
            20.0 / profile.eta.max(1e-3) + 6.0 * (4.0 * beta * t_final).sqrt()
        }
    };
    Ok(max_speed(model)? * t_final + margin)
}

/// The uniform grid used by [`evolve_nonlinear`] for these inputs.
pub fn evolution_grid(model: &FluxModel, profile: &Profile, t_final: f64, c: &EvolveControls) -> Result<Vec<f64>> {
    let x = domain_half_width(model, profile, t_final, c)?;
    let half = (x / c.dx).ceil() as i64;
    Ok((-half..=half).map(|k| k as f64 * c.dx).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeInfo {
    pub dt: f64,
    pub dx: f64,
    pub x_dom: f64,
    pub space_order: u32,
    pub time_order: u32,
    pub steps: usize,
    pub frame: Frame,
    pub linear: bool,
    /// Largest per-step defect of the discrete mass balance.
    pub conservation_defect: f64,
    pub step_halvings: u32,
}

/// Stored trajectory of a perturbation.
#[derive(Debug, Clone)]
pub struct PerturbationField {
    pub n: usize,
    pub grid: Vec<f64>,
    pub times: Vec<f64>,
    /// Lab-frame `u~ - ubar` per snapshot, node-major.
    pub values: Vec<Vec<f64>>,
    /// Perturbation in the solver frame, `u~(x + sigma) - ubar(x)`.
    pub solver_values: Vec<Vec<f64>>,
    /// Solver-frame shift `sigma(t_j)` and its rate.
    pub frame_shift: Vec<f64>,
    pub frame_speed: Vec<f64>,
    /// `int (u~ - ubar) dx` per snapshot and component.
    pub mass: Vec<Vec<f64>>,
    pub u0: Vec<f64>,
    /// `sup |u0| (1 + |x|)^{3/2}`.
    pub e0: f64,
    pub background: Background,
    pub scheme: SchemeInfo,
}

impl PerturbationField {
    pub fn nodes(&self) -> usize {
        self.grid.len()
    }

    pub fn dx(&self) -> f64 {
        self.scheme.dx
    }

    /// `u~(x + delta, t_j) - ubar(x)` at the nodes.
    pub fn centered(&self, profile: &Profile, j: usize, delta: f64) -> Vec<f64> {
        let s = delta - self.frame_shift[j];
        let mut u = shift_samples(&self.solver_values[j], self.n, self.dx(), s);
        if s != 0.0 {
            for (a, b) in u.iter_mut().zip(self.background.shift_difference(profile, s)) {
                *a += b;
            }
        }
        u
    }

    /// Max norm of component-wise sup over the grid at snapshot `j`.
    pub fn sup_norm(&self, j: usize) -> f64 {
        self.values[j].iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    /// Snapshot CSV `x, t, u_1, ..., u_n` for at most `max_times` roughly
    /// logarithmically spaced snapshots (plus the first and last).
    pub fn write_csv<W: Write>(&self, w: W, max_times: usize) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["x".to_string(), "t".to_string()];
        header.extend((1..=self.n).map(|c| format!("u{c}")));
        wr.write_record(&header)?;
        for j in self.log_spaced(max_times) {
            for (i, x) in self.grid.iter().enumerate() {
                let mut rec = vec![format!("{x:.6}"), format!("{:.6}", self.times[j])];
                rec.extend((0..self.n).map(|c| format!("{:.12e}", self.values[j][i * self.n + c])));
                wr.write_record(&rec)?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    fn log_spaced(&self, max_times: usize) -> Vec<usize> {
        let m = self.times.len();
        if m <= max_times.max(2) {
            return (0..m).collect();
        }
        let t_end = self.times[m - 1];
        let mut out = vec![0];
        for k in 1..max_times.max(2) {
            let target = (1.0 + t_end).powf(k as f64 / (max_times.max(2) - 1) as f64) - 1.0;
            let j = self.times.partition_point(|&t| t < target).min(m - 1);
            if *out.last().unwrap() != j {
                out.push(j);
            }
        }
        out
    }

    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(std::fs::File::create(dir.join("snapshots.csv"))?, 24)?;
        let meta = serde_json::json!({
            "scheme": self.scheme,
            "e0": self.e0,
            "times": self.times,
            "frame_shift": self.frame_shift,
            "mass": self.mass,
        });
        std::fs::write(dir.join("evolve.json"), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }
}

struct RawRun {
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    shift: Vec<f64>,
    speed: Vec<f64>,
    steps: usize,
    dt: f64,
    defect: f64,
}

enum StepFailure {
    Fatal(Error),
    Unstable,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m: f64, x| if x.is_finite() { m.max(x.abs()) } else { f64::INFINITY })
}

fn run_once(st: &mut Stepper, v0: &[f64], t_final: f64, dt_target: f64, c: &EvolveControls) -> std::result::Result<RawRun, StepFailure> {
    let steps = ((t_final / dt_target).ceil() as usize).max(1);
    let dt = t_final / steps as f64;
    st.relax = c.relax_steps * dt;
    let dx = st.dx;
    let mass = |v: &[f64]| v.iter().sum::<f64>() * dx;
    let limit = if st.is_linear() { 1e3 * sup(v0).max(f64::MIN_POSITIVE) } else { 10.0 * c.e0_cap };
    let mut v = v0.to_vec();
    let mut prev: Option<(Vec<f64>, stepper::Rhs, f64, f64)> = None;
    let mut sigma = 0.0;
    let mut out = RawRun {
        times: vec![0.0],
        states: vec![v.clone()],
        shift: vec![0.0],
        speed: vec![0.0],
        steps,
        dt,
        defect: 0.0,
    };
    let mut next_snap = c.snapshot_min;
    for k in 0..steps {
        let r = st.rhs(&v);
        if k == 0 {
            out.speed[0] = r.sigma_dot;
        }
        let mut kv = vec![0.0; v.len()];
        st.apply_k(&v, &mut kv);
        let m_now = mass(&v);
        let (v_new, sigma_new, expected) = match &prev {
            Some((vp, rp, sp, mp)) => {
                let mut kvp = vec![0.0; v.len()];
                st.apply_k(vp, &mut kvp);
                let rhs: Vec<f64> = (0..v.len())
                    .map(|i| 2.0 * v[i] - 0.5 * vp[i] + dt * (2.0 * (r.value[i] - kv[i]) - (rp.value[i] - kvp[i])))
                    .collect();
                let x = st.solve_implicit(1.5, dt, &rhs).map_err(|_| StepFailure::Unstable)?;
                let s = (2.0 * sigma - 0.5 * sp + dt * (2.0 * r.sigma_dot - rp.sigma_dot)) / 1.5;
                let e = (2.0 * m_now - 0.5 * mp + dt * (2.0 * r.boundary - rp.boundary)) / 1.5;
                (x, s, e)
            }
            None => {
                let rhs: Vec<f64> = (0..v.len()).map(|i| v[i] + dt * (r.value[i] - kv[i])).collect();
                let x = st.solve_implicit(1.0, dt, &rhs).map_err(|_| StepFailure::Unstable)?;
                (x, sigma + dt * r.sigma_dot, m_now + dt * r.boundary)
            }
        };
        let t = (k + 1) as f64 * dt;
        let norm = sup(&v_new);
        if !norm.is_finite() || !sigma_new.is_finite() {
            return Err(StepFailure::Unstable);
        }
        if norm > limit {
            return Err(StepFailure::Fatal(Error::BlowUp { t, norm }));
        }
        out.defect = out.defect.max((mass(&v_new) - expected).abs());
        let speed = r.sigma_dot;
        prev = Some((std::mem::replace(&mut v, v_new), r, sigma, m_now));
        sigma = sigma_new;
        if t >= next_snap - 1e-9 * dt || k + 1 == steps {
            out.times.push(t);
            out.states.push(v.clone());
            out.shift.push(sigma);
            out.speed.push(speed);
            next_snap = t + c.snapshot_min.max(c.snapshot_rel * t);
        }
    }
    Ok(out)
}

fn run(st: &mut Stepper, v0: &[f64], t_final: f64, dt0: f64, c: &EvolveControls) -> Result<(RawRun, u32)> {
    let mut dt = dt0;
    let mut halvings = 0;
    loop {
        if dt < c.min_dt {
            return Err(Error::StepUnderflow { t: 0.0 });
        }
        match run_once(st, v0, t_final, dt, c) {
            Ok(r) => return Ok((r, halvings)),
            Err(StepFailure::Fatal(e)) => return Err(e),
            Err(StepFailure::Unstable) => {
                dt *= 0.5;
                halvings += 1;
            }
        }
    }
}

/// `sup |u0| (1 + |x|)^{3/2}` over the grid.
pub fn initial_size(grid: &[f64], n: usize, u0: &[f64]) -> f64 {
    grid.iter()
        .enumerate()
        .map(|(i, x)| {
            let s = (0..n).fold(0.0, |m: f64, c| m.max(u0[i * n + c].abs()));
            s * (1.0 + x.abs()).powf(1.5)
        })
        .fold(0.0, f64::max)
}

fn evolve(
    model: &FluxModel,
    profile: &Profile,
    u0: &InitialData,
    t_final: f64,
    c: &EvolveControls,
    linear: bool,
) -> Result<PerturbationField> {
    c.validate()?;
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(Error::Config(format!("final time must be positive, got {t_final}")));
    }
    if profile.n() != model.dim() {
        return Err(Error::DomainError("profile and model dimensions differ".into()));
    }
    let x_dom = domain_half_width(model, profile, t_final, c)?;
    let bg = Background::new(profile, c.dx, x_dom);
    let n = bg.n;
    let v0 = u0.sample(&bg)?;
    let e0 = initial_size(&bg.grid, n, &v0);
    if !linear && e0 > c.e0_cap {
        return Err(Error::DomainError(format!("E_0 = {e0:e} exceeds the admissible cap {}", c.e0_cap)));
    }
    let frame = match (c.frame, linear) {
        (_, true) => Frame::Lab,
        (Frame::Auto, false) => {
            if profile.ell == 1 {
                Frame::Tracked
            } else {
                Frame::Lab
            }
        }
        (f, false) => f,
    };
    let tracked = frame == Frame::Tracked;
    let a_max = max_speed(model)?.max(1e-12);
    let dt0 = c.dt.min(c.cfl * c.dx / a_max);
    let mut st = Stepper::new(model, c.dx, bg.with_ghosts(), bg.ubar_x.clone(), linear, tracked);
    let (raw, halvings) = run(&mut st, &v0, t_final, dt0, c)?;
    let mut values = Vec::with_capacity(raw.states.len());
    for (j, s) in raw.states.iter().enumerate() {
        let sigma = raw.shift[j];
        if sigma == 0.0 {
            values.push(s.clone());
        } else {
            let mut u = shift_samples(s, n, c.dx, -sigma);
            for (a, b) in u.iter_mut().zip(bg.shift_difference(profile, -sigma)) {
                *a += b;
            }
            values.push(u);
        }
    }
    let mass = values
        .iter()
        .map(|u| (0..n).map(|cc| u.iter().skip(cc).step_by(n).sum::<f64>() * c.dx).collect())
        .collect();
    Ok(PerturbationField {
        n,
        grid: bg.grid.clone(),
        times: raw.times,
        values,
        solver_values: raw.states,
        frame_shift: raw.shift,
        frame_speed: raw.speed,
        mass,
        u0: v0,
        e0,
        background: bg,
        scheme: SchemeInfo {
            dt: raw.dt,
            dx: c.dx,
            x_dom,
            space_order: 2,
            time_order: 2,
            steps: raw.steps,
            frame,
            linear,
            conservation_defect: raw.defect,
            step_halvings: halvings,
        },
    })
}

/// Evolve `u~_t + f(u~)_x = (B(u~) u~_x)_x` from `u~(., 0) = ubar + u0` up to `t_final`.
pub fn evolve_nonlinear(
    model: &FluxModel,
    profile: &Profile,
    u0: &InitialData,
    t_final: f64,
    controls: &EvolveControls,
) -> Result<PerturbationField> {
    evolve(model, profile, u0, t_final, controls, false)
}

/// Evolve the linearization `v_t = (B v_x)_x - (A v)_x` about the profile.
pub fn evolve_linearized(
    model: &FluxModel,
    profile: &Profile,
    v0: &InitialData,
    t_final: f64,
    controls: &EvolveControls,
) -> Result<PerturbationField> {
    evolve(model, profile, v0, t_final, controls, true)
}

#[cfg(test)]
mod tests;
