//! Phase tracking: the shift functional, its overcompressive variant, the
//! least-squares fit and the mass-predicted asymptotic location.

use serde::{Deserialize, Serialize};

use super::{Background, PerturbationField};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, State};
use crate::model::{classify, endstate_spectrum, outgoing_modes, FluxModel, ShockKind, Side};
use crate::profile::{chart_projector, family_tangent, profile_family, trapezoid_weights, Profile};
use crate::templates::ExcitedKernel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackMethod {
    Functional,
    Fit,
    Mass,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackOptions {
    /// Stop once the relative change of the whole history drops below this.
    pub rtol: f64,
    pub max_iterations: usize,
    /// Relative tolerance of the orthogonality checks (scaled by the initial mass).
    pub orthogonality_rtol: f64,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self { rtol: 1e-8, max_iterations: 10, orthogonality_rtol: 1e-4 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShockTrack {
    pub method: TrackMethod,
    pub times: Vec<f64>,
    /// `delta(t_j)`, one `ell`-vector per time.
    pub delta: Vec<Vec<f64>>,
    pub delta_dot: Vec<Vec<f64>>,
    /// Least-squares shift (one-parameter families only).
    pub delta_fit: Option<Vec<f64>>,
    pub delta_infinity: Vec<f64>,
    /// How `delta_infinity` was obtained.
    pub delta_infinity_method: TrackMethod,
    pub delta_star: Option<Vec<f64>>,
    /// Outgoing-mode masses `m_j`.
    pub masses: Vec<f64>,
    pub iterations: usize,
    pub last_change: f64,
    pub orthogonality_residual: Option<f64>,
    pub max_source_orthogonality: Option<f64>,
    pub e0: f64,
}

impl ShockTrack {
    /// First component of `delta` per time.
    pub fn delta_scalar(&self) -> Vec<f64> {
        self.delta.iter().map(|d| d[0]).collect()
    }

    pub fn delta_dot_scalar(&self) -> Vec<f64> {
        self.delta_dot.iter().map(|d| d[0]).collect()
    }

    /// `max_j |delta(t_j) - delta_fit(t_j)|` over `t_j >= t_min`.
    pub fn fit_discrepancy(&self, t_min: f64) -> Option<f64> {
        let fit = self.delta_fit.as_ref()?;
        Some(
            self.times
                .iter()
                .zip(&self.delta)
                .zip(fit)
                .filter(|((t, _), _)| **t >= t_min)
                .map(|((_, d), f)| (d[0] - f).abs())
                .fold(0.0, f64::max),
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymptoticLocation {
    pub delta_infinity: Vec<f64>,
    pub masses: Vec<f64>,
    pub rank: usize,
    pub kind: ShockKind,
}

fn rank_of(m: &Matrix) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > 1e-10 * smax.max(1e-300)).count()
}

fn profile_mass(profile: &Profile, values: &[State]) -> State {
    let w = trapezoid_weights(&profile.grid);
    let mut m = State::zeros(profile.n());
    for (wk, v) in w.iter().zip(values) {
        m += v * *wk;
    }
    m
}

/// Mass-predicted asymptotic location: solves
/// `int (u~_0 - ubar) = int (ubar^delta - ubar) + sum_j m_j r_j` over outgoing modes `r_j`.
pub fn asymptotic_location(model: &FluxModel, profile: &Profile, mass0: &[f64]) -> Result<AsymptoticLocation> {
    let n = model.dim();
    if mass0.len() != n {
        return Err(Error::DomainError(format!("mass has {} entries, expected {n}", mass0.len())));
    }
    let sm = endstate_spectrum(model, Side::Minus)?;
    let sp = endstate_spectrum(model, Side::Plus)?;
    let cls = classify(&sm, &sp, profile.ell)?;
    if !matches!(cls.kind, ShockKind::Lax | ShockKind::Overcompressive) {
        return Err(Error::WrongKind(format!(
            "the mass relation applies to Lax and overcompressive shocks, not {:?}",
            cls.kind
        )));
    }
    let out = outgoing_modes(&sm, &sp);
    let ell = profile.ell;
    let jac = if ell == 1 {
        Matrix::from_column_slice(n, 1, (&model.u_minus - &model.u_plus).as_slice())
    } else {
        let t = family_tangent(model, profile, &vec![0.0; ell], 1e-4)?;
        let mut j = Matrix::zeros(n, ell);
        for (k, col) in t.iter().enumerate() {
            j.set_column(k, &profile_mass(profile, col));
        }
        j
    };
    let k = out.ncols();
    let mut sys = Matrix::zeros(n, ell + k);
    sys.view_mut((0, 0), (n, ell)).copy_from(&jac);
    sys.view_mut((0, ell), (n, k)).copy_from(&out);
    let rank = rank_of(&sys);
    if rank < n {
        return Err(Error::RankDeficient { rank, expected: n });
    }
    let rhs = State::from_column_slice(mass0);
    let x = sys
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::DomainError(e.to_string()))?;
    let mut delta: Vec<f64> = x.iter().take(ell).copied().collect();
    if ell > 1 {
        // The chart coordinate is exactly the projected mass.
        let pi = chart_projector(model)?;
        delta = (pi * &rhs).iter().copied().collect();
    }
    Ok(AsymptoticLocation { delta_infinity: delta, masses: x.iter().skip(ell).copied().collect(), rank, kind: cls.kind })
}

/// Least-squares shift at snapshot `j`: `argmin_d |u~(., t_j) - ubar(. - d)|_2`.
pub fn fit_shift(field: &PerturbationField, profile: &Profile, j: usize) -> Result<f64> {
    if profile.ell != 1 {
        return Err(Error::WrongKind("the shift fit needs a one-parameter family".into()));
    }
    let n = field.n;
    let bg = &field.background;
    let v = &field.solver_values[j];
    let core = bg.core;
    let idx: Vec<usize> = (0..bg.nodes()).filter(|&i| bg.grid[i].abs() <= core).collect();
    // Work in the solver frame: u~(xi + sigma) = ubar(xi) + v(xi) ~ ubar(xi + sigma - delta).
    let mut d = 0.0;
    for _ in 0..50 {
        let (mut num, mut den) = (0.0, 0.0);
        for &i in &idx {
            let x = bg.grid[i];
            let (u, du) = profile.eval_with_derivative(x - d);
            for c in 0..n {
                let r = bg.ubar[i * n + c] + v[i * n + c] - u[c];
                num += du[c] * r;
                den += du[c] * du[c];
            }
        }
        let step = num / den;
        d -= step;
        if step.abs() < 1e-15 * (1.0 + d.abs()) {
            break;
        }
    }
    Ok(field.frame_shift[j] + d)
}

/// Second-order derivative of samples on a nonuniform time grid.
fn time_derivative(t: &[f64], y: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = t.len();
    let ell = y.first().map_or(0, |v| v.len());
    if m < 3 {
        let d = if m == 2 {
            (0..ell).map(|k| (y[1][k] - y[0][k]) / (t[1] - t[0])).collect()
        } else {
            vec![0.0; ell]
        };
        return vec![d; m];
    }
    let three = |i0: usize, at: usize| -> Vec<f64> {
        let (a, b, c) = (t[i0], t[i0 + 1], t[i0 + 2]);
        let x = t[at];
        let wa = (2.0 * x - b - c) / ((a - b) * (a - c));
        let wb = (2.0 * x - a - c) / ((b - a) * (b - c));
        let wc = (2.0 * x - a - b) / ((c - a) * (c - b));
        (0..ell).map(|k| wa * y[i0][k] + wb * y[i0 + 1][k] + wc * y[i0 + 2][k]).collect()
    };
    (0..m)
        .map(|i| {
            if i == 0 {
                three(0, 0)
            } else if i == m - 1 {
                three(m - 3, m - 1)
            } else {
                three(i - 1, i)
            }
        })
        .collect()
}

fn trapezoid_time_weights(t: &[f64], upto: usize) -> Vec<f64> {
    let mut w = vec![0.0; upto + 1];
    for k in 0..upto {
        let h = t[k + 1] - t[k];
        w[k] += 0.5 * h;
        w[k + 1] += 0.5 * h;
    }
    w
}

fn central_x(g: &[f64], n: usize, dx: f64) -> Vec<f64> {
    let nodes = g.len() / n;
    let mut out = vec![0.0; g.len()];
    for i in 0..nodes {
        let (l, r, h) = if i == 0 {
            (0, 1, dx)
        } else if i == nodes - 1 {
            (nodes - 2, nodes - 1, dx)
        } else {
            (i - 1, i + 1, 2.0 * dx)
        };
        for c in 0..n {
            out[i * n + c] = (g[r * n + c] - g[l * n + c]) / h;
        }
    }
    out
}

/// Nonlinear flux remainder about a background state.
struct Remainder<'a> {
    model: &'a FluxModel,
    n: usize,
    dx: f64,
    ubar: &'a [f64],
    ubar_x: &'a [f64],
    fbar: Vec<f64>,
    dfbar: Vec<Matrix>,
    constant_b: bool,
}

impl<'a> Remainder<'a> {
    fn new(model: &'a FluxModel, dx: f64, ubar: &'a [f64], ubar_x: &'a [f64]) -> Self {
        let n = model.dim();
        let nodes = ubar.len() / n;
        let mut fbar = vec![0.0; ubar.len()];
        let mut dfbar = Vec::with_capacity(nodes);
        for i in 0..nodes {
            let u = &ubar[i * n..(i + 1) * n];
            model.f_into(u, &mut fbar[i * n..(i + 1) * n]);
            dfbar.push(model.df(&State::from_column_slice(u)));
        }
        Self { model, n, dx, ubar, ubar_x, fbar, dfbar, constant_b: model.has_constant_viscosity() }
    }

    /// `Q = -(f(ubar + u) - f(ubar) - df(ubar) u) + B(ubar + u)(ubar + u)_x
    ///      - B(ubar) ubar_x - B(ubar) u_x - (dB(ubar) u) ubar_x`.
    fn q(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n;
        let nodes = u.len() / n;
        let mut out = vec![0.0; u.len()];
        let mut w = vec![0.0; n];
        let mut fw = vec![0.0; n];
        for i in 0..nodes {
            let s = i * n..(i + 1) * n;
            for c in 0..n {
                w[c] = self.ubar[i * n + c] + u[i * n + c];
            }
            self.model.f_into(&w, &mut fw);
            let df = &self.dfbar[i];
            for c in 0..n {
                let lin: f64 = (0..n).map(|d| df[(c, d)] * u[i * n + d]).sum();
                out[i * n + c] = -(fw[c] - self.fbar[s.start + c] - lin);
            }
        }
        if !self.constant_b {
            let ux = central_x(u, n, self.dx);
            for i in 0..nodes {
                let ub = State::from_column_slice(&self.ubar[i * n..(i + 1) * n]);
                let ui = State::from_column_slice(&u[i * n..(i + 1) * n]);
                let ubx = State::from_column_slice(&self.ubar_x[i * n..(i + 1) * n]);
                let uix = State::from_column_slice(&ux[i * n..(i + 1) * n]);
                let bw = self.model.b(&(&ub + &ui));
                let bb = self.model.b(&ub);
                let term = &bw * (&ubx + &uix) - &bb * &ubx - &bb * &uix - self.model.db(&ub, &ui) * &ubx;
                for c in 0..n {
                    out[i * n + c] += term[c];
                }
            }
        }
        out
    }

    /// Flux of `L^{other} u - L^{self} u`, i.e. `-(A' - A) u + (B' - B) u_x`.
    fn operator_difference(&self, other: &Remainder, u: &[f64]) -> Vec<f64> {
        let n = self.n;
        let nodes = u.len() / n;
        let ux = central_x(u, n, self.dx);
        let mut out = vec![0.0; u.len()];
        for i in 0..nodes {
            let ui = State::from_column_slice(&u[i * n..(i + 1) * n]);
            let uix = State::from_column_slice(&ux[i * n..(i + 1) * n]);
            let a = |r: &Remainder| -> State {
                let ub = State::from_column_slice(&r.ubar[i * n..(i + 1) * n]);
                let ubx = State::from_column_slice(&r.ubar_x[i * n..(i + 1) * n]);
                let mut v = &r.dfbar[i] * &ui;
                if !r.constant_b {
                    v -= r.model.db(&ub, &ui) * ubx;
                }
                v
            };
            let mut term = -(a(other) - a(self));
            if !self.constant_b {
                let bo = self.model.b(&State::from_column_slice(&other.ubar[i * n..(i + 1) * n]));
                let bs = self.model.b(&State::from_column_slice(&self.ubar[i * n..(i + 1) * n]));
                term += (bo - bs) * &uix;
            }
            for c in 0..n {
                out[i * n + c] = term[c];
            }
        }
        out
    }
}

/// Sparse node list of a node-major field, dropping entries below `floor`.
struct Sparse {
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl Sparse {
    fn new(g: &[f64], n: usize, floor: f64) -> Self {
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for i in 0..g.len() / n {
            let s = &g[i * n..(i + 1) * n];
            if s.iter().any(|v| v.abs() > floor) {
                idx.push(i);
                val.extend_from_slice(s);
            }
        }
        Self { idx, val }
    }
}

/// Space integrals against the excited kernel on the evolution grid.
struct KernelQuadrature<'a> {
    kernel: &'a ExcitedKernel,
    grid: &'a [f64],
    dx: f64,
    n: usize,
    ell: usize,
    speed_left: f64,
    speed_right: f64,
    beta: f64,
    limit: Vec<f64>,
}

impl<'a> KernelQuadrature<'a> {
    fn new(kernel: &'a ExcitedKernel, bg: &'a Background) -> Self {
        let p = &kernel.params;
        let speed_left = p.a_minus.iter().cloned().fold(0.0, f64::max);
        let speed_right = p.a_plus.iter().map(|a| -a).fold(0.0, f64::max);
        let beta = p.beta_minus.iter().chain(&p.beta_plus).cloned().fold(0.0, f64::max);
        let (ell, n) = (p.ell, p.n);
        let mut limit = vec![0.0; bg.nodes() * ell * n];
        for (i, &y) in bg.grid.iter().enumerate() {
            let e = kernel.excited_limit(y);
            for r in 0..ell {
                for c in 0..n {
                    limit[(i * ell + r) * n + c] = e[(r, c)];
                }
            }
        }
        Self { kernel, grid: &bg.grid, dx: bg.dx, n, ell, speed_left, speed_right, beta, limit }
    }

    /// Range of `y` outside of which `e(y, tau)` vanishes to rounding.
    fn window(&self, tau: f64) -> (f64, f64) {
        let spread = 9.0 * (4.0 * self.beta * tau).sqrt();
        (-(self.speed_left * tau + spread) - self.dx, self.speed_right * tau + spread + self.dx)
    }

    /// `int (e(y, tau) - [minus_limit] e(y, inf)) g(y) dy` for sparse `g`.
    fn apply(&self, tau: f64, g: &Sparse, minus_limit: bool) -> Vec<f64> {
        let (ell, n) = (self.ell, self.n);
        let mut acc = vec![0.0; ell];
        let mut e = vec![0.0; ell * n];
        let (lo, hi) = self.window(tau);
        for (k, &i) in g.idx.iter().enumerate() {
            let y = self.grid[i];
            let inside = y >= lo && y <= hi;
            if !inside && !minus_limit {
                continue;
            }
            if inside {
                self.kernel.e_into(y, tau, &mut e);
            } else {
                e.iter_mut().for_each(|v| *v = 0.0);
            }
            if minus_limit {
                for (a, b) in e.iter_mut().zip(&self.limit[i * ell * n..(i + 1) * ell * n]) {
                    *a -= b;
                }
            }
            let gv = &g.val[k * n..(k + 1) * n];
            for r in 0..ell {
                acc[r] += (0..n).map(|c| e[r * n + c] * gv[c]).sum::<f64>();
            }
        }
        acc.iter_mut().for_each(|a| *a *= self.dx);
        acc
    }

    /// `int e_y(y, tau) g(y) dy = (e(0-) - e(0+)) g(0) - int e g_y dy`.
    fn apply_y(&self, tau: f64, g0: &[f64], gy: &Sparse) -> Vec<f64> {
        let (ell, n) = (self.ell, self.n);
        let mut left = vec![0.0; ell * n];
        let mut right = vec![0.0; ell * n];
        self.kernel.e_into(0.0, tau, &mut left);
        self.kernel.e_into(f64::MIN_POSITIVE, tau, &mut right);
        let body = self.apply(tau, gy, false);
        (0..ell)
            .map(|r| (0..n).map(|c| (left[r * n + c] - right[r * n + c]) * g0[c]).sum::<f64>() - body[r])
            .collect()
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
}

fn relative_change(new: &[Vec<f64>], old: &[Vec<f64>]) -> f64 {
    let mut diff: f64 = 0.0;
    let mut size: f64 = 0.0;
    for (a, b) in new.iter().zip(old) {
        for (x, y) in a.iter().zip(b) {
            diff = diff.max((x - y).abs());
            size = size.max(x.abs());
        }
    }
    if diff == 0.0 {
        0.0
    } else {
        diff / size.max(1e-300)
    }
}

/// Time convolution `sum_{s_j <= t_i} w_j F(t_i - s_j, j)` for every output time.
fn duhamel<F: Fn(f64, usize) -> Vec<f64> + Sync>(times: &[f64], ell: usize, f: F) -> Vec<Vec<f64>> {
    use rayon::prelude::*;
    (0..times.len())
        .into_par_iter()
        .map(|i| {
            let w = trapezoid_time_weights(times, i);
            let mut acc = vec![0.0; ell];
            for j in 0..i {
                if w[j] == 0.0 {
                    continue;
                }
                let v = f(times[i] - times[j], j);
                for r in 0..ell {
                    acc[r] += w[j] * v[r];
                }
            }
            acc
        })
        .collect()
}

fn node_of_origin(grid: &[f64]) -> usize {
    grid.iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Shift functional for one-parameter families:
/// `delta(t) = int e(y,t) u0 dy - int_0^t int e_y(y,t-s) (Q + delta' u)(y,s) dy ds`
/// with `u(x,t) = u~(x + delta(t), t) - ubar(x)`, resolved by fixed-point
/// iteration over the whole stored trajectory.
pub fn track_phase(
    field: &PerturbationField,
    kernel: &ExcitedKernel,
    model: &FluxModel,
    profile: &Profile,
    opts: &TrackOptions,
) -> Result<ShockTrack> {
    if profile.ell != 1 || kernel.params.ell != 1 {
        return Err(Error::WrongKind("track_phase needs a one-parameter (Lax or undercompressive) family".into()));
    }
    if kernel.params.n != field.n {
        return Err(Error::DomainError("kernel and field dimensions differ".into()));
    }
    let n = field.n;
    let bg = &field.background;
    let times = &field.times;
    let m = times.len();
    let kq = KernelQuadrature::new(kernel, bg);
    let origin = node_of_origin(&bg.grid);
    let u0 = Sparse::new(&field.u0, n, 0.0);
    let initial: Vec<Vec<f64>> = times.iter().map(|&t| kq.apply(t, &u0, false)).collect();
    let rem = Remainder::new(model, bg.dx, &bg.ubar, &bg.ubar_x);

    let mut delta = vec![vec![0.0]; m];
    let mut delta_dot = vec![vec![0.0]; m];
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    while iterations < opts.max_iterations {
        iterations += 1;
        let mut sources = Vec::with_capacity(m);
        let mut scale: f64 = 0.0;
        for j in 0..m {
            let u = field.centered(profile, j, delta[j][0]);
            let mut g = rem.q(&u);
            for (gk, uk) in g.iter_mut().zip(&u) {
                *gk += delta_dot[j][0] * uk;
            }
            let gy = central_x(&g, n, bg.dx);
            scale = scale.max(max_abs(&gy));
            sources.push((g[origin * n..(origin + 1) * n].to_vec(), gy));
        }
        let floor = 1e-13 * scale;
        let sparse: Vec<(Vec<f64>, Sparse)> =
            sources.into_iter().map(|(g0, gy)| (g0, Sparse::new(&gy, n, floor))).collect();
        let conv = duhamel(times, 1, |tau, j| kq.apply_y(tau, &sparse[j].0, &sparse[j].1));
        let new: Vec<Vec<f64>> = (0..m).map(|i| vec![initial[i][0] - conv[i][0]]).collect();
        change = relative_change(&new, &delta);
        delta_dot = time_derivative(times, &new);
        delta = new;
        if change < opts.rtol {
            break;
        }
    }
    if change >= opts.rtol {
        return Err(Error::FixedPointDivergence { iterations, change });
    }
    let fit = (0..m).map(|j| fit_shift(field, profile, j)).collect::<Result<Vec<_>>>()?;
    let (delta_infinity, method, masses) = match asymptotic_location(model, profile, &field.mass[0]) {
        Ok(loc) => (loc.delta_infinity, TrackMethod::Mass, loc.masses),
        Err(Error::WrongKind(_)) => (delta[m - 1].clone(), TrackMethod::Functional, Vec::new()),
        Err(e) => return Err(e),
    };
    Ok(ShockTrack {
        method: TrackMethod::Functional,
        times: times.clone(),
        delta,
        delta_dot,
        delta_fit: Some(fit),
        delta_infinity,
        delta_infinity_method: method,
        delta_star: None,
        masses,
        iterations,
        last_change: change,
        orthogonality_residual: None,
        max_source_orthogonality: None,
        e0: field.e0,
    })
}

/// Family members sampled on the evolution grid, interpolated quadratically
/// in each chart coordinate from a `3^ell` lattice around a centre.
pub(super) struct FamilyLattice {
    ell: usize,
    center: Vec<f64>,
    h: f64,
    values: Vec<Vec<f64>>,
    derivs: Vec<Vec<f64>>,
}

impl FamilyLattice {
    pub(super) fn new(model: &FluxModel, profile: &Profile, bg: &Background, center: &[f64], h: f64) -> Result<Self> {
        let ell = center.len();
        let count = 3usize.pow(ell as u32);
        let mut values = Vec::with_capacity(count);
        let mut derivs = Vec::with_capacity(count);
        for k in 0..count {
            let mut d = center.to_vec();
            let mut q = k;
            for dj in d.iter_mut() {
                *dj += (q % 3) as f64 * h - h;
                q /= 3;
            }
            let member = profile_family(model, profile, &d)?;
            let mut v = Vec::with_capacity(bg.ubar.len());
            let mut dv = Vec::with_capacity(bg.ubar.len());
            for &x in &bg.grid {
                let (u, du) = member.eval_with_derivative(x);
                v.extend(u.iter());
                dv.extend(du.iter());
            }
            values.push(v);
            derivs.push(dv);
        }
        Ok(Self { ell, center: center.to_vec(), h, values, derivs })
    }

    /// `(ubar^delta, ubar^delta_x, d ubar^delta / d delta_j)` on the grid.
    pub(super) fn eval(&self, delta: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
        let len = self.values[0].len();
        let basis = |z: f64| [0.5 * z * (z - 1.0), 1.0 - z * z, 0.5 * z * (z + 1.0)];
        let dbasis = |z: f64| [z - 0.5, -2.0 * z, z + 0.5];
        let z: Vec<f64> = (0..self.ell).map(|j| (delta[j] - self.center[j]) / self.h).collect();
        let b: Vec<[f64; 3]> = z.iter().map(|&zj| basis(zj)).collect();
        let db: Vec<[f64; 3]> = z.iter().map(|&zj| dbasis(zj)).collect();
        let mut u = vec![0.0; len];
        let mut ux = vec![0.0; len];
        let mut tang = vec![vec![0.0; len]; self.ell];
        for k in 0..self.values.len() {
            let mut digits = Vec::with_capacity(self.ell);
            let mut q = k;
            for _ in 0..self.ell {
                digits.push(q % 3);
                q /= 3;
            }
            let w: f64 = (0..self.ell).map(|j| b[j][digits[j]]).product();
            for i in 0..len {
                u[i] += w * self.values[k][i];
                ux[i] += w * self.derivs[k][i];
            }
            for (jj, t) in tang.iter_mut().enumerate() {
                let wd: f64 = (0..self.ell)
                    .map(|j| if j == jj { db[j][digits[j]] / self.h } else { b[j][digits[j]] })
                    .product();
                for i in 0..len {
                    t[i] += wd * self.values[k][i];
                }
            }
        }
        (u, ux, tang)
    }
}

/// Overcompressive tracking:
/// `delta(t) = delta* + int (e(t) - e(inf)) u0* - int int e_y (Q + R) - int int (e - e(inf)) S`,
/// where `u0* = u~_0 - ubar^{delta*}`, `u = u~ - ubar^{delta(t)}` and `R`, `S`
/// are the centring errors of freezing the linearization at `delta*`.
pub fn track_phase_oc(
    field: &PerturbationField,
    kernel: &ExcitedKernel,
    model: &FluxModel,
    profile: &Profile,
    opts: &TrackOptions,
) -> Result<ShockTrack> {
    let ell = profile.ell;
    if ell < 2 || kernel.params.ell != ell {
        return Err(Error::WrongKind("track_phase_oc needs an overcompressive family (ell >= 2)".into()));
    }
    if field.frame_shift.iter().any(|&s| s != 0.0) {
        return Err(Error::DomainError("overcompressive tracking expects a lab-frame trajectory".into()));
    }
    let n = field.n;
    let bg = &field.background;
    let times = &field.times;
    let m = times.len();
    let loc = asymptotic_location(model, profile, &field.mass[0])?;
    let star = loc.delta_infinity.clone();
    let u0_l1: f64 = field.u0.iter().map(|v| v.abs()).sum::<f64>() * bg.dx;
    let lattice = FamilyLattice::new(model, profile, bg, &star, u0_l1.max(1e-4))?;
    let (ustar, ustar_x, tstar) = lattice.eval(&star);

    let mut u0s = field.u0.clone();
    for i in 0..u0s.len() {
        u0s[i] -= ustar[i] - bg.ubar[i];
    }
    let kq = KernelQuadrature::new(kernel, bg);
    let u0_sparse = Sparse::new(&u0s, n, 0.0);
    let ortho: Vec<f64> = {
        let mut acc = vec![0.0; ell];
        for (i, _) in bg.grid.iter().enumerate() {
            for r in 0..ell {
                for c in 0..n {
                    acc[r] += kq.limit[(i * ell + r) * n + c] * u0s[i * n + c];
                }
            }
        }
        acc.iter().map(|a| a * bg.dx).collect()
    };
    let mass_scale: f64 = field.mass[0].iter().map(|v| v.abs()).fold(0.0, f64::max);
    let tol = opts.orthogonality_rtol * mass_scale + 1e-12;
    let residual = max_abs(&ortho);
    if residual > tol {
        return Err(Error::OrthogonalityViolation { residual, tol });
    }
    let initial: Vec<Vec<f64>> = times
        .iter()
        .map(|&t| {
            let v = kq.apply(t, &u0_sparse, true);
            (0..ell).map(|r| star[r] + v[r]).collect()
        })
        .collect();
    let rem_star = Remainder::new(model, bg.dx, &ustar, &ustar_x);
    let pi = chart_projector(model)?;
    let origin = node_of_origin(&bg.grid);

    let mut delta = vec![star.clone(); m];
    let mut delta_dot = vec![vec![0.0; ell]; m];
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    let mut source_ortho: f64 = 0.0;
    while iterations < opts.max_iterations {
        iterations += 1;
        source_ortho = 0.0;
        let mut flux_sources = Vec::with_capacity(m);
        let mut s_sources = Vec::with_capacity(m);
        let mut scale: f64 = 0.0;
        let mut s_scale: f64 = 0.0;
        for j in 0..m {
            let (ud, udx, td) = lattice.eval(&delta[j]);
            let u: Vec<f64> = (0..ud.len()).map(|i| field.values[j][i] + bg.ubar[i] - ud[i]).collect();
            let rem = Remainder::new(model, bg.dx, &ud, &udx);
            let mut g = rem.q(&u);
            for (gk, rk) in g.iter_mut().zip(rem_star.operator_difference(&rem, &u)) {
                *gk += rk;
            }
            let mut s = vec![0.0; ud.len()];
            for k in 0..ell {
                for i in 0..s.len() {
                    s[i] += delta_dot[j][k] * (td[k][i] - tstar[k][i]);
                }
            }
            let mut ps = vec![0.0; ell];
            for i in 0..bg.nodes() {
                for r in 0..ell {
                    ps[r] += (0..n).map(|c| pi[(r, c)] * s[i * n + c]).sum::<f64>() * bg.dx;
                }
            }
            source_ortho = source_ortho.max(max_abs(&ps));
            let gy = central_x(&g, n, bg.dx);
            scale = scale.max(max_abs(&gy));
            s_scale = s_scale.max(max_abs(&s));
            flux_sources.push((g[origin * n..(origin + 1) * n].to_vec(), gy));
            s_sources.push(s);
        }
        let flux_sparse: Vec<(Vec<f64>, Sparse)> = flux_sources
            .into_iter()
            .map(|(g0, gy)| (g0, Sparse::new(&gy, n, 1e-13 * scale)))
            .collect();
        let s_sparse: Vec<Sparse> = s_sources.iter().map(|s| Sparse::new(s, n, 1e-13 * s_scale)).collect();
        let conv = duhamel(times, ell, |tau, j| {
            let a = kq.apply_y(tau, &flux_sparse[j].0, &flux_sparse[j].1);
            let b = kq.apply(tau, &s_sparse[j], true);
            (0..ell).map(|r| a[r] + b[r]).collect()
        });
        let new: Vec<Vec<f64>> = (0..m).map(|i| (0..ell).map(|r| initial[i][r] - conv[i][r]).collect()).collect();
        change = relative_change(&new, &delta);
        delta_dot = time_derivative(times, &new);
        delta = new;
        if change < opts.rtol {
            break;
        }
    }
    if change >= opts.rtol {
        return Err(Error::FixedPointDivergence { iterations, change });
    }
    Ok(ShockTrack {
        method: TrackMethod::Functional,
        times: times.clone(),
        delta,
        delta_dot,
        delta_fit: None,
        delta_infinity: star.clone(),
        delta_infinity_method: TrackMethod::Mass,
        delta_star: Some(star),
        masses: loc.masses,
        iterations,
        last_change: change,
        orthogonality_residual: Some(residual),
        max_source_orthogonality: Some(source_ortho),
        e0: field.e0,
    })
}
