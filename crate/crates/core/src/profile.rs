//! Viscous shock profiles: solutions of `B(u) u' = f(u) - f(u_-)` joining `u_-` to `u_+`.
//!
//! The connection is computed as a two-point boundary value problem on a
//! truncated line with projection boundary conditions, discretized by
//! Hermite-Simpson collocation and solved by Gauss-Newton.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{banded_least_squares, complex_eigenvalues, complex_null_vector, CMatrix, Matrix, SparseRow, State, C64};
use crate::model::{classify, endstate_spectrum, outgoing_modes, FluxModel, Side};
use crate::ode::{dopri45, OdeOptions};

/// Default bound on the pointwise ODE residual of an accepted profile.
pub const TOL_PROFILE: f64 = 1e-8;
/// Default bound on `|u(x_0) - u_-|` and `|u(x_K) - u_+|`.
pub const TOL_TAIL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileOptions {
    /// Number of grid nodes (forced odd so that x = 0 is a node).
    pub nodes: usize,
    /// Truncation is chosen so that the slowest tail mode has decayed to this size.
    pub tail_target: f64,
    /// Override for the half-width of the computational interval.
    pub x_inf: Option<f64>,
    pub tol_profile: f64,
    pub tol_tail: f64,
    pub max_newton: usize,
    /// Shift applied to every initial guess (the converged orbit is re-normalized).
    pub seed_shift: f64,
    pub check_transversality: bool,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            nodes: 1601,
            tail_target: 1e-10,
            x_inf: None,
            tol_profile: TOL_PROFILE,
            tol_tail: TOL_TAIL,
            max_newton: 60,
            seed_shift: 0.0,
            check_transversality: true,
        }
    }
}

/// Discrete profile with its derivative, decay rate and manifold dimension.
#[derive(Debug, Clone)]
pub struct Profile {
    pub model_name: String,
    pub grid: Vec<f64>,
    pub values: Vec<State>,
    pub derivative: Vec<State>,
    pub eta: f64,
    pub eta_minus: f64,
    pub eta_plus: f64,
    pub residual: f64,
    pub ell: usize,
    pub u_minus: State,
    pub u_plus: State,
    /// Dimension of the unstable subspace of the traveling-wave field at `u_-`.
    pub dim_unstable: usize,
    /// Dimension of the stable subspace of the traveling-wave field at `u_+`.
    pub dim_stable: usize,
    /// Index of the node at x = 0.
    pub center: usize,
    pub newton_iterations: usize,
    tail_minus: Matrix,
    tail_plus: Matrix,
}

impl Profile {
    pub fn n(&self) -> usize {
        self.u_minus.len()
    }

    pub fn x_min(&self) -> f64 {
        self.grid[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    fn locate(&self, x: f64) -> usize {
        let k = self.grid.partition_point(|&g| g <= x);
        k.clamp(1, self.grid.len() - 1) - 1
    }

    /// `(u(x), u'(x))`: cubic Hermite interpolation on the grid, linearized
    /// exponential tails outside it.
    pub fn eval_with_derivative(&self, x: f64) -> (State, State) {
        let last = self.grid.len() - 1;
        if x < self.grid[0] {
            let w = &self.values[0] - &self.u_minus;
            let e = (&self.tail_minus * (x - self.grid[0])).exp() * w;
            let d = &self.tail_minus * &e;
            return (&self.u_minus + e, d);
        }
        if x > self.grid[last] {
            let w = &self.values[last] - &self.u_plus;
            let e = (&self.tail_plus * (x - self.grid[last])).exp() * w;
            let d = &self.tail_plus * &e;
            return (&self.u_plus + e, d);
        }
        let i = self.locate(x);
        hermite(
            self.grid[i],
            self.grid[i + 1],
            &self.values[i],
            &self.derivative[i],
            &self.values[i + 1],
            &self.derivative[i + 1],
            x,
        )
    }

    pub fn eval(&self, x: f64) -> State {
        self.eval_with_derivative(x).0
    }

    /// `(|u(x_0) - u_-|, |u(x_K) - u_+|)`.
    pub fn tail_errors(&self) -> (f64, f64) {
        (
            (&self.values[0] - &self.u_minus).norm(),
            (self.values.last().unwrap() - &self.u_plus).norm(),
        )
    }

    pub fn sidecar(&self) -> ProfileSidecar {
        ProfileSidecar {
            model: self.model_name.clone(),
            u_minus: self.u_minus.as_slice().to_vec(),
            u_plus: self.u_plus.as_slice().to_vec(),
            eta: self.eta,
            eta_minus: self.eta_minus,
            eta_plus: self.eta_plus,
            ell: self.ell,
            residual: self.residual,
            nodes: self.grid.len(),
            x_min: self.x_min(),
            x_max: self.x_max(),
            dim_unstable: self.dim_unstable,
            dim_stable: self.dim_stable,
        }
    }

    /// CSV with columns `x, u_1..u_n, du_1..du_n`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let n = self.n();
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["x".to_string()];
        header.extend((1..=n).map(|k| format!("u_{k}")));
        header.extend((1..=n).map(|k| format!("du_{k}")));
        wr.write_record(&header)?;
        for (i, x) in self.grid.iter().enumerate() {
            let mut rec = vec![format!("{x:.17e}")];
            rec.extend(self.values[i].iter().map(|v| format!("{v:.17e}")));
            rec.extend(self.derivative[i].iter().map(|v| format!("{v:.17e}")));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Writes `profile.csv` and `profile.json` into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(std::fs::File::create(dir.join("profile.csv"))?)?;
        let f = std::fs::File::create(dir.join("profile.json"))?;
        serde_json::to_writer_pretty(f, &self.sidecar())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSidecar {
    pub model: String,
    pub u_minus: Vec<f64>,
    pub u_plus: Vec<f64>,
    pub eta: f64,
    pub eta_minus: f64,
    pub eta_plus: f64,
    pub ell: usize,
    pub residual: f64,
    pub nodes: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub dim_unstable: usize,
    pub dim_stable: usize,
}

fn hermite(x0: f64, x1: f64, u0: &State, m0: &State, u1: &State, m1: &State, x: f64) -> (State, State) {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let d00 = (6.0 * t2 - 6.0 * t) / h;
    let d10 = 3.0 * t2 - 4.0 * t + 1.0;
    let d01 = (-6.0 * t2 + 6.0 * t) / h;
    let d11 = 3.0 * t2 - 2.0 * t;
    let u = u0 * h00 + m0 * (h * h10) + u1 * h01 + m1 * (h * h11);
    let d = u0 * d00 + m0 * d10 + u1 * d01 + m1 * d11;
    (u, d)
}

// ---------------------------------------------------------------------------
// Traveling-wave field

/// `B(u)^{-1} (f(u) - f(u_-))`.
pub fn traveling_wave_rhs(model: &FluxModel, u: &State) -> Result<State> {
    Field::new(model).rhs(u)
}

struct Field<'a> {
    model: &'a FluxModel,
    f_minus: State,
}

impl<'a> Field<'a> {
    fn new(model: &'a FluxModel) -> Self {
        Self { model, f_minus: model.f(&model.u_minus) }
    }

    fn rhs(&self, u: &State) -> Result<State> {
        let g = self.model.f(u) - &self.f_minus;
        let b = self.model.b(u);
        let scale = b.amax();
        let lu = b.lu();
        let singular = || Error::SingularViscosity(u.as_slice().to_vec());
        if scale == 0.0 {
            return Err(singular());
        }
        let piv_min = lu.u().diagonal().iter().map(|p| p.abs()).fold(f64::INFINITY, f64::min);
        if piv_min <= 1e-13 * scale {
            return Err(singular());
        }
        let r = lu.solve(&g).ok_or_else(singular)?;
        if r.iter().any(|v| !v.is_finite()) {
            return Err(singular());
        }
        Ok(r)
    }

    /// Central-difference Jacobian of the field.
    fn jac(&self, u: &State) -> Result<Matrix> {
        let n = u.len();
        let h = f64::EPSILON.cbrt() * (1.0 + u.norm());
        let mut j = Matrix::zeros(n, n);
        let mut up = u.clone();
        for k in 0..n {
            up[k] = u[k] + h;
            let fp = self.rhs(&up)?;
            up[k] = u[k] - h;
            let fm = self.rhs(&up)?;
            up[k] = u[k];
            j.set_column(k, &((fp - fm) / (2.0 * h)));
        }
        Ok(j)
    }
}

/// Real orthonormal basis (columns) of the unstable (`unstable = true`) or
/// stable subspace of `j`, plus the slowest decay rate in that subspace.
fn invariant_subspace(j: &Matrix, unstable: bool) -> Result<(Matrix, f64)> {
    let n = j.nrows();
    let cj: CMatrix = j.map(|v| C64::new(v, 0.0));
    let eig = complex_eigenvalues(&cj);
    let scale = 1.0 + j.amax();
    let mut vecs: Vec<State> = Vec::new();
    let mut rate = f64::INFINITY;
    let mut dim = 0;
    for lam in &eig {
        if lam.re.abs() < 1e-9 * scale {
            return Err(Error::DomainError(format!(
                "rest point is not hyperbolic: eigenvalue {}{:+}i",
                lam.re, lam.im
            )));
        }
        if (lam.re > 0.0) == unstable {
            dim += 1;
            rate = rate.min(lam.re.abs());
            let mut s = cj.clone();
            for i in 0..n {
                s[(i, i)] -= lam;
            }
            let v = complex_null_vector(&s);
            vecs.push(v.map(|z| z.re));
            if lam.im.abs() > 1e-12 * scale {
                vecs.push(v.map(|z| z.im));
            }
        }
    }
    if dim == 0 {
        return Ok((Matrix::zeros(n, 0), rate));
    }
    let m = Matrix::from_columns(&vecs);
    let svd = m.svd(true, false);
    let u = svd.u.unwrap();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap());
    let cols: Vec<State> = order.iter().take(dim).map(|&k| u.column(k).into_owned()).collect();
    Ok((Matrix::from_columns(&cols), rate))
}

/// Linearization of the traveling-wave field at an endstate.
pub fn endstate_linearization(model: &FluxModel, side: Side) -> Result<Matrix> {
    Field::new(model).jac(model.endstate(side))
}

/// Predicted exponential decay rate of the profile tails: the slowest rate
/// on the unstable side at `u_-` and the stable side at `u_+`.
pub fn predicted_tail_rate(model: &FluxModel) -> Result<f64> {
    let (_, rm) = invariant_subspace(&endstate_linearization(model, Side::Minus)?, true)?;
    let (_, rp) = invariant_subspace(&endstate_linearization(model, Side::Plus)?, false)?;
    Ok(rm.min(rp))
}

// ---------------------------------------------------------------------------
// Grid

/// Grid on `[x_minus, x_plus]` (`x_minus < 0 < x_plus`) with an odd number of
/// nodes, `x = 0` at the center, and sinh stretching chosen so that about 60%
/// of the nodes lie in `|x| <= core` on each side.
pub fn clustered_grid(x_minus: f64, x_plus: f64, nodes: usize, core: f64) -> Vec<f64> {
    let nodes = if nodes % 2 == 0 { nodes + 1 } else { nodes }.max(5);
    let m = (nodes - 1) / 2;
    let side = |len: f64| -> Vec<f64> {
        let r = core / len;
        let kappa = if r >= 0.6 {
            0.0
        } else {
            let frac = |k: f64| (k.sinh() * r).asinh() / k;
            let (mut lo, mut hi) = (1e-6, 60.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if frac(mid) < 0.6 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        (0..=m)
            .map(|j| {
                let s = j as f64 / m as f64;
                if kappa < 1e-8 {
                    len * s
                } else {
                    len * (kappa * s).sinh() / kappa.sinh()
                }
            })
            .collect()
    };
    let left = side(-x_minus);
    let right = side(x_plus);
    let mut g: Vec<f64> = left.iter().rev().map(|v| -v).collect();
    g.extend_from_slice(&right[1..]);
    g[m] = 0.0;
    g
}

/// Composite trapezoid weights on a nonuniform grid.
pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let k = grid.len();
    let mut w = vec![0.0; k];
    for i in 0..k - 1 {
        let h = grid[i + 1] - grid[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

// ---------------------------------------------------------------------------
// Boundary value problem

struct Chart {
    pi: Matrix,
    base: Vec<State>,
    weights: Vec<f64>,
    delta: Vec<f64>,
}

struct Bvp<'a> {
    field: Field<'a>,
    grid: Vec<f64>,
    n: usize,
    left_rows: Matrix,
    right_rows: Matrix,
    phase: Vec<(usize, usize, f64)>,
    chart: Option<Chart>,
}

struct Assembly {
    rows: Vec<(SparseRow, f64)>,
    dense: Vec<(Vec<f64>, f64)>,
    max_abs: f64,
    sumsq: f64,
}

impl<'a> Bvp<'a> {
    fn unknowns(&self) -> usize {
        self.n * self.grid.len()
    }

    fn assemble(&self, u: &[State], jac: bool) -> Result<Assembly> {
        let n = self.n;
        let k = self.grid.len();
        let model = self.field.model;
        let fs: Vec<State> = u.iter().map(|v| self.field.rhs(v)).collect::<Result<_>>()?;
        let js: Vec<Matrix> = if jac {
            u.iter().map(|v| self.field.jac(v)).collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        let mut rows: Vec<(SparseRow, f64)> = Vec::with_capacity(n * k + 2 * n);
        let id = Matrix::identity(n, n);
        let push_proj = |rows: &mut Vec<(SparseRow, f64)>, p: &Matrix, node: usize, target: &State| {
            for q in 0..p.nrows() {
                let val: f64 = (0..n).map(|c| p[(q, c)] * (u[node][c] - target[c])).sum();
                let row: SparseRow = (0..n).map(|c| (node * n + c, p[(q, c)])).collect();
                rows.push((row, val));
            }
        };
        push_proj(&mut rows, &self.left_rows, 0, &model.u_minus);
        for i in 0..k - 1 {
            let h = self.grid[i + 1] - self.grid[i];
            let um = (&u[i] + &u[i + 1]) * 0.5 + (&fs[i] - &fs[i + 1]) * (h / 8.0);
            let fm = self.field.rhs(&um)?;
            let d = &u[i + 1] - &u[i] - (&fs[i] + &fm * 4.0 + &fs[i + 1]) * (h / 6.0);
            if jac {
                let jm = self.field.jac(&um)?;
                let a = -&id - (&js[i] + &jm * 4.0 * (&id * 0.5 + &js[i] * (h / 8.0))) * (h / 6.0);
                let b = &id - (&js[i + 1] + &jm * 4.0 * (&id * 0.5 - &js[i + 1] * (h / 8.0))) * (h / 6.0);
                for c in 0..n {
                    let mut row: SparseRow = Vec::with_capacity(2 * n);
                    for q in 0..n {
                        row.push((i * n + q, a[(c, q)]));
                    }
                    for q in 0..n {
                        row.push(((i + 1) * n + q, b[(c, q)]));
                    }
                    rows.push((row, d[c]));
                }
            } else {
                for c in 0..n {
                    rows.push((Vec::new(), d[c]));
                }
            }
        }
        push_proj(&mut rows, &self.right_rows, k - 1, &model.u_plus);
        for &(node, comp, target) in &self.phase {
            rows.push((vec![(node * n + comp, 1.0)], u[node][comp] - target));
        }
        let mut dense = Vec::new();
        if let Some(ch) = &self.chart {
            for p in 0..ch.pi.nrows() {
                let mut val = -ch.delta[p];
                let mut row = if jac { vec![0.0; self.unknowns()] } else { Vec::new() };
                for i in 0..k {
                    for c in 0..n {
                        let w = ch.weights[i] * ch.pi[(p, c)];
                        val += w * (u[i][c] - ch.base[i][c]);
                        if jac {
                            row[i * n + c] = w;
                        }
                    }
                }
                dense.push((row, val));
            }
        }
        let mut max_abs: f64 = 0.0;
        let mut sumsq = 0.0;
        for v in rows.iter().map(|r| r.1).chain(dense.iter().map(|r| r.1)) {
            max_abs = max_abs.max(v.abs());
            sumsq += v * v;
        }
        if !sumsq.is_finite() {
            return Err(Error::NoConnection { mismatch: f64::INFINITY });
        }
        Ok(Assembly { rows, dense, max_abs, sumsq })
    }

    /// Damped Gauss-Newton. Returns the iterate, iteration count and final max residual.
    fn solve(&self, mut u: Vec<State>, max_iter: usize) -> (Vec<State>, usize, f64) {
        let n = self.n;
        let mut best = f64::INFINITY;
        let mut iters = 0;
        for it in 0..max_iter {
            iters = it + 1;
            let asm = match self.assemble(&u, true) {
                Ok(a) => a,
                Err(_) => return (u, iters, f64::INFINITY),
            };
            best = asm.max_abs;
            if asm.max_abs < 1e-12 {
                return (u, iters, asm.max_abs);
            }
            let rows: Vec<(SparseRow, f64)> = asm.rows.into_iter().map(|(r, v)| (r, -v)).collect();
            let dense: Vec<(Vec<f64>, f64)> = asm.dense.into_iter().map(|(r, v)| (r, -v)).collect();
            let dx = match banded_least_squares(self.unknowns(), 2 * n - 1, &rows, &dense) {
                Ok(d) => d,
                Err(_) => return (u, iters, best),
            };
            let step_max = dx.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha > 1.0 / 1024.0 {
                let trial: Vec<State> = u
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v + State::from_fn(n, |c, _| alpha * dx[i * n + c]))
                    .collect();
                if let Ok(a) = self.assemble(&trial, false) {
                    if a.sumsq < asm.sumsq || a.max_abs < 1e-12 {
                        u = trial;
                        best = a.max_abs;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted || alpha * step_max < 1e-15 {
                break;
            }
        }
        (u, iters, best)
    }
}

// ---------------------------------------------------------------------------
// Seeds

fn phase_components(model: &FluxModel, count: usize) -> Vec<usize> {
    let jump = &model.u_minus - &model.u_plus;
    let mut idx: Vec<usize> = (0..jump.len()).collect();
    idx.sort_by(|&a, &b| jump[b].abs().partial_cmp(&jump[a].abs()).unwrap().then(a.cmp(&b)));
    idx.truncate(count.min(jump.len()));
    idx
}

fn tanh_seed(model: &FluxModel, grid: &[f64], width: f64, shift: f64) -> Vec<State> {
    let mid = (&model.u_minus + &model.u_plus) * 0.5;
    let half = (&model.u_minus - &model.u_plus) * 0.5;
    grid.iter().map(|&x| &mid - &half * ((x - shift) / width).tanh()).collect()
}

/// Integrate the unstable manifold of `u_-` (one-dimensional case) and return
/// the branch that passes closest to `u_+`, sampled on the grid.
fn shooting_seed(
    field: &Field,
    grid: &[f64],
    dir: &State,
    rate: f64,
    phase_comp: usize,
    shift: f64,
) -> Option<Vec<State>> {
    let model = field.model;
    let amp = (&model.u_minus - &model.u_plus).norm();
    let eps = 1e-7 * amp;
    let mid = 0.5 * (model.u_minus[phase_comp] + model.u_plus[phase_comp]);
    let opts = OdeOptions { rtol: 1e-11, atol: 1e-13 * amp, h0: 1e-3, h_max: 0.25, ..Default::default() };
    let mut best: Option<(f64, Vec<(f64, State)>)> = None;
    for sign in [1.0, -1.0] {
        let start = &model.u_minus + dir * (sign * eps);
        let mut traj = vec![(0.0, start.clone())];
        let mut closest = f64::INFINITY;
        let res = dopri45(
            |_, u: &State| field.rhs(u).unwrap_or_else(|_| State::from_element(u.len(), f64::NAN)),
            0.0,
            start,
            60.0 / rate + 200.0,
            &opts,
            |x, u| {
                let d = (&*u - &model.u_plus).norm();
                closest = closest.min(d);
                traj.push((x, u.clone()));
                d > 1e-9 * amp && d < closest + 0.5 * amp && u.norm() < 1e3 * (1.0 + amp)
            },
        );
        if res.is_err() && traj.len() < 3 {
            continue;
        }
        if best.as_ref().map_or(true, |b| closest < b.0) {
            best = Some((closest, traj));
        }
    }
    let (closest, traj) = best?;
    if closest > 0.25 * amp {
        return None;
    }
    // Phase: first crossing of the midpoint in the dominant component.
    let mut xc = None;
    for w in traj.windows(2) {
        let (a, b) = (w[0].1[phase_comp] - mid, w[1].1[phase_comp] - mid);
        if a == 0.0 || a * b < 0.0 {
            xc = Some(w[0].0 + (w[1].0 - w[0].0) * a / (a - b));
            break;
        }
    }
    let xc = xc?;
    let x_start = traj[0].0 - xc;
    let x_end = traj.last().unwrap().0 - xc;
    let mut out = Vec::with_capacity(grid.len());
    let mut k = 0;
    for &g in grid {
        let x = g - shift;
        if x <= x_start {
            out.push(&model.u_minus + (&traj[0].1 - &model.u_minus) * (rate * (x - x_start)).exp());
        } else if x >= x_end {
            out.push(model.u_plus.clone());
        } else {
            while traj[k + 1].0 - xc < x {
                k += 1;
            }
            let (x0, x1) = (traj[k].0 - xc, traj[k + 1].0 - xc);
            let f0 = field.rhs(&traj[k].1).ok()?;
            let f1 = field.rhs(&traj[k + 1].1).ok()?;
            out.push(hermite(x0, x1, &traj[k].1, &f0, &traj[k + 1].1, &f1, x).0);
        }
    }
    Some(out)
}

// ---------------------------------------------------------------------------
// Post-processing

/// Max pointwise residual `|B(p) p' - f(p) + f(u_-)|` of the piecewise cubic
/// Hermite interpolant at the two Gauss points of every interval; these
/// points are not collocation points, so the value measures discretization error.
fn interpolant_residual(model: &FluxModel, grid: &[f64], u: &[State], du: &[State]) -> f64 {
    let f_minus = model.f(&model.u_minus);
    let off = 0.5 / 3f64.sqrt();
    let mut worst: f64 = 0.0;
    for i in 0..grid.len() - 1 {
        let h = grid[i + 1] - grid[i];
        for t in [0.5 - off, 0.5 + off] {
            let (p, dp) = hermite(grid[i], grid[i + 1], &u[i], &du[i], &u[i + 1], &du[i + 1], grid[i] + t * h);
            let r = model.b(&p) * dp - model.f(&p) + &f_minus;
            worst = worst.max(r.amax());
        }
    }
    worst
}

/// Least-squares slope of `log |u - u_end|` against `|x|` on the tail nodes.
fn fit_tail_rate(grid: &[f64], u: &[State], end: &State, amp: f64, minus: bool) -> Option<f64> {
    let pts: Vec<(f64, f64)> = grid
        .iter()
        .zip(u)
        .filter(|(x, _)| if minus { **x < 0.0 } else { **x > 0.0 })
        .map(|(x, v)| (x.abs(), (v - end).norm()))
        .filter(|&(_, d)| d > 1e-9 * amp && d < 1e-3 * amp)
        .map(|(x, d)| (x, d.ln()))
        .collect();
    if pts.len() < 4 {
        return None;
    }
    let m = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let sy: f64 = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - sx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - sx) * (p.1 - sy)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = -sxy / sxx;
    (slope > 0.0).then_some(slope)
}

struct Setup {
    left_rows: Matrix,
    right_rows: Matrix,
    unstable: Matrix,
    stable: Matrix,
    rate_minus: f64,
    rate_plus: f64,
    j_minus: Matrix,
    j_plus: Matrix,
}

fn setup(model: &FluxModel) -> Result<Setup> {
    let field = Field::new(model);
    let j_minus = field.jac(&model.u_minus)?;
    let j_plus = field.jac(&model.u_plus)?;
    let (unstable, rate_minus) = invariant_subspace(&j_minus, true)?;
    let (stable, rate_plus) = invariant_subspace(&j_plus, false)?;
    let n = model.dim();
    if unstable.ncols() == 0 || stable.ncols() == 0 {
        return Err(Error::NoConnection { mismatch: f64::INFINITY });
    }
    let left_rows = crate::linalg::orthogonal_complement_rows(&unstable, n);
    let right_rows = crate::linalg::orthogonal_complement_rows(&stable, n);
    Ok(Setup { left_rows, right_rows, unstable, stable, rate_minus, rate_plus, j_minus, j_plus })
}

fn expected_ell(n: usize, du: usize, ds: usize) -> usize {
    (du + ds).saturating_sub(n).max(1)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    model: &FluxModel,
    st: &Setup,
    grid: Vec<f64>,
    values: Vec<State>,
    ell: usize,
    iters: usize,
) -> Result<Profile> {
    let field = Field::new(model);
    let derivative: Vec<State> = values.iter().map(|v| field.rhs(v)).collect::<Result<_>>()?;
    let residual = interpolant_residual(model, &grid, &values, &derivative);
    let amp = (&model.u_minus - &model.u_plus).norm();
    let eta_minus = fit_tail_rate(&grid, &values, &model.u_minus, amp, true).unwrap_or(st.rate_minus);
    let eta_plus = fit_tail_rate(&grid, &values, &model.u_plus, amp, false).unwrap_or(st.rate_plus);
    let center = grid.len() / 2;
    Ok(Profile {
        model_name: model.name.clone(),
        grid,
        values,
        derivative,
        eta: eta_minus.min(eta_plus),
        eta_minus,
        eta_plus,
        residual,
        ell,
        u_minus: model.u_minus.clone(),
        u_plus: model.u_plus.clone(),
        dim_unstable: st.unstable.ncols(),
        dim_stable: st.stable.ncols(),
        center,
        newton_iterations: iters,
        tail_minus: st.j_minus.clone(),
        tail_plus: st.j_plus.clone(),
    })
}

/// Solve for the standing profile of `model`.
pub fn solve_profile(model: &FluxModel, options: &ProfileOptions) -> Result<Profile> {
    let n = model.dim();
    let st = setup(model)?;
    let du = st.unstable.ncols();
    let ds = st.stable.ncols();
    let n_phase = expected_ell(n, du, ds);
    let amp = (&model.u_minus - &model.u_plus).norm();
    let (x_minus, x_plus) = match options.x_inf {
        Some(x) => (-x, x),
        None => (
            -((amp / options.tail_target).ln() / st.rate_minus),
            (amp / options.tail_target).ln() / st.rate_plus,
        ),
    };
    let core = 10.0 / st.rate_minus.min(st.rate_plus);
    let comps = phase_components(model, n_phase);
    let field = Field::new(model);

    let mut nodes = options.nodes;
    let mut best_mismatch = f64::INFINITY;
    for _refine in 0..3 {
        let grid = clustered_grid(x_minus, x_plus, nodes, core);
        let center = grid.len() / 2;
        let phase = comps
            .iter()
            .map(|&c| (center, c, 0.5 * (model.u_minus[c] + model.u_plus[c])))
            .collect();
        let bvp = Bvp {
            field: Field::new(model),
            grid: grid.clone(),
            n,
            left_rows: st.left_rows.clone(),
            right_rows: st.right_rows.clone(),
            phase,
            chart: None,
        };
        let mut seeds: Vec<Vec<State>> = Vec::new();
        if du == 1 {
            let dir = st.unstable.column(0).into_owned();
            if let Some(s) = shooting_seed(&field, &grid, &dir, st.rate_minus, comps[0], options.seed_shift) {
                seeds.push(s);
            }
        }
        for w in [1.0, 2.0, 4.0, 0.5] {
            seeds.push(tanh_seed(model, &grid, w / st.rate_minus.min(st.rate_plus), options.seed_shift));
        }
        let mut converged = None;
        for seed in seeds {
            let (u, iters, res) = bvp.solve(seed, options.max_newton);
            best_mismatch = best_mismatch.min(res);
            if res <= 1e-10 {
                converged = Some((u, iters));
                break;
            }
        }
        let Some((u, iters)) = converged else {
            return Err(Error::NoConnection { mismatch: best_mismatch });
        };
        let mut prof = finish(model, &st, grid, u, n_phase, iters)?;
        if options.check_transversality {
            prof.ell = connection_indices(model, &prof)?;
        }
        if prof.residual <= options.tol_profile || _refine == 2 {
            let (tm, tp) = prof.tail_errors();
            if tm > options.tol_tail || tp > options.tol_tail {
                return Err(Error::NoConnection { mismatch: tm.max(tp) });
            }
            return Ok(prof);
        }
        nodes = 2 * nodes - 1;
    }
    unreachable!("refinement loop returns on its last pass")
}

fn orthonormalize(w: &Matrix) -> Matrix {
    if w.ncols() == 0 {
        return w.clone();
    }
    w.clone().qr().q()
}

/// Dimension of the intersection of the continued unstable space of `u_-` and
/// stable space of `u_+` at x = 0; must equal `max(dU + dS - n, 1)`.
pub fn connection_indices(model: &FluxModel, profile: &Profile) -> Result<usize> {
    let n = model.dim();
    let st = setup(model)?;
    let field = Field::new(model);
    let g = &profile.grid;
    let c = profile.center;
    let jac_at = |x: f64| field.jac(&profile.eval(x));
    let rk4 = |w: &Matrix, x0: f64, x1: f64, j0: &Matrix| -> Result<(Matrix, Matrix)> {
        let h = x1 - x0;
        let jm = jac_at(0.5 * (x0 + x1))?;
        let j1 = jac_at(x1)?;
        let k1 = j0 * w;
        let k2 = &jm * (w + &k1 * (0.5 * h));
        let k3 = &jm * (w + &k2 * (0.5 * h));
        let k4 = &j1 * (w + &k3 * h);
        Ok((w + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0), j1))
    };
    let mut wu = st.unstable.clone();
    let mut j = jac_at(g[0])?;
    for i in 0..c {
        let (w, j1) = rk4(&wu, g[i], g[i + 1], &j)?;
        wu = orthonormalize(&w);
        j = j1;
    }
    let mut ws = st.stable.clone();
    let last = g.len() - 1;
    let mut j = jac_at(g[last])?;
    for i in (c..last).rev() {
        let (w, j1) = rk4(&ws, g[i + 1], g[i], &j)?;
        ws = orthonormalize(&w);
        j = j1;
    }
    let cosines = (wu.transpose() * &ws).svd(false, false).singular_values;
    let found = cosines.iter().filter(|&&s| (1.0 - s * s).max(0.0).sqrt() < 1e-5).count();
    let expected = expected_ell(n, st.unstable.ncols(), st.stable.ncols());
    if found != expected {
        return Err(Error::NonTransverse { found, expected });
    }
    Ok(found)
}

// ---------------------------------------------------------------------------
// Profile family

/// Rows of `Pi`: orthonormal basis of the complement of the outgoing modes.
pub fn chart_projector(model: &FluxModel) -> Result<Matrix> {
    let sm = endstate_spectrum(model, Side::Minus)?;
    let sp = endstate_spectrum(model, Side::Plus)?;
    let out = outgoing_modes(&sm, &sp);
    Ok(crate::linalg::orthogonal_complement_rows(&out, model.dim()))
}

fn translate(model: &FluxModel, profile: &Profile, delta: f64) -> Result<Profile> {
    let field = Field::new(model);
    let values: Vec<State> = profile.grid.iter().map(|&x| profile.eval(x - delta)).collect();
    let derivative: Vec<State> = values.iter().map(|v| field.rhs(v)).collect::<Result<_>>()?;
    let residual = interpolant_residual(model, &profile.grid, &values, &derivative);
    Ok(Profile { values, derivative, residual, ..profile.clone() })
}

/// Member `u^delta` of the profile family through `profile`. For `ell = 1` the
/// family is the set of translates `u(x - delta)`; otherwise the profile is
/// re-solved with the mass chart `int Pi (u^delta - u) dx = delta`.
pub fn profile_family(model: &FluxModel, profile: &Profile, delta: &[f64]) -> Result<Profile> {
    if delta.len() != profile.ell {
        return Err(Error::DomainError(format!(
            "delta has {} entries, family dimension is {}",
            delta.len(),
            profile.ell
        )));
    }
    if delta.iter().all(|&d| d == 0.0) {
        return Ok(profile.clone());
    }
    let sm = endstate_spectrum(model, Side::Minus)?;
    let sp = endstate_spectrum(model, Side::Plus)?;
    let _kind = classify(&sm, &sp, profile.ell)?;
    if profile.ell == 1 {
        return translate(model, profile, delta[0]);
    }
    let pi = chart_projector(model)?;
    if pi.nrows() != profile.ell {
        return Err(Error::WrongKind(format!(
            "mass chart has dimension {} but the family has dimension {}",
            pi.nrows(),
            profile.ell
        )));
    }
    let st = setup(model)?;
    let bvp = Bvp {
        field: Field::new(model),
        grid: profile.grid.clone(),
        n: model.dim(),
        left_rows: st.left_rows.clone(),
        right_rows: st.right_rows.clone(),
        phase: Vec::new(),
        chart: Some(Chart {
            pi,
            base: profile.values.clone(),
            weights: trapezoid_weights(&profile.grid),
            delta: delta.to_vec(),
        }),
    };
    let (u, iters, res) = bvp.solve(profile.values.clone(), 60);
    if res > 1e-10 {
        return Err(Error::ContinuationFailed(format!("chart residual {res:e} at delta={delta:?}")));
    }
    finish(model, &st, profile.grid.clone(), u, profile.ell, iters)
}

/// `d u^delta / d delta_j` at `delta`, by central differences with step `h`;
/// entry `[j][k]` is the state at grid node `k`.
pub fn family_tangent(model: &FluxModel, profile: &Profile, delta: &[f64], h: f64) -> Result<Vec<Vec<State>>> {
    let mut out = Vec::with_capacity(delta.len());
    for j in 0..delta.len() {
        let mut dp = delta.to_vec();
        let mut dm = delta.to_vec();
        dp[j] += h;
        dm[j] -= h;
        let up = profile_family(model, profile, &dp)?;
        let um = profile_family(model, profile, &dm)?;
        out.push(up.values.iter().zip(&um.values).map(|(a, b)| (a - b) / (2.0 * h)).collect());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::registry;

    fn burgers() -> (FluxModel, Profile) {
        let m = registry("burgers").unwrap();
        let p = solve_profile(&m, &ProfileOptions::default()).unwrap();
        (m, p)
    }

    #[test]
    fn rhs_examples() {
        let m = registry("burgers").unwrap();
        let r = traveling_wave_rhs(&m, &State::from_element(1, 0.0)).unwrap();
        assert!((r[0] + 0.5).abs() < 1e-15);
        let r = traveling_wave_rhs(&m, &State::from_element(1, 3.0)).unwrap();
        assert!((r[0] - 4.0).abs() < 1e-14);
        for u in [&m.u_minus, &m.u_plus] {
            assert!(traveling_wave_rhs(&m, u).unwrap().amax() < 1e-15);
        }
    }

    #[test]
    fn grid_is_centered_and_clustered() {
        let g = clustered_grid(-23.0, 25.0, 801, 10.0);
        assert_eq!(g.len(), 801);
        assert_eq!(g[400], 0.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        let inside = g.iter().filter(|x| x.abs() <= 10.0).count() as f64 / g.len() as f64;
        assert!((inside - 0.6).abs() < 0.02, "{inside}");
    }

    #[test]
    fn burgers_matches_tanh() {
        let (_, p) = burgers();
        let err = p
            .grid
            .iter()
            .zip(&p.values)
            .filter(|(x, _)| x.abs() <= 20.0)
            .map(|(x, u)| (u[0] + (x / 2.0).tanh()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
        assert!(p.residual < TOL_PROFILE);
        assert!(p.values[p.center][0].abs() < 1e-12);
        assert!((p.eta - 1.0).abs() < 0.2);
        assert_eq!(p.ell, 1);
        // Interpolation between nodes keeps the accuracy.
        for x in [-3.3, 0.01, 7.77, 30.0, -30.0] {
            assert!((p.eval(x)[0] + (x / 2.0).tanh()).abs() < 1e-8, "{x}");
        }
    }

    #[test]
    fn family_translate_and_tangent() {
        let (m, p) = burgers();
        let q = profile_family(&m, &p, &[0.3]).unwrap();
        for (x, u) in p.grid.iter().zip(&q.values) {
            if x.abs() < 20.0 {
                assert!((u[0] + ((x - 0.3) / 2.0).tanh()).abs() < 1e-8);
            }
        }
        let same = profile_family(&m, &p, &[0.0]).unwrap();
        assert_eq!(same.values, p.values);
        let t = family_tangent(&m, &p, &[0.0], 1e-4).unwrap();
        for (k, d) in t[0].iter().enumerate() {
            assert!((d[0] + p.derivative[k][0]).abs() < 1e-7);
        }
    }

    #[test]
    fn shifted_seed_gives_same_orbit() {
        let m = registry("burgers").unwrap();
        let p0 = solve_profile(&m, &ProfileOptions::default()).unwrap();
        let p1 = solve_profile(&m, &ProfileOptions { seed_shift: 2.5, ..Default::default() }).unwrap();
        let d = p0.values.iter().zip(&p1.values).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
        assert!(d < TOL_PROFILE, "{d}");
    }

    #[test]
    fn csv_and_sidecar() {
        let (_, p) = burgers();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,u_1,du_1\n"));
        assert_eq!(text.lines().count(), p.grid.len() + 1);
        let js = serde_json::to_string(&p.sidecar()).unwrap();
        let back: ProfileSidecar = serde_json::from_str(&js).unwrap();
        assert_eq!(back.ell, 1);
    }

    #[test]
    fn other_registry_models_converge() {
        for (name, ell) in [("burgers2x2", 2), ("coupled_quadratic", 1), ("slemrod_reduced", 1)] {
            let m = registry(name).unwrap();
            let p = solve_profile(&m, &ProfileOptions::default()).unwrap();
            assert_eq!(p.ell, ell, "{name}");
            assert!(p.residual < TOL_PROFILE, "{name}: {}", p.residual);
            let (a, b) = p.tail_errors();
            assert!(a < TOL_TAIL && b < TOL_TAIL, "{name}");
            eprintln!("{name}: eta={} res={:e} iters={} nodes={}", p.eta, p.residual, p.newton_iterations, p.grid.len());
        }
    }

    #[test]
    fn decoupled_pair_is_componentwise_tanh() {
        let m = registry("burgers2x2").unwrap();
        let p = solve_profile(&m, &ProfileOptions::default()).unwrap();
        for (x, u) in p.grid.iter().zip(&p.values) {
            assert!((u[0] + (x / 2.0).tanh()).abs() < 1e-8);
            assert!((u[1] + 2.0 * (x / 2.0).tanh()).abs() < 1e-8);
        }
    }

    #[test]
    fn overcompressive_chart_is_identity() {
        let m = registry("burgers2x2").unwrap();
        let p = solve_profile(&m, &ProfileOptions::default()).unwrap();
        let delta = [0.05, -0.03];
        let q = profile_family(&m, &p, &delta).unwrap();
        let pi = chart_projector(&m).unwrap();
        let w = trapezoid_weights(&p.grid);
        for r in 0..2 {
            let s: f64 = (0..p.grid.len())
                .map(|k| w[k] * (pi.row(r) * (&q.values[k] - &p.values[k]))[(0, 0)])
                .sum();
            assert!((s - delta[r]).abs() < 1e-9, "{s}");
        }
        let t = family_tangent(&m, &p, &[0.0, 0.0], 1e-4).unwrap();
        for j in 0..2 {
            let s: Vec<f64> = (0..2)
                .map(|r| (0..p.grid.len()).map(|k| w[k] * (pi.row(r) * &t[j][k])[(0, 0)]).sum())
                .collect();
            for r in 0..2 {
                let e = if r == j { 1.0 } else { 0.0 };
                assert!((s[r] - e).abs() < 1e-6, "{s:?}");
            }
        }
        assert!(q.residual < 1e-7);
    }

    #[test]
    fn wrong_delta_length_rejected() {
        let (m, p) = burgers();
        assert!(matches!(profile_family(&m, &p, &[0.1, 0.2]), Err(Error::DomainError(_))));
    }
}
