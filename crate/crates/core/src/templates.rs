//! Pointwise decay templates, excited kernels and their derivative envelopes.
//!
//! Kernel values for `y >= 0` are obtained from the `y <= 0` formulas through the
//! reflection `(x, y, a^-, a^+) -> (-x, -y, -a^+, -a^-)`.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, State};
use crate::model::{classify, endstate_spectrum, outgoing_modes, FluxModel, Side};

/// Gaussian cumulative function `(1 + erf z) / 2`, normalized to 1 at `+inf`.
pub fn errfn(z: f64) -> f64 {
    if z == f64::INFINITY {
        return 1.0;
    }
    if z == f64::NEG_INFINITY {
        return 0.0;
    }
    if z < -3.0 {
        // Avoid cancellation in 1 + erf for large negative arguments.
        0.5 * libm::erfc(-z)
    } else {
        0.5 * (1.0 + libm::erf(z))
    }
}

/// `errfn(b) - errfn(a)` without cancellation for arguments far in either tail.
pub fn errfn_diff(b: f64, a: f64) -> f64 {
    if a > 0.0 {
        0.5 * (libm::erfc(a) - libm::erfc(b))
    } else if b < 0.0 {
        0.5 * (libm::erfc(-b) - libm::erfc(-a))
    } else {
        errfn(b) - errfn(a)
    }
}

/// `e^{-|z|^2 / (L t)}` with the limit convention at `t = 0`.
fn gauss(z: f64, lt: f64) -> f64 {
    if lt <= 0.0 {
        if z == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        (-z * z / lt).exp()
    }
}

fn phi(g: f64) -> f64 {
    (-g * g).exp() / PI.sqrt()
}

/// Shape of the coefficient functions `l_jk(y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightProfile {
    Constant,
    /// `l(y) = l_0 (1 + amp e^{-eta |y|})`.
    ExpBump { amp: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemplateParams {
    pub n: usize,
    pub ell: usize,
    /// Characteristic speeds at `u_-` and `u_+`, increasing.
    pub a_minus: Vec<f64>,
    pub a_plus: Vec<f64>,
    pub beta_minus: Vec<f64>,
    pub beta_plus: Vec<f64>,
    /// Gaussian width constant of the templates.
    pub l: f64,
    /// Width constant of the kernel and Green envelopes.
    pub m: f64,
    /// Amplitude constant of the envelopes.
    pub c: f64,
    pub gamma: u8,
    pub eta: f64,
    /// `l_jk^-`: one `ell x n` matrix per characteristic field (zero for outgoing fields).
    pub weights_minus: Vec<Vec<Vec<f64>>>,
    pub weights_plus: Vec<Vec<Vec<f64>>>,
    pub weight_profile: WeightProfile,
}

fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn from_rows(r: &[Vec<f64>]) -> Matrix {
    let nr = r.len();
    let nc = r.first().map_or(0, |v| v.len());
    Matrix::from_fn(nr, nc, |i, j| r[i][j])
}

impl TemplateParams {
    /// Scalar parameters with unit weight `l = 1/(u_- - u_+)` replaced by `weight`.
    pub fn scalar(a_minus: f64, a_plus: f64, beta: f64, weight: f64) -> Self {
        let l = 4.0 * beta + 1.0;
        Self {
            n: 1,
            ell: 1,
            a_minus: vec![a_minus],
            a_plus: vec![a_plus],
            beta_minus: vec![beta],
            beta_plus: vec![beta],
            l,
            m: l - 0.5,
            c: 1.0,
            gamma: 0,
            eta: 1.0,
            weights_minus: vec![vec![vec![if a_minus > 0.0 { weight } else { 0.0 }]]],
            weights_plus: vec![vec![vec![if a_plus < 0.0 { weight } else { 0.0 }]]],
            weight_profile: WeightProfile::Constant,
        }
    }

    /// Parameters from endstate data. `l_jk^± = (pi r_k^±) l_k^±`, where `pi`
    /// maps an initial mass to the asymptotic shift: for `ell = 1` the first
    /// row of the (pseudo-)inverse of `[u_- - u_+ | outgoing r]`, for `ell > 1`
    /// the mass chart rows.
    pub fn from_model(model: &FluxModel, ell: usize, eta: f64) -> Result<Self> {
        let sm = endstate_spectrum(model, Side::Minus)?;
        let sp = endstate_spectrum(model, Side::Plus)?;
        let kind = classify(&sm, &sp, ell)?;
        let n = model.dim();
        let out = outgoing_modes(&sm, &sp);
        let pi = if ell == 1 {
            let jump = &model.u_minus - &model.u_plus;
            let mut cols = vec![jump];
            cols.extend((0..out.ncols()).map(|j| out.column(j).into_owned()));
            let m = Matrix::from_columns(&cols);
            let pinv = m
                .pseudo_inverse(1e-12)
                .map_err(|e| Error::DomainError(format!("mass system: {e}")))?;
            pinv.rows(0, 1).into_owned()
        } else {
            let rows = crate::linalg::orthogonal_complement_rows(&out, n);
            if rows.nrows() != ell {
                return Err(Error::WrongKind(format!(
                    "mass chart has {} rows for family dimension {ell}",
                    rows.nrows()
                )));
            }
            rows
        };
        let weights = |s: &crate::model::EndstateSpectrum, incoming: &dyn Fn(f64) -> bool| -> Vec<Vec<Vec<f64>>> {
            (0..n)
                .map(|k| {
                    if incoming(s.a[k]) {
                        let coef = &pi * s.r.column(k);
                        to_rows(&(coef * s.l.row(k)))
                    } else {
                        to_rows(&Matrix::zeros(ell, n))
                    }
                })
                .collect()
        };
        let bmax = sm.beta.iter().chain(&sp.beta).copied().fold(0.0, f64::max);
        let l = 4.0 * bmax + 1.0;
        Ok(Self {
            n,
            ell,
            weights_minus: weights(&sm, &|a| a > 0.0),
            weights_plus: weights(&sp, &|a| a < 0.0),
            a_minus: sm.a,
            a_plus: sp.a,
            beta_minus: sm.beta,
            beta_plus: sp.beta,
            l,
            m: l - 0.5,
            c: 1.0,
            gamma: kind.gamma(),
            eta,
            weight_profile: WeightProfile::Constant,
        })
    }

    pub fn with_weight_profile(mut self, w: WeightProfile) -> Self {
        self.weight_profile = w;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l > 0.0 && self.m > 0.0 && self.eta > 0.0) {
            return Err(Error::DomainError("L, M and eta must be positive".into()));
        }
        if self.a_minus.len() != self.n || self.a_plus.len() != self.n {
            return Err(Error::DomainError("speed lists must have n entries".into()));
        }
        Ok(())
    }

    fn a1_minus(&self) -> f64 {
        self.a_minus.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn an_plus(&self) -> f64 {
        self.a_plus.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn outgoing_speeds(&self) -> impl Iterator<Item = f64> + '_ {
        self.a_minus.iter().copied().filter(|&a| a < 0.0).chain(self.a_plus.iter().copied().filter(|&a| a > 0.0))
    }

    /// Indicator of `[a_1^- t, a_n^+ t]`, empty for all `t` when `a_1^- > a_n^+`.
    pub fn chi(&self, x: f64, t: f64) -> bool {
        self.a1_minus() <= self.an_plus() && x >= self.a1_minus() * t && x <= self.an_plus() * t
    }

    /// Left-side data after reflecting `y >= 0` onto `y <= 0`.
    fn side(&self, y: f64) -> SideView<'_> {
        if y <= 0.0 {
            SideView { a: &self.a_minus, beta: &self.beta_minus, flip: 1.0 }
        } else {
            SideView { a: &self.a_plus, beta: &self.beta_plus, flip: -1.0 }
        }
    }

    /// `(w(y), w'(y))` for the weight profile.
    fn weight_factor(&self, y: f64) -> (f64, f64) {
        match self.weight_profile {
            WeightProfile::Constant => (1.0, 0.0),
            WeightProfile::ExpBump { amp } => {
                let e = (-self.eta * y.abs()).exp();
                (1.0 + amp * e, -amp * self.eta * y.signum() * e)
            }
        }
    }
}

struct SideView<'a> {
    /// Unreflected speeds; the reflected speed is `flip * a` and incoming
    /// fields are those with positive reflected speed.
    a: &'a [f64],
    beta: &'a [f64],
    flip: f64,
}

impl SideView<'_> {
    fn speeds(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.a.iter().enumerate().map(move |(k, &a)| (k, self.flip * a))
    }
}

// ---------------------------------------------------------------------------
// Templates

pub fn theta(x: f64, t: f64, p: &TemplateParams) -> f64 {
    let lt = p.l * t;
    p.outgoing_speeds().map(|a| (1.0 + t).powf(-0.5) * gauss(x - a * t, lt)).sum()
}

pub fn psi1(x: f64, t: f64, p: &TemplateParams) -> f64 {
    if !p.chi(x, t) {
        return 0.0;
    }
    p.outgoing_speeds()
        .map(|a| (1.0 + x.abs() + t).powf(-0.5) * (1.0 + (x - a * t).abs()).powf(-0.5))
        .sum()
}

pub fn psi2(x: f64, t: f64, p: &TemplateParams) -> f64 {
    if p.chi(x, t) {
        return 0.0;
    }
    let st = t.sqrt();
    (1.0 + (x - p.a1_minus() * t).abs() + st).powf(-1.5) + (1.0 + (x - p.an_plus() * t).abs() + st).powf(-1.5)
}

/// `theta + psi1 + psi2`.
pub fn template_sum(x: f64, t: f64, p: &TemplateParams) -> f64 {
    theta(x, t, p) + psi1(x, t, p) + psi2(x, t, p)
}

/// Source template `(1+s)^{1/2} s^{-1/2} T^2 + (1+s)^{-1} T`, `T = theta + psi1 + psi2`.
pub fn source_psi(y: f64, s: f64, p: &TemplateParams) -> f64 {
    let tt = template_sum(y, s, p);
    (1.0 + s).sqrt() / s.sqrt() * tt * tt + tt / (1.0 + s)
}

pub fn phi1(y: f64, s: f64, p: &TemplateParams) -> f64 {
    (-p.eta * y.abs()).exp() / s.sqrt() * template_sum(y, s, p)
}

pub fn phi2(y: f64, s: f64, p: &TemplateParams) -> f64 {
    (-p.eta * y.abs()).exp() * (1.0 + s).powf(-1.5)
}

// ---------------------------------------------------------------------------
// Excited kernels

/// `e`, `e_t`, `e_y`, `e_yt` as `ell x n` matrices.
#[derive(Debug, Clone)]
pub struct KernelValue {
    pub e: Matrix,
    pub e_t: Matrix,
    pub e_y: Matrix,
    pub e_yt: Matrix,
}

/// Evaluates `e_j(y, t)` and its derivatives for fixed parameters.
#[derive(Debug, Clone)]
pub struct ExcitedKernel {
    pub params: TemplateParams,
    w_minus: Vec<Matrix>,
    w_plus: Vec<Matrix>,
}

impl ExcitedKernel {
    pub fn new(params: TemplateParams) -> Result<Self> {
        params.validate()?;
        let w_minus = params.weights_minus.iter().map(|r| from_rows(r)).collect();
        let w_plus = params.weights_plus.iter().map(|r| from_rows(r)).collect();
        Ok(Self { params, w_minus, w_plus })
    }

    fn weights(&self, y: f64) -> &[Matrix] {
        if y <= 0.0 {
            &self.w_minus
        } else {
            &self.w_plus
        }
    }

    /// Kernel and derivatives at `(y, t)`, `t > 0`.
    pub fn eval(&self, y: f64, t: f64) -> KernelValue {
        let p = &self.params;
        let side = p.side(y);
        let w = self.weights(y);
        let yr = side.flip * y;
        let (wf, wf_y) = p.weight_factor(y);
        let zero = Matrix::zeros(p.ell, p.n);
        let mut out = KernelValue { e: zero.clone(), e_t: zero.clone(), e_y: zero.clone(), e_yt: zero };
        for (k, a) in side.speeds() {
            if a <= 0.0 {
                continue;
            }
            let s = 1.0 / (4.0 * side.beta[k] * t).sqrt();
            let gp = (yr + a * t) * s;
            let gm = (yr - a * t) * s;
            let d = errfn_diff(gp, gm);
            let (pp, pm) = (phi(gp), phi(gm));
            let gp_t = s * (a * t - yr) / (2.0 * t);
            let gm_t = s * (-a * t - yr) / (2.0 * t);
            let d_y = s * (pp - pm);
            let d_t = pp * gp_t - pm * gm_t;
            let d_yt = -s / (2.0 * t) * (pp - pm) + s * (-2.0 * gp * pp * gp_t + 2.0 * gm * pm * gm_t);
            // Derivatives above are in the reflected variable; map back to y.
            let l0 = &w[k];
            out.e += l0 * (d * wf);
            out.e_t += l0 * (d_t * wf);
            out.e_y += l0 * (side.flip * d_y * wf + d * wf_y);
            out.e_yt += l0 * (side.flip * d_yt * wf + d_t * wf_y);
        }
        out
    }

    /// `e(y, t)` only, written row-major into `out` (`ell * n` entries), without allocating.
    pub fn e_into(&self, y: f64, t: f64, out: &mut [f64]) {
        let p = &self.params;
        out.iter_mut().for_each(|v| *v = 0.0);
        if t <= 0.0 {
            return;
        }
        let side = p.side(y);
        let w = self.weights(y);
        let yr = side.flip * y;
        let (wf, _) = p.weight_factor(y);
        for (k, a) in side.speeds() {
            if a <= 0.0 {
                continue;
            }
            let s = 1.0 / (4.0 * side.beta[k] * t).sqrt();
            let d = errfn_diff((yr + a * t) * s, (yr - a * t) * s) * wf;
            if d == 0.0 {
                continue;
            }
            let l0 = &w[k];
            for i in 0..p.ell {
                for j in 0..p.n {
                    out[i * p.n + j] += l0[(i, j)] * d;
                }
            }
        }
    }

    pub fn excited_kernel(&self, y: f64, t: f64) -> Matrix {
        self.eval(y, t).e
    }

    /// Pointwise limit `e(y, +inf) = sum over incoming fields of l_jk(y)`.
    pub fn excited_limit(&self, y: f64) -> Matrix {
        let (wf, _) = self.params.weight_factor(y);
        self.incoming_sum(y) * wf
    }

    /// `d/dy e(y, +inf)`.
    pub fn excited_limit_y(&self, y: f64) -> Matrix {
        let (_, wf_y) = self.params.weight_factor(y);
        self.incoming_sum(y) * wf_y
    }

    fn incoming_sum(&self, y: f64) -> Matrix {
        let side = self.params.side(y);
        let w = self.weights(y);
        let mut s = Matrix::zeros(self.params.ell, self.params.n);
        for (k, a) in side.speeds() {
            if a > 0.0 {
                s += &w[k];
            }
        }
        s
    }

    /// Right-hand sides of the kernel derivative bounds at `(y, t)`.
    pub fn envelopes(&self, y: f64, t: f64) -> KernelEnvelopes {
        e_derivative_envelopes(y, t, &self.params)
    }
}

/// Envelopes for `|e|`, `|e - e(inf)|`, `|e_t|`, `|e_y|`, `|e_y - e_y(inf)|`, `|e_yt|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelEnvelopes {
    pub e: f64,
    pub e_minus_limit: f64,
    pub e_t: f64,
    pub e_y: f64,
    pub e_y_minus_limit: f64,
    pub e_yt: f64,
}

pub fn e_derivative_envelopes(y: f64, t: f64, p: &TemplateParams) -> KernelEnvelopes {
    let side = p.side(y);
    let yr = side.flip * y;
    let mut diff_sum = 0.0;
    let mut gauss_sum = 0.0;
    let mut a_min = f64::INFINITY;
    for (k, a) in side.speeds() {
        if a <= 0.0 {
            continue;
        }
        a_min = a_min.min(a);
        let s = 1.0 / (4.0 * side.beta[k] * t).sqrt();
        diff_sum += errfn_diff((yr + a * t) * s, (yr - a * t) * s);
        gauss_sum += gauss(yr + a * t, p.m * t);
    }
    let c = p.c;
    let g = p.gamma as f64;
    let decay = (-p.eta * y.abs()).exp();
    let rt = t.sqrt();
    let e_minus_limit = if a_min.is_finite() { c * errfn((y.abs() - a_min * t) / (p.m * rt)) } else { 0.0 };
    KernelEnvelopes {
        e: c * diff_sum,
        e_minus_limit,
        e_t: c / rt * gauss_sum,
        e_y: c / rt * gauss_sum + c * g * decay * diff_sum,
        e_y_minus_limit: c / rt * gauss_sum,
        e_yt: c * (1.0 / t + g * decay / rt) * gauss_sum,
    }
}

// ---------------------------------------------------------------------------
// Green-function envelope

/// Envelope of `|d^alpha G~(x, t; y)|` with `alpha = (alpha_x, alpha_y)`.
pub fn green_envelope(x: f64, t: f64, y: f64, p: &TemplateParams, alpha_x: u32, alpha_y: u32) -> f64 {
    // Reflected speeds are `sg * a`; the near side keeps its role under reflection.
    let (sg, near, far) = if y <= 0.0 { (1.0, &p.a_minus, &p.a_plus) } else { (-1.0, &p.a_plus, &p.a_minus) };
    let (x, y) = (sg * x, sg * y);
    let mt = p.m * t;
    let rt = t.sqrt();
    let damp_near = (-p.eta * x.max(0.0)).exp();
    let damp_far = (-p.eta * (-x).max(0.0)).exp();
    let mut sum = 0.0;
    for &a in near.iter() {
        sum += gauss(x - y - sg * a * t, mt) * damp_near;
    }
    for ak in near.iter().map(|a| sg * a).filter(|&a| a > 0.0) {
        if ak * t < y.abs() {
            continue;
        }
        let tau = t - y.abs() / ak;
        for aj in near.iter().map(|a| sg * a).filter(|&a| a < 0.0) {
            sum += gauss(x - aj * tau, mt) * damp_near;
        }
        for aj in far.iter().map(|a| sg * a).filter(|&a| a > 0.0) {
            sum += gauss(x - aj * tau, mt) * damp_far;
        }
    }
    let order = (alpha_x + alpha_y) as f64;
    let pre = t.powf(-order / 2.0)
        + alpha_y as f64 * p.gamma as f64 * (-p.eta * y.abs()).exp()
        + alpha_x as f64 * (-p.eta * x.abs()).exp();
    p.c * pre * sum / rt
}

/// CSV of the templates over a rectangular grid: `x, t, theta, psi1, psi2, psi_total`.
pub fn write_template_csv<W: Write>(w: W, xs: &[f64], ts: &[f64], p: &TemplateParams) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["x", "t", "theta", "psi1", "psi2", "psi_total"])?;
    for &t in ts {
        for &x in xs {
            let (a, b, c) = (theta(x, t, p), psi1(x, t, p), psi2(x, t, p));
            wr.write_record([x, t, a, b, c, a + b + c].iter().map(|v| format!("{v:.12e}")))?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Contract `e(y, t)` (an `ell x n` matrix) with a state.
pub fn apply_kernel(e: &Matrix, u: &State) -> State {
    e * u
}
