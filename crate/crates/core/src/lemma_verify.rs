//! Numerical certification of the convolution estimates and exact checks of
//! the square-completion identities.
//!
//! Every quadrature check evaluates the left-hand side of one displayed bound
//! on a grid, divides by the template right-hand side and reports the largest
//! ratio as the fitted constant. The same check on the doubled grid gives the
//! refinement ratio.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_line, integrate_sqrt_ends, integrate_to_infinity, QuadOptions};
use crate::templates::{green_envelope, phi1, phi2, source_psi, template_sum, ExcitedKernel, TemplateParams};

pub const TOL_IDENTITY: f64 = 1e-10;
pub const MAX_REFINEMENT_RATIO: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LemmaId {
    #[serde(rename = "interaction1")]
    Interaction1,
    #[serde(rename = "interaction2")]
    Interaction2,
    #[serde(rename = "hz")]
    Hz,
    L1,
    L2,
    L3,
    L4,
    N1,
    N2,
    N3,
    N4,
    N5,
    A1,
    A2,
    A3,
    A4,
    A5,
    A6,
}

impl LemmaId {
    pub const ALL: [LemmaId; 18] = [
        LemmaId::Interaction1,
        LemmaId::Interaction2,
        LemmaId::Hz,
        LemmaId::L1,
        LemmaId::L2,
        LemmaId::L3,
        LemmaId::L4,
        LemmaId::N1,
        LemmaId::N2,
        LemmaId::N3,
        LemmaId::N4,
        LemmaId::N5,
        LemmaId::A1,
        LemmaId::A2,
        LemmaId::A3,
        LemmaId::A4,
        LemmaId::A5,
        LemmaId::A6,
    ];

    pub fn name(self) -> &'static str {
        use LemmaId::*;
        match self {
            Interaction1 => "interaction1",
            Interaction2 => "interaction2",
            Hz => "hz",
            L1 => "L1",
            L2 => "L2",
            L3 => "L3",
            L4 => "L4",
            N1 => "N1",
            N2 => "N2",
            N3 => "N3",
            N4 => "N4",
            N5 => "N5",
            A1 => "A1",
            A2 => "A2",
            A3 => "A3",
            A4 => "A4",
            A5 => "A5",
            A6 => "A6",
        }
    }

    /// Whether the left-hand side is pointwise in `(x, t)` rather than a function of `t`.
    pub fn is_pointwise(self) -> bool {
        matches!(self, LemmaId::L1 | LemmaId::N1 | LemmaId::A1 | LemmaId::A4)
    }

    /// Expands a selection item: a single id or one of the groups
    /// `linear`, `nonlinear`, `auxiliary`, `identities`.
    pub fn parse_selection(item: &str) -> Result<Vec<LemmaId>> {
        use LemmaId::*;
        Ok(match item.trim() {
            "linear" => vec![L1, L2, L3, L4],
            "nonlinear" => vec![N1, N2, N3, N4, N5],
            "auxiliary" => vec![A1, A2, A3, A4, A5, A6],
            "identities" => vec![Interaction1, Interaction2],
            other => vec![other.parse()?],
        })
    }
}

impl fmt::Display for LemmaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LemmaId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        LemmaId::ALL
            .iter()
            .copied()
            .find(|id| id.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown lemma id '{s}'")))
    }
}

// ---------------------------------------------------------------------------
// Identities

fn check_times(s: f64, t: f64) -> Result<()> {
    if !(s > 0.0 && s < t) {
        return Err(Error::DomainError(format!("need 0 < s < t, got s={s}, t={t}")));
    }
    Ok(())
}

/// Both sides of the first square-completion identity.
pub fn interaction1_sides(x: f64, y: f64, s: f64, t: f64, m1: f64, m2: f64, a: f64, b: f64) -> Result<(f64, f64)> {
    check_times(s, t)?;
    let tau = t - s;
    let lhs = (x - y - a * tau).powi(2) / (m1 * tau) + (y - b * s).powi(2) / (m2 * s);
    let d = m1 * tau + m2 * s;
    let center = ((x - a * tau) * m2 * s + b * s * m1 * tau) / d;
    let rhs = (x - a * tau - b * s).powi(2) / d + d / (m1 * m2 * s * tau) * (y - center).powi(2);
    Ok((lhs, rhs))
}

pub fn interaction1_residual(x: f64, y: f64, s: f64, t: f64, m1: f64, m2: f64, a: f64, b: f64) -> Result<f64> {
    let (l, r) = interaction1_sides(x, y, s, t, m1, m2, a, b)?;
    Ok((l - r).abs())
}

/// Both sides of the second identity, in which the first Gaussian is
/// centred on the reflected ray `x = (a/b) y + a (t - s)`.
#[allow(clippy::too_many_arguments)]
pub fn interaction2_sides(
    x: f64,
    y: f64,
    s: f64,
    t: f64,
    m1: f64,
    m2: f64,
    a: f64,
    b: f64,
    c: f64,
) -> Result<(f64, f64)> {
    check_times(s, t)?;
    if b == 0.0 {
        return Err(Error::DomainError("b must be nonzero".into()));
    }
    let tau = t - s;
    let r = a / b;
    let lhs = (x - r * y - a * tau).powi(2) / (m1 * tau) + (y - c * s).powi(2) / (m2 * s);
    let d = m1 * tau + m2 * r * r * s;
    let center = ((x - a * tau) * r * r * m2 * s + c * r * s * m1 * tau) / d;
    let rhs = (x - a * tau - c * r * s).powi(2) / d + d / (m1 * m2 * r * r * s * tau) * (r * y - center).powi(2);
    Ok((lhs, rhs))
}

#[allow(clippy::too_many_arguments)]
pub fn interaction2_residual(
    x: f64,
    y: f64,
    s: f64,
    t: f64,
    m1: f64,
    m2: f64,
    a: f64,
    b: f64,
    c: f64,
) -> Result<f64> {
    let (l, r) = interaction2_sides(x, y, s, t, m1, m2, a, b, c)?;
    Ok((l - r).abs())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub lemma_id: LemmaId,
    pub draws: usize,
    pub seed: u64,
    pub max_relative_residual: f64,
    pub tolerance: f64,
    pub verdict: bool,
}

/// Random draws over `x, y in [-10, 10]`, `0 < s < t <= 10`, `M in [0.1, 10]`,
/// speeds in `[-3, 3]` (with `|b| >= 0.1`); residual relative to `1 + |LHS|`.
pub fn identity_sweep(id: LemmaId, draws: usize, seed: u64) -> Result<IdentityCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let x = rng.gen_range(-10.0..10.0);
        let y = rng.gen_range(-10.0..10.0);
        let t = rng.gen_range(1e-3..10.0);
        let s = t * rng.gen_range(1e-3..0.999);
        let m1 = rng.gen_range(0.1..10.0);
        let m2 = rng.gen_range(0.1..10.0);
        let a = rng.gen_range(-3.0..3.0);
        let mut b: f64 = rng.gen_range(-3.0..3.0);
        if b.abs() < 0.1 {
            b = 0.1f64.copysign(b);
        }
        let c = rng.gen_range(-3.0..3.0);
        let (l, r) = match id {
            LemmaId::Interaction1 => interaction1_sides(x, y, s, t, m1, m2, a, b)?,
            LemmaId::Interaction2 => interaction2_sides(x, y, s, t, m1, m2, a, b, c)?,
            other => return Err(Error::Config(format!("{other} is not an identity"))),
        };
        worst = worst.max((l - r).abs() / (1.0 + l.abs()));
    }
    Ok(IdentityCheck {
        lemma_id: id,
        draws,
        seed,
        max_relative_residual: worst,
        tolerance: TOL_IDENTITY,
        verdict: worst <= TOL_IDENTITY,
    })
}

// ---------------------------------------------------------------------------
// Quadrature checks

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadratureCheck {
    pub lemma_id: LemmaId,
    /// Parameter-set label.
    pub label: String,
    /// Evaluation points: `[x, t]` for pointwise bounds, `[t]` otherwise.
    pub grid: Vec<Vec<f64>>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    #[serde(rename = "fitted_C")]
    pub fitted_c: f64,
    pub refinement_ratio: f64,
    pub truncation_error_bound: f64,
    pub verdict: bool,
}

impl QuadratureCheck {
    fn assemble(id: LemmaId, label: &str, grid: Vec<Vec<f64>>, vals: Vec<(f64, f64, f64)>, coarse: &[usize]) -> Self {
        let ratio = |i: usize| {
            let (l, r, _) = vals[i];
            if l <= 0.0 {
                0.0
            } else if r > 0.0 {
                l / r
            } else {
                f64::INFINITY
            }
        };
        let fine_c = (0..vals.len()).map(ratio).fold(0.0, f64::max);
        let coarse_c = coarse.iter().map(|&i| ratio(i)).fold(0.0, f64::max);
        let refinement_ratio = if fine_c == 0.0 && coarse_c == 0.0 { 1.0 } else { fine_c / coarse_c };
        let truncation_error_bound = vals.iter().map(|v| v.2).fold(0.0, f64::max);
        let verdict = fine_c.is_finite() && refinement_ratio <= MAX_REFINEMENT_RATIO;
        Self {
            lemma_id: id,
            label: label.to_string(),
            grid,
            lhs: vals.iter().map(|v| v.0).collect(),
            rhs: vals.iter().map(|v| v.1).collect(),
            fitted_c: fine_c,
            refinement_ratio,
            truncation_error_bound,
            verdict,
        }
    }
}

/// Coarse grid sizes; the fine grid inserts a midpoint between neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub t_min: f64,
    pub t_max: f64,
    pub nt: usize,
    pub nx: usize,
    /// Pointwise grids cover `|x| <= x_span (max|a| t + 5)`.
    pub x_span: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { t_min: 0.25, t_max: 64.0, nt: 6, nx: 7, x_span: 1.5 }
    }
}

impl GridSpec {
    /// Geometric times; `refined` doubles the resolution and keeps every coarse node.
    fn times(&self, refined: bool) -> Vec<f64> {
        let n = if refined { 2 * self.nt - 1 } else { self.nt };
        if n == 1 {
            return vec![self.t_max];
        }
        let (l0, l1) = (self.t_min.ln(), self.t_max.ln());
        (0..n).map(|i| (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp()).collect()
    }

    fn xi(&self, refined: bool) -> Vec<f64> {
        let n = if refined { 2 * self.nx - 1 } else { self.nx };
        if n == 1 {
            return vec![0.0];
        }
        (0..n).map(|i| -self.x_span + 2.0 * self.x_span * i as f64 / (n - 1) as f64).collect()
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_min > 0.0 && self.t_max >= self.t_min && self.nt >= 1 && self.nx >= 1 && self.x_span > 0.0) {
            return Err(Error::Config(format!("invalid quadrature grid {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteOptions {
    pub pointwise: GridSpec,
    pub temporal: GridSpec,
    pub rtol: f64,
    pub draws: usize,
    pub seed: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            pointwise: GridSpec::default(),
            temporal: GridSpec { t_min: 0.25, t_max: 256.0, nt: 9, nx: 1, x_span: 1.0 },
            rtol: 1e-6,
            draws: 10_000,
            seed: 0,
        }
    }
}

/// Evaluation context for one parameter set.
pub struct LemmaContext {
    pub label: String,
    pub kernel: ExcitedKernel,
    pub quad: QuadOptions,
}

fn push_feature(out: &mut Vec<f64>, c: f64, w: f64) {
    if !c.is_finite() {
        return;
    }
    out.push(c);
    if w > 0.0 && w.is_finite() {
        for k in [1.0, 3.0, 6.0] {
            out.push(c - k * w);
            out.push(c + k * w);
        }
    }
}

impl LemmaContext {
    pub fn new(label: &str, params: TemplateParams, rtol: f64) -> Result<Self> {
        Ok(Self {
            label: label.to_string(),
            kernel: ExcitedKernel::new(params)?,
            quad: QuadOptions { rtol, atol: 1e-15, max_intervals: 20_000 },
        })
    }

    fn p(&self) -> &TemplateParams {
        &self.kernel.params
    }

    fn speeds(&self) -> impl Iterator<Item = f64> + '_ {
        self.p().a_minus.iter().chain(&self.p().a_plus).copied()
    }

    fn max_speed(&self) -> f64 {
        self.speeds().map(f64::abs).fold(0.0, f64::max)
    }

    /// Breakpoints in `y` for templates at time `s`, kernels at lag `tau`, and
    /// (when `x` is given) Green envelopes from `y` to `x` over `tau`.
    fn features(&self, s: Option<f64>, tau: Option<f64>, x: Option<f64>) -> Vec<f64> {
        let p = self.p();
        let mut out = vec![0.0];
        push_feature(&mut out, 0.0, 1.0);
        if let Some(s) = s {
            let w = (p.l * s).sqrt();
            for a in self.speeds() {
                push_feature(&mut out, a * s, w);
            }
        }
        if let Some(tau) = tau {
            let bmax = p.beta_minus.iter().chain(&p.beta_plus).copied().fold(0.0, f64::max);
            let w = (4.0 * bmax * tau).sqrt().max((p.m * tau).sqrt());
            for a in self.speeds() {
                push_feature(&mut out, a * tau, w);
                push_feature(&mut out, -a * tau, w);
            }
            if let Some(x) = x {
                let gw = (p.m * tau).sqrt();
                for a in self.speeds() {
                    push_feature(&mut out, x - a * tau, gw);
                }
                // Reflection and transmission centres on either side.
                for (sg, near, far) in [(1.0, &p.a_minus, &p.a_plus), (-1.0, &p.a_plus, &p.a_minus)] {
                    for ak in near.iter().map(|a| sg * a).filter(|&a| a > 0.0) {
                        push_feature(&mut out, -sg * ak * tau, 0.0);
                        for aj in near.iter().chain(far.iter()).map(|a| sg * a).filter(|&a| a != 0.0) {
                            let yabs = ak * (tau - sg * x / aj);
                            if yabs > 0.0 && yabs < ak * tau {
                                push_feature(&mut out, -sg * yabs, gw * (ak / aj).abs());
                            }
                        }
                    }
                }
            }
        }
        out.retain(|v| v.is_finite());
        out.sort_by(f64::total_cmp);
        out.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * (1.0 + b.abs()));
        out
    }

    fn line<F: FnMut(f64) -> f64>(&self, f: F, pts: &[f64]) -> Result<(f64, f64)> {
        let r = integrate_line(f, pts, &self.quad)?;
        Ok((r.value, r.error))
    }

    /// `int_0^t ds int dy f(s, y)`.
    fn space_time<F>(&self, t: f64, x: Option<f64>, f: F) -> Result<(f64, f64)>
    where
        F: Fn(f64, f64) -> f64,
    {
        let mut err = 0.0;
        let mut fail = None;
        let outer = QuadOptions { rtol: self.quad.rtol * 10.0, ..self.quad };
        let r = integrate_sqrt_ends(
            |s| {
                let pts = self.features(Some(s), Some(t - s), x);
                match self.line(|y| f(s, y), &pts) {
                    Ok((v, e)) => {
                        err += e;
                        v
                    }
                    Err(e) => {
                        fail = Some(e);
                        0.0
                    }
                }
            },
            0.0,
            t,
            &outer,
        )?;
        if let Some(e) = fail {
            return Err(e);
        }
        Ok((r.value, r.error + err * t / r.evaluations.max(1) as f64))
    }

    /// `int_a^inf ds int dy f(s, y)` with the kernel evaluated at its limit.
    fn space_tail<F>(&self, from: f64, f: F) -> Result<(f64, f64)>
    where
        F: Fn(f64, f64) -> f64,
    {
        let mut fail = None;
        let mut inner = |s: f64| {
            let pts = self.features(Some(s), None, None);
            match self.line(|y| f(s, y), &pts) {
                Ok((v, _)) => v,
                Err(e) => {
                    fail = Some(e);
                    0.0
                }
            }
        };
        let outer = QuadOptions { rtol: self.quad.rtol * 10.0, ..self.quad };
        let (mut v, mut e) = (0.0, 0.0);
        let mut start = from;
        if from < 1.0 {
            // s^{-1/2} singularity at s = 0 when `from = 0`.
            let r0 = from.sqrt();
            let r = integrate(|sg: f64| 2.0 * sg * inner(sg * sg), &[r0, 0.5 * (r0 + 1.0), 1.0], &outer)?;
            v += r.value;
            e += r.error;
            start = 1.0;
        }
        let r = integrate_to_infinity(&mut inner, start, &outer)?;
        if let Some(err) = fail {
            return Err(err);
        }
        v += r.value;
        e += r.error;
        Ok((v, e))
    }

    /// Left-hand side, template right-hand side and error estimate at one point.
    pub fn evaluate(&self, id: LemmaId, x: f64, t: f64) -> Result<(f64, f64, f64)> {
        use LemmaId::*;
        let p = self.p();
        let k = &self.kernel;
        let w = |y: f64| (1.0 + y.abs()).powf(-1.5);
        let g = p.gamma as f64;
        let (lhs, err) = match id {
            L1 => {
                let pts = self.features(None, Some(t), Some(x));
                self.line(|y| green_envelope(x, t, y, p, 0, 0) * w(y), &pts)?
            }
            L2 => self.line(|y| k.eval(y, t).e_t.norm() * w(y), &self.features(None, Some(t), None))?,
            L3 => self.line(|y| k.excited_kernel(y, t).norm() * w(y), &self.features(None, Some(t), None))?,
            L4 => self.line(
                |y| (k.excited_kernel(y, t) - k.excited_limit(y)).norm() * w(y),
                &self.features(None, Some(t), None),
            )?,
            N1 => self.space_time(t, Some(x), |s, y| green_envelope(x, t - s, y, p, 0, 1) * source_psi(y, s, p))?,
            N2 => self.space_time(t, None, |s, y| k.eval(y, t - s).e_yt.norm() * source_psi(y, s, p))?,
            N3 => {
                if g == 0.0 && k.excited_limit_y(-1.0).norm() == 0.0 && k.excited_limit_y(1.0).norm() == 0.0 {
                    (0.0, 0.0)
                } else {
                    self.space_tail(0.0, |s, y| k.excited_limit_y(y).norm() * source_psi(y, s, p))?
                }
            }
            N4 => self.space_time(t, None, |s, y| {
                (k.eval(y, t - s).e_y - k.excited_limit_y(y)).norm() * source_psi(y, s, p)
            })?,
            N5 => self.space_tail(t, |s, y| k.excited_limit_y(y).norm() * source_psi(y, s, p))?,
            A1 => self.space_time(t, Some(x), |s, y| green_envelope(x, t - s, y, p, 0, 1) * phi1(y, s, p))?,
            A2 => self.space_time(t, None, |s, y| k.eval(y, t - s).e_yt.norm() * phi1(y, s, p))?,
            A3 => self.space_time(t, None, |s, y| k.eval(y, t - s).e_y.norm() * phi1(y, s, p))?,
            A4 => self.space_time(t, Some(x), |s, y| green_envelope(x, t - s, y, p, 0, 0) * phi2(y, s, p))?,
            A5 => self.space_time(t, None, |s, y| k.eval(y, t - s).e_t.norm() * phi2(y, s, p))?,
            A6 => self.space_time(t, None, |s, y| {
                (k.excited_kernel(y, t - s) - k.excited_limit(y)).norm() * phi2(y, s, p)
            })?,
            Interaction1 | Interaction2 | Hz => {
                return Err(Error::Config(format!("{id} is not a convolution bound")));
            }
        };
        let rhs = match id {
            L1 | N1 | A1 | A4 => template_sum(x, t, p),
            L2 | A5 | A6 => (1.0 + t).powf(-1.5),
            L3 => 1.0,
            L4 | N4 | N5 | A3 => (1.0 + t).powf(-0.5),
            N2 | A2 => 1.0 / (1.0 + t),
            N3 => g,
            _ => unreachable!(),
        };
        Ok((lhs, rhs, err))
    }

    /// Runs one bound on the coarse and doubled grids.
    pub fn check(&self, id: LemmaId, opts: &SuiteOptions) -> Result<QuadratureCheck> {
        if id == LemmaId::N3 {
            let v = self.evaluate(id, 0.0, 0.0)?;
            return Ok(QuadratureCheck::assemble(id, &self.label, vec![vec![f64::INFINITY]], vec![v], &[0]));
        }
        let spec = if id.is_pointwise() { opts.pointwise } else { opts.temporal };
        spec.validate()?;
        let ts = spec.times(true);
        let smax = self.max_speed();
        let mut grid = Vec::new();
        let mut coarse = Vec::new();
        for (i, &t) in ts.iter().enumerate() {
            if id.is_pointwise() {
                for (j, xi) in spec.xi(true).into_iter().enumerate() {
                    if i % 2 == 0 && j % 2 == 0 {
                        coarse.push(grid.len());
                    }
                    grid.push(vec![xi * (smax * t + 5.0), t]);
                }
            } else {
                if i % 2 == 0 {
                    coarse.push(grid.len());
                }
                grid.push(vec![t]);
            }
        }
        let vals: Vec<(f64, f64, f64)> = grid
            .par_iter()
            .map(|pt| {
                let (x, t) = if pt.len() == 2 { (pt[0], pt[1]) } else { (0.0, pt[0]) };
                self.evaluate(id, x, t)
            })
            .collect::<Result<_>>()?;
        Ok(QuadratureCheck::assemble(id, &self.label, grid, vals, &coarse))
    }
}

// ---------------------------------------------------------------------------
// Gaussian-convolution inequality for nonincreasing functions

/// Checks `int_0^inf a^{1/2} e^{-a(z-y)^2} f(y) dy` against
/// `min(sqrt(pi)/2 f(z/omega), a^{1/2}|f|_1) + min(sqrt(pi)/2 |f|_inf, a^{1/2}|f|_1) e^{-a gamma z^2}`.
/// Returns `(lhs, rhs)`.
pub fn hz_bound_check<F: Fn(f64) -> f64>(f: F, a: f64, z: f64, omega: f64, gamma_hz: f64) -> Result<(f64, f64)> {
    if !(a > 0.0 && z > 0.0 && omega > 1.0 && gamma_hz < (1.0 - 1.0 / omega).powi(2)) {
        return Err(Error::DomainError(format!("invalid parameters a={a}, z={z}, omega={omega}, gamma={gamma_hz}")));
    }
    // Monotonicity on a geometric sample of the half-line.
    let mut prev = f(0.0);
    let mut sup = prev.abs();
    for i in 0..=400 {
        let y = 1e-6 * (1e12f64).powf(i as f64 / 400.0);
        let v = f(y);
        if v < 0.0 {
            return Err(Error::DomainError(format!("f({y}) = {v} is negative")));
        }
        if v > prev * (1.0 + 1e-12) + 1e-300 {
            return Err(Error::NotMonotone { y });
        }
        sup = sup.max(v);
        prev = v;
    }
    for i in 0..=400 {
        let y = -1e-6 * (1e12f64).powf(i as f64 / 400.0);
        sup = sup.max(f(y).abs());
    }
    let opts = QuadOptions { rtol: 1e-10, atol: 1e-300, max_intervals: 20_000 };
    let l1 = integrate_line(|y| f(y).abs(), &[-1.0, 0.0, 1.0], &opts)?.value;
    let w = 1.0 / a.sqrt();
    let mut pts = vec![0.0, z];
    for k in [1.0, 3.0, 6.0] {
        pts.push((z - k * w).max(0.0));
        pts.push(z + k * w);
    }
    let hi = pts.iter().copied().fold(0.0, f64::max);
    let kernel = |y: f64| a.sqrt() * (-a * (z - y).powi(2)).exp() * f(y);
    let lhs = integrate(kernel, &pts, &opts)?.value + integrate_to_infinity(kernel, hi, &opts)?.value;
    let rt = PI.sqrt() / 2.0;
    let cap = a.sqrt() * l1;
    let rhs = (rt * f(z / omega)).min(cap) + (rt * sup).min(cap) * (-a * gamma_hz * z * z).exp();
    Ok((lhs, rhs))
}

/// The sweep `f = (1+|y|)^{-3/2}`, `a in {0.25, 1, 4}`, `z in {1, 2, 4, 8, 16}`, `omega = 2`, `gamma = 0.2`.
pub fn hz_sweep() -> Result<QuadratureCheck> {
    let f = |y: f64| (1.0 + y.abs()).powf(-1.5);
    let mut grid = Vec::new();
    let mut vals = Vec::new();
    for a in [0.25, 1.0, 4.0] {
        for z in [1.0, 2.0, 4.0, 8.0, 16.0] {
            let (l, r) = hz_bound_check(f, a, z, 2.0, 0.2)?;
            grid.push(vec![a, z, 2.0, 0.2]);
            vals.push((l, r, 0.0));
        }
    }
    let all: Vec<usize> = (0..vals.len()).collect();
    let mut c = QuadratureCheck::assemble(LemmaId::Hz, "decay_3_2", grid, vals, &all);
    c.verdict = c.lhs.iter().zip(&c.rhs).all(|(l, r)| l <= r);
    Ok(c)
}

// ---------------------------------------------------------------------------
// Suite

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LemmaReport {
    pub identities: Vec<IdentityCheck>,
    pub quadrature: Vec<QuadratureCheck>,
    pub all_pass: bool,
}

impl LemmaReport {
    fn finish(mut self) -> Self {
        self.all_pass =
            self.identities.iter().all(|c| c.verdict) && self.quadrature.iter().all(|c| c.verdict);
        self
    }

    pub fn merge(mut self, other: LemmaReport) -> Self {
        self.identities.extend(other.identities);
        self.quadrature.extend(other.quadrature);
        self.finish()
    }
}

/// Runs the selected checks; convolution bounds use `ctx`, which may be
/// absent when only identities and the half-line inequality are requested.
pub fn run_suite(ctx: Option<&LemmaContext>, selection: &[LemmaId], opts: &SuiteOptions) -> Result<LemmaReport> {
    let mut report = LemmaReport::default();
    for &id in selection {
        match id {
            LemmaId::Interaction1 | LemmaId::Interaction2 => {
                report.identities.push(identity_sweep(id, opts.draws, opts.seed)?);
            }
            LemmaId::Hz => report.quadrature.push(hz_sweep()?),
            _ => {
                let ctx = ctx.ok_or_else(|| Error::Config(format!("{id} needs template parameters")))?;
                report.quadrature.push(ctx.check(id, opts)?);
            }
        }
    }
    Ok(report.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::registry;
    use crate::templates::WeightProfile;

    fn tiny() -> SuiteOptions {
        SuiteOptions {
            pointwise: GridSpec { t_min: 0.5, t_max: 4.0, nt: 2, nx: 2, x_span: 1.0 },
            temporal: GridSpec { t_min: 0.5, t_max: 8.0, nt: 2, nx: 1, x_span: 1.0 },
            rtol: 1e-5,
            draws: 200,
            seed: 7,
        }
    }

    fn burgers() -> LemmaContext {
        let p = TemplateParams::from_model(&registry("burgers").unwrap(), 1, 1.0).unwrap();
        LemmaContext::new("burgers", p, 1e-6).unwrap()
    }

    #[test]
    fn interaction_examples() {
        let (l, r) = interaction1_sides(1.0, 0.0, 1.0, 2.0, 1.0, 1.0, 0.0, 0.0).unwrap();
        assert!((l - 1.0).abs() < 1e-15 && (r - 1.0).abs() < 1e-15);
        let a = 0.7;
        let (y, s, t) = (0.3, 0.4, 1.9);
        assert!(interaction1_residual(y + a * t, y, s, t, 2.0, 0.5, a, a).unwrap() < 1e-13);
        let r1 = interaction1_residual(0.2, -1.0, 0.5, 3.0, 1.5, 0.7, 1.1, -0.4).unwrap();
        let r2 = interaction2_residual(0.2, -1.0, 0.5, 3.0, 1.5, 0.7, 1.1, 1.1, -0.4).unwrap();
        assert!(r1 < 1e-13 && r2 < 1e-13);
        let (l1, _) = interaction1_sides(0.2, -1.0, 0.5, 3.0, 1.5, 0.7, 1.1, -0.4).unwrap();
        let (l2, _) = interaction2_sides(0.2, -1.0, 0.5, 3.0, 1.5, 0.7, 1.1, 1.1, -0.4).unwrap();
        assert!((l1 - l2).abs() < 1e-14);
        for b in [1e2, 1e4, 1e6] {
            let (l, r) = interaction2_sides(0.5, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, b, 0.5).unwrap();
            assert!((l - r).abs() <= 1e-10 * (1.0 + l.abs()));
        }
    }

    #[test]
    fn interaction_domain_errors() {
        assert!(matches!(interaction1_residual(0.0, 0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 0.0), Err(Error::DomainError(_))));
        assert!(matches!(
            interaction2_residual(0.0, 0.0, 0.5, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0),
            Err(Error::DomainError(_))
        ));
    }

    #[test]
    fn identity_sweeps_pass() {
        for id in [LemmaId::Interaction1, LemmaId::Interaction2] {
            let c = identity_sweep(id, 10_000, 0).unwrap();
            assert!(c.verdict, "{c:?}");
        }
    }

    #[test]
    fn hz_examples() {
        let f = |y: f64| (1.0 + y.abs()).powf(-1.5);
        let (l, r) = hz_bound_check(f, 1.0, 4.0, 2.0, 0.2).unwrap();
        assert!(l <= r && l > 0.0);
        let (l, r) = hz_bound_check(|_| 0.0, 1.0, 4.0, 2.0, 0.2).unwrap();
        assert_eq!((l, r), (0.0, 0.0));
        // The half-Gaussian constant is too small when the peak lies
        // well inside the half-line; the sweep has exactly one violation.
        let sweep = hz_sweep().unwrap();
        let bad: Vec<_> = sweep.grid.iter().zip(sweep.lhs.iter().zip(&sweep.rhs)).filter(|(_, (l, r))| l > r).collect();
        assert_eq!(bad.len(), 1);
        assert_eq!(&bad[0].0[..2], &[4.0, 2.0]);
        assert!(!sweep.verdict);
        assert!(matches!(hz_bound_check(|y: f64| y, 1.0, 1.0, 2.0, 0.2), Err(Error::NotMonotone { .. })));
        assert!(matches!(hz_bound_check(f, 1.0, 1.0, 2.0, 0.3), Err(Error::DomainError(_))));
    }

    #[test]
    fn selection_parsing() {
        assert_eq!(LemmaId::parse_selection("nonlinear").unwrap().len(), 5);
        assert_eq!("interaction2".parse::<LemmaId>().unwrap(), LemmaId::Interaction2);
        assert_eq!("a4".parse::<LemmaId>().unwrap(), LemmaId::A4);
        assert!("Z9".parse::<LemmaId>().is_err());
        let json = serde_json::to_string(&LemmaId::Interaction1).unwrap();
        assert_eq!(json, "\"interaction1\"");
    }

    #[test]
    fn linear_bounds_burgers() {
        let ctx = burgers();
        for id in [LemmaId::L1, LemmaId::L2, LemmaId::L3, LemmaId::L4] {
            let c = ctx.check(id, &tiny()).unwrap();
            assert!(c.fitted_c.is_finite() && c.fitted_c > 0.0, "{id}: {c:?}");
            assert!(c.lhs.iter().all(|&v| v >= 0.0));
        }
        // |e(y, 0) - e(y, inf)| is bounded, so the weighted integral is finite at t -> 0.
        let (l, _, _) = ctx.evaluate(LemmaId::L4, 0.0, 1e-8).unwrap();
        assert!(l.is_finite() && l > 0.0);
    }

    #[test]
    fn gamma_gated_term_vanishes_for_lax() {
        let (l, r, _) = burgers().evaluate(LemmaId::N3, 0.0, 0.0).unwrap();
        assert_eq!((l, r), (0.0, 0.0));
        let c = burgers().check(LemmaId::N3, &tiny()).unwrap();
        assert!(c.verdict && c.fitted_c == 0.0);
    }

    #[test]
    fn undercompressive_limit_term_is_finite() {
        let m = registry("coupled_quadratic").unwrap();
        let p = TemplateParams::from_model(&m, 1, 1.0).unwrap().with_weight_profile(WeightProfile::ExpBump { amp: 1.0 });
        let ctx = LemmaContext::new("coupled", p, 1e-6).unwrap();
        let (l, r, _) = ctx.evaluate(LemmaId::N3, 0.0, 0.0).unwrap();
        assert!(l.is_finite() && l > 0.0 && r == 1.0);
    }

    #[test]
    fn space_time_bound_small_grid() {
        let c = burgers().check(LemmaId::N2, &tiny()).unwrap();
        assert!(c.fitted_c.is_finite() && c.fitted_c > 0.0);
        assert!(c.refinement_ratio >= 1.0);
    }

    #[test]
    fn doubling_decay_rate_does_not_raise_phi1_constant() {
        let mut p = TemplateParams::from_model(&registry("burgers2x2").unwrap(), 2, 1.0).unwrap();
        let base = LemmaContext::new("oc", p.clone(), 1e-6).unwrap().check(LemmaId::A3, &tiny()).unwrap();
        p.eta *= 2.0;
        let fast = LemmaContext::new("oc", p, 1e-6).unwrap().check(LemmaId::A3, &tiny()).unwrap();
        assert!(fast.fitted_c <= base.fitted_c * (1.0 + 1e-9));
    }

    #[test]
    fn report_serializes_with_fitted_constant_key() {
        let r = run_suite(None, &[LemmaId::Interaction1, LemmaId::Hz], &tiny()).unwrap();
        assert!(r.identities[0].verdict);
        assert_eq!(r.all_pass, r.quadrature[0].verdict);
        let j = serde_json::to_string(&r).unwrap();
        assert!(j.contains("\"fitted_C\""));
        assert!(run_suite(None, &[LemmaId::L1], &tiny()).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn enlarging_widths_never_lowers_template_rhs(x in -20.0f64..20.0, t in 0.01f64..50.0, dl in 0.0f64..5.0) {
                let mut p = TemplateParams::scalar(-1.0, 1.0, 1.0, 1.0);
                let before = template_sum(x, t, &p);
                p.l += dl;
                p.m += dl;
                prop_assert!(template_sum(x, t, &p) >= before);
            }
        }
    }
}
