//! Linearized operator about a profile, Evans function and condition (D).
//!
//! The eigenvalue problem `lambda v = (B v')' - (A v)' + C v` is written in flux
//! coordinates `W = (v, z)`, `z = B v' - A v`, as `W' = M(x, lambda) W` with
//! `M = [[B^-1 A, B^-1], [lambda I - C, 0]]`. The decaying subspaces at the two
//! ends are tracked as single vectors in the `n`-th exterior power, and `D`
//! is their wedge product at `x = 0`.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{complex_eigenvalues, complex_null_vector, CMatrix, CVector, Matrix, State, C64};
use crate::model::FluxModel;
use crate::ode::{dopri45, OdeOptions};
use crate::profile::Profile;

/// Threshold below which `|D|` on a contour is treated as a zero on the contour.
pub const TOL_EVANS: f64 = 1e-6;
/// Radius of the origin indentation and of the inner circle.
pub const ORIGIN_RADIUS: f64 = 1e-2;
/// Maximum number of samples on one contour.
pub const MAX_CONTOUR_SAMPLES: usize = 1 << 14;

pub type Reaction = Arc<dyn Fn(f64) -> Matrix + Send + Sync>;

/// Coefficients of the linearization `v_t = (B v_x)_x - (A v)_x (+ C v)`.
#[derive(Clone)]
pub struct LinearizedSystem {
    model: FluxModel,
    profile: Arc<Profile>,
    pub n: usize,
    pub a_minus: Matrix,
    pub a_plus: Matrix,
    pub b_minus: Matrix,
    pub b_plus: Matrix,
    /// Integration interval for the Evans ODE.
    pub x_minus: f64,
    pub x_plus: f64,
    reaction: Option<Reaction>,
    compound: Arc<Compound>,
    reference: Option<(CVector, CVector)>,
}

impl std::fmt::Debug for LinearizedSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearizedSystem")
            .field("model", &self.model.name)
            .field("n", &self.n)
            .field("x_minus", &self.x_minus)
            .field("x_plus", &self.x_plus)
            .field("reaction", &self.reaction.is_some())
            .finish()
    }
}

/// Build the linearized coefficients about `profile`.
pub fn linearized_coefficients(model: &FluxModel, profile: &Profile) -> Result<LinearizedSystem> {
    let n = model.dim();
    let mut sys = LinearizedSystem {
        model: model.clone(),
        profile: Arc::new(profile.clone()),
        n,
        a_minus: model.df(&model.u_minus),
        a_plus: model.df(&model.u_plus),
        b_minus: model.b(&model.u_minus),
        b_plus: model.b(&model.u_plus),
        x_minus: profile.x_min(),
        x_plus: profile.x_max(),
        reaction: None,
        compound: Arc::new(Compound::new(n)),
        reference: None,
    };
    sys.reference = Some(sys.reference_vectors()?);
    Ok(sys)
}

impl LinearizedSystem {
    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn model(&self) -> &FluxModel {
        &self.model
    }

    /// Adds a zeroth-order term `C(x) v` to the operator (used to plant spectrum in tests).
    pub fn with_reaction(mut self, c: Reaction) -> Result<Self> {
        self.reaction = Some(c);
        self.reference = Some(self.reference_vectors()?);
        Ok(self)
    }

    /// Changes the Evans integration interval.
    pub fn with_domain(mut self, x_minus: f64, x_plus: f64) -> Self {
        self.x_minus = x_minus;
        self.x_plus = x_plus;
        self
    }

    pub fn a_of_x(&self, x: f64) -> Matrix {
        let (u, du) = self.profile.eval_with_derivative(x);
        let mut a = self.model.df(&u);
        let n = self.n;
        for k in 0..n {
            let mut e = State::zeros(n);
            e[k] = 1.0;
            let col = self.model.db(&u, &e) * &du;
            for i in 0..n {
                a[(i, k)] -= col[i];
            }
        }
        a
    }

    pub fn b_of_x(&self, x: f64) -> Matrix {
        self.model.b(&self.profile.eval(x))
    }

    pub fn c_of_x(&self, x: f64) -> Option<Matrix> {
        self.reaction.as_ref().map(|c| c(x))
    }

    fn c_end(&self, plus: bool) -> Matrix {
        let x = if plus { self.x_plus } else { self.x_minus };
        self.c_of_x(x).unwrap_or_else(|| Matrix::zeros(self.n, self.n))
    }

    fn first_order(a: &Matrix, b: &Matrix, c: Option<&Matrix>, lambda: C64) -> CMatrix {
        let n = a.nrows();
        let binv = b.clone().try_inverse().unwrap_or_else(|| Matrix::from_element(n, n, f64::NAN));
        let ba = &binv * a;
        let mut m = CMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = C64::new(ba[(i, j)], 0.0);
                m[(i, j + n)] = C64::new(binv[(i, j)], 0.0);
                let cij = c.map_or(0.0, |c| c[(i, j)]);
                m[(i + n, j)] = C64::new(-cij, 0.0) + if i == j { lambda } else { C64::new(0.0, 0.0) };
            }
        }
        m
    }

    /// `M(x, lambda)`.
    pub fn first_order_matrix(&self, x: f64, lambda: C64) -> CMatrix {
        let c = self.c_of_x(x);
        Self::first_order(&self.a_of_x(x), &self.b_of_x(x), c.as_ref(), lambda)
    }

    fn end_matrix(&self, plus: bool, lambda: C64) -> CMatrix {
        let c = self.c_end(plus);
        if plus {
            Self::first_order(&self.a_plus, &self.b_plus, Some(&c), lambda)
        } else {
            Self::first_order(&self.a_minus, &self.b_minus, Some(&c), lambda)
        }
    }

    /// Dominant (minus end) or most stable (plus end) exterior-power eigenvector at `lambda = 1`.
    fn reference_vectors(&self) -> Result<(CVector, CVector)> {
        let one = C64::new(1.0, 0.0);
        let (_, vm, _) = self.end_data(false, one, false)?;
        let (_, vp, _) = self.end_data(true, one, false)?;
        Ok((vm, vp))
    }

    /// Exponent `mu`, right and left eigenvectors of the compound end matrix for
    /// the decaying subspace at one end.
    fn end_data(&self, plus: bool, lambda: C64, continuation: bool) -> Result<(C64, CVector, CVector)> {
        let n = self.n;
        let m = self.end_matrix(plus, lambda);
        let side = if plus { "+" } else { "-" };
        let err = |reason: String| Error::EssentialSpectrum { re: lambda.re, im: lambda.im, reason };
        let scale = 1.0 + m.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let tol = 1e-9 * scale;
        let (chosen, rest) = if continuation {
            self.continued_modes(plus, lambda)?
        } else {
            let mut eig = complex_eigenvalues(&m);
            // Unstable modes at the minus end, stable at the plus end.
            if plus {
                eig.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
            } else {
                eig.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap());
            }
            let (strict, weak) = if plus {
                (eig.iter().filter(|z| z.re < -tol).count(), eig.iter().filter(|z| z.re <= tol).count())
            } else {
                (eig.iter().filter(|z| z.re > tol).count(), eig.iter().filter(|z| z.re >= -tol).count())
            };
            if strict > n || weak < n {
                return Err(err(format!("splitting at the {side} end is ({strict},{weak}) instead of n={n}")));
            }
            if (eig[n - 1].re - eig[n].re).abs() <= tol {
                return Err(err(format!("no spectral gap at the {side} end")));
            }
            let rest = eig.split_off(n);
            (eig, rest)
        };
        let sep = chosen
            .iter()
            .flat_map(|a| rest.iter().map(move |b| (a - b).norm()))
            .fold(f64::INFINITY, f64::min);
        if sep <= tol {
            return Err(err(format!("decaying and growing modes coalesce at the {side} end")));
        }
        let mu: C64 = chosen.iter().sum();
        let mc = self.compound.apply(&m);
        let mut shifted = mc.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] -= mu;
        }
        let v = complex_null_vector(&shifted);
        let l = complex_null_vector(&shifted.transpose());
        Ok((mu, v, l))
    }

    /// Decaying modes at `lambda` obtained by following them along the arc
    /// `|lambda| e^{i s}` from the positive real axis, where they are the `n`
    /// eigenvalues of largest (minus end) or smallest (plus end) real part.
    fn continued_modes(&self, plus: bool, lambda: C64) -> Result<(Vec<C64>, Vec<C64>)> {
        let n = self.n;
        let r = lambda.norm();
        if r == 0.0 {
            return Err(Error::EssentialSpectrum { re: 0.0, im: 0.0, reason: "continuation through the origin".into() });
        }
        let mut eig = complex_eigenvalues(&self.end_matrix(plus, C64::new(r, 0.0)));
        if plus {
            eig.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        } else {
            eig.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap());
        }
        let mut chosen: Vec<C64> = eig[..n].to_vec();
        let theta = lambda.arg();
        let steps = ((theta.abs() / (PI / 64.0)).ceil() as usize).max(1);
        let mut current = eig;
        for k in 1..=steps {
            let l = C64::from_polar(r, theta * k as f64 / steps as f64);
            let next = complex_eigenvalues(&self.end_matrix(plus, l));
            let mut used = vec![false; next.len()];
            for c in chosen.iter_mut() {
                let (j, _) = next
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| !used[*j])
                    .map(|(j, z)| (j, (z - *c).norm()))
                    .fold((usize::MAX, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
                used[j] = true;
                *c = next[j];
            }
            current = next;
        }
        let mut rest = Vec::new();
        let mut taken = vec![false; current.len()];
        for c in &chosen {
            if let Some(j) = (0..current.len()).find(|&j| !taken[j] && current[j] == *c) {
                taken[j] = true;
            }
        }
        for (j, z) in current.iter().enumerate() {
            if !taken[j] {
                rest.push(*z);
            }
        }
        Ok((chosen, rest))
    }

    fn initial_vector(&self, plus: bool, lambda: C64, continuation: bool) -> Result<(C64, CVector)> {
        let (mu, v, l) = self.end_data(plus, lambda, continuation)?;
        let (rm, rp) = self.reference.as_ref().expect("reference vectors are set at construction");
        let r = if plus { rp } else { rm };
        let num: C64 = l.iter().zip(r.iter()).map(|(a, b)| a * b).sum();
        let den: C64 = l.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        if den.norm() < 1e-14 {
            return Err(Error::EssentialSpectrum {
                re: lambda.re,
                im: lambda.im,
                reason: "degenerate spectral projection".into(),
            });
        }
        Ok((mu, v * (num / den)))
    }

    /// Sup over the grid of `|A|^2 / b_min + |A_x|`, used to size the outer contour.
    pub fn contour_scale(&self) -> f64 {
        let g = &self.profile.grid;
        let mut amax: f64 = 0.0;
        let mut axmax: f64 = 0.0;
        let mut bmin = f64::INFINITY;
        let mut prev: Option<(f64, Matrix)> = None;
        for &x in g.iter().step_by(4) {
            let a = self.a_of_x(x);
            let b = self.b_of_x(x);
            amax = amax.max(a.norm());
            let re_min = b.complex_eigenvalues().iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
            bmin = bmin.min(re_min);
            if let Some((xp, ap)) = &prev {
                axmax = axmax.max((&a - ap).norm() / (x - xp));
            }
            prev = Some((x, a));
        }
        amax * amax / bmin + axmax
    }
}

// ---------------------------------------------------------------------------
// Exterior powers

/// Index tables for the `k`-th additive compound of a `2k x 2k` matrix.
#[derive(Debug)]
struct Compound {
    sets: Vec<Vec<usize>>,
    /// For each basis set: `(i, j, target set, sign)` meaning entry `M[j][i]` contributes.
    terms: Vec<Vec<(usize, usize, usize, f64)>>,
    /// For each basis set: complementary set index and sign of `e_S ^ e_{S^c}`.
    pairing: Vec<(usize, f64)>,
}

fn k_subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    rec(0, m, k, &mut cur, &mut out);
    out
}

fn permutation_sign(v: &[usize]) -> f64 {
    let mut inv = 0;
    for a in 0..v.len() {
        for b in a + 1..v.len() {
            if v[a] > v[b] {
                inv += 1;
            }
        }
    }
    if inv % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

impl Compound {
    fn new(k: usize) -> Self {
        let m = 2 * k;
        let sets = k_subsets(m, k);
        let index = |s: &[usize]| sets.iter().position(|t| t.as_slice() == s).unwrap();
        let mut terms = Vec::with_capacity(sets.len());
        let mut pairing = Vec::with_capacity(sets.len());
        for s in &sets {
            let mut t = Vec::new();
            for (p, &i) in s.iter().enumerate() {
                for j in 0..m {
                    if j != i && s.contains(&j) {
                        continue;
                    }
                    let mut r = s.clone();
                    r[p] = j;
                    let sign = permutation_sign(&r);
                    r.sort_unstable();
                    t.push((i, j, index(&r), sign));
                }
            }
            terms.push(t);
            let comp: Vec<usize> = (0..m).filter(|x| !s.contains(x)).collect();
            let mut joined = s.clone();
            joined.extend(&comp);
            pairing.push((index(&comp), permutation_sign(&joined)));
        }
        Self { sets, terms, pairing }
    }

    fn dim(&self) -> usize {
        self.sets.len()
    }

    fn apply(&self, m: &CMatrix) -> CMatrix {
        let d = self.dim();
        let mut out = CMatrix::zeros(d, d);
        for (s, t) in self.terms.iter().enumerate() {
            for &(i, j, target, sign) in t {
                out[(target, s)] += m[(j, i)] * sign;
            }
        }
        out
    }

    fn wedge(&self, a: &CVector, b: &CVector) -> C64 {
        self.pairing.iter().enumerate().map(|(s, &(c, sign))| a[s] * b[c] * sign).sum()
    }
}

// ---------------------------------------------------------------------------
// Evans function

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvansOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Allow analytic continuation across the essential spectrum as long as the
    /// decaying and growing modes stay separated (needed near `lambda = 0`).
    pub continuation: bool,
}

impl Default for EvansOptions {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-11, continuation: false }
    }
}

/// `D(lambda)` with default options.
pub fn evans_evaluate(sys: &LinearizedSystem, lambda: C64) -> Result<C64> {
    evans_evaluate_with(sys, lambda, &EvansOptions::default())
}

pub fn evans_evaluate_with(sys: &LinearizedSystem, lambda: C64, opts: &EvansOptions) -> Result<C64> {
    let comp = &sys.compound;
    let ode = OdeOptions { rtol: opts.rtol, atol: opts.atol, h0: 1e-2, h_min: 1e-10, h_max: 0.5, max_steps: 100_000 };
    let integrate = |plus: bool| -> Result<CVector> {
        let (mu, eta0) = sys.initial_vector(plus, lambda, opts.continuation)?;
        let x0 = if plus { sys.x_plus } else { sys.x_minus };
        let rhs = |x: f64, eta: &CVector| {
            let mut mc = comp.apply(&sys.first_order_matrix(x, lambda));
            for i in 0..mc.nrows() {
                mc[(i, i)] -= mu;
            }
            mc * eta
        };
        let (_, eta) = dopri45(rhs, x0, eta0, 0.0, &ode, |_, _| true)?;
        Ok(eta)
    };
    let em = integrate(false)?;
    let ep = integrate(true)?;
    Ok(comp.wedge(&em, &ep))
}

// ---------------------------------------------------------------------------
// Contours and winding

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Contour {
    Circle { center_re: f64, center_im: f64, radius: f64 },
    Rectangle { re_min: f64, re_max: f64, im_min: f64, im_max: f64 },
    /// Boundary of `{|lambda| <= radius, Re lambda >= 0, |lambda| >= indent}`.
    DShape { radius: f64, indent: f64 },
}

impl Contour {
    /// Point at parameter `t` in `[0, 1)`, counterclockwise.
    pub fn point(&self, t: f64) -> C64 {
        let t = t.rem_euclid(1.0);
        match *self {
            Contour::Circle { center_re, center_im, radius } => {
                C64::new(center_re, center_im) + C64::from_polar(radius, 2.0 * PI * t)
            }
            Contour::Rectangle { re_min, re_max, im_min, im_max } => {
                let s = 4.0 * t;
                let f = s.fract();
                match s as usize {
                    0 => C64::new(re_min + f * (re_max - re_min), im_min),
                    1 => C64::new(re_max, im_min + f * (im_max - im_min)),
                    2 => C64::new(re_max - f * (re_max - re_min), im_max),
                    _ => C64::new(re_min, im_max - f * (im_max - im_min)),
                }
            }
            Contour::DShape { radius, indent } => {
                let s = 4.0 * t;
                let f = s.fract();
                match s as usize {
                    0 => C64::from_polar(radius, -PI / 2.0 + f * PI),
                    1 => C64::new(0.0, radius - f * (radius - indent)),
                    2 => C64::from_polar(indent, PI / 2.0 - f * PI),
                    _ => C64::new(0.0, -indent - f * (radius - indent)),
                }
            }
        }
    }

    /// True for points on the indentation around the origin.
    fn on_indentation(&self, t: f64) -> bool {
        matches!(self, Contour::DShape { .. }) && (0.5..0.75).contains(&t.rem_euclid(1.0))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindingResult {
    pub winding: i64,
    pub params: Vec<f64>,
    pub lambdas: Vec<(f64, f64)>,
    pub values: Vec<(f64, f64)>,
    pub max_increment: f64,
    pub min_modulus: f64,
}

fn phase_increments(values: &[C64]) -> Vec<f64> {
    let k = values.len();
    (0..k).map(|i| (values[(i + 1) % k] / values[i]).arg()).collect()
}

/// Winding number of `D` along `contour`, refining until every phase increment is below pi/4.
pub fn winding_count(sys: &LinearizedSystem, contour: &Contour, opts: &EvansOptions) -> Result<WindingResult> {
    let eval = |ts: &[f64]| -> Result<Vec<C64>> {
        ts.par_iter().map(|&t| evans_evaluate_with(sys, contour.point(t), opts)).collect()
    };
    let mut ts: Vec<f64> = (0..64).map(|i| i as f64 / 64.0).collect();
    let mut vals = eval(&ts)?;
    loop {
        let inc = phase_increments(&vals);
        let bad: Vec<usize> = (0..inc.len()).filter(|&i| inc[i].abs() >= PI / 4.0).collect();
        let max_inc = inc.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if bad.is_empty() || ts.len() + bad.len() > MAX_CONTOUR_SAMPLES {
            if max_inc >= PI / 2.0 {
                return Err(Error::PhaseJump { samples: ts.len() });
            }
            let total: f64 = inc.iter().sum();
            return Ok(WindingResult {
                winding: (total / (2.0 * PI)).round() as i64,
                params: ts.clone(),
                lambdas: ts.iter().map(|&t| contour.point(t)).map(|z| (z.re, z.im)).collect(),
                values: vals.iter().map(|z| (z.re, z.im)).collect(),
                max_increment: max_inc,
                min_modulus: vals.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min),
            });
        }
        let new_t: Vec<f64> = bad
            .iter()
            .map(|&i| {
                let a = ts[i];
                let b = if i + 1 == ts.len() { 1.0 } else { ts[i + 1] };
                0.5 * (a + b)
            })
            .collect();
        let new_v = eval(&new_t)?;
        let mut merged: Vec<(f64, C64)> = ts.into_iter().zip(vals).chain(new_t.into_iter().zip(new_v)).collect();
        merged.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        ts = merged.iter().map(|p| p.0).collect();
        vals = merged.into_iter().map(|p| p.1).collect();
    }
}

/// Points of the dispersion curves `sigma(-i k A_pm - k^2 B_pm)`.
pub fn dispersion_curves(sys: &LinearizedSystem, k_max: f64) -> Vec<C64> {
    let mut out = Vec::new();
    let ks: Vec<f64> = (0..=600).map(|j| k_max * (j as f64 / 600.0).powi(2)).collect();
    for (a, b, c) in [
        (&sys.a_minus, &sys.b_minus, sys.c_end(false)),
        (&sys.a_plus, &sys.b_plus, sys.c_end(true)),
    ] {
        for &k in &ks {
            for sgn in [1.0, -1.0] {
                let kk = sgn * k;
                let m = CMatrix::from_fn(sys.n, sys.n, |i, j| {
                    C64::new(-kk * kk * b[(i, j)] + c[(i, j)], -kk * a[(i, j)])
                });
                out.extend(complex_eigenvalues(&m));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralOptions {
    /// Outer radius; defaults to `1 + 2 (|A|^2 / b_min + |A_x|)`.
    pub radius: Option<f64>,
    pub indent: f64,
    pub evans: EvansOptions,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self { radius: None, indent: ORIGIN_RADIUS, evans: EvansOptions::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContourRecord {
    pub label: String,
    pub contour: Contour,
    pub result: WindingResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvansRecord {
    pub outer: ContourRecord,
    pub inner: ContourRecord,
    /// Winding around the outer contour (zeros in the nonstable half-plane away from 0).
    pub winding: i64,
    pub origin_multiplicity: i64,
    pub ell_expected: usize,
    pub essential_spectrum_margin: f64,
    pub pass: bool,
    pub report: String,
}

impl EvansRecord {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["contour", "re_lambda", "im_lambda", "re_d", "im_d"])?;
        for c in [&self.outer, &self.inner] {
            for (l, d) in c.result.lambdas.iter().zip(&c.result.values) {
                wr.write_record([
                    c.label.clone(),
                    format!("{:.12e}", l.0),
                    format!("{:.12e}", l.1),
                    format!("{:.12e}", d.0),
                    format!("{:.12e}", d.1),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Writes `evans.json` and `evans.csv` into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        serde_json::to_writer_pretty(std::fs::File::create(dir.join("evans.json"))?, self)?;
        self.write_csv(std::fs::File::create(dir.join("evans.csv"))?)?;
        Ok(())
    }
}

/// Outer D-shaped contour must wind 0 times and the origin circle `ell` times.
pub fn check_condition_d(sys: &LinearizedSystem, ell: usize, opts: &SpectralOptions) -> Result<EvansRecord> {
    let radius = opts.radius.unwrap_or_else(|| 1.0 + 2.0 * sys.contour_scale());
    let outer_c = Contour::DShape { radius, indent: opts.indent };
    let inner_c = Contour::Circle { center_re: 0.0, center_im: 0.0, radius: opts.indent };
    let outer = winding_count(sys, &outer_c, &EvansOptions { continuation: false, ..opts.evans })?;
    let inner = winding_count(sys, &inner_c, &EvansOptions { continuation: true, ..opts.evans })?;

    let curves = dispersion_curves(sys, 4.0 * radius.sqrt() + 4.0 * radius);
    let margin = outer
        .params
        .iter()
        .zip(&outer.lambdas)
        .filter(|(t, _)| !outer_c.on_indentation(**t))
        .map(|(_, l)| {
            let z = C64::new(l.0, l.1);
            curves.iter().map(|c| (c - z).norm()).fold(f64::INFINITY, f64::min)
        })
        .fold(f64::INFINITY, f64::min);

    let mut problems = Vec::new();
    if outer.winding != 0 {
        problems.push(format!("{} zero(s) of D in the nonstable half-plane away from the origin", outer.winding));
    }
    if inner.winding != ell as i64 {
        problems.push(format!("origin multiplicity {} \u{2260} {ell}", inner.winding));
    }
    if outer.min_modulus <= TOL_EVANS {
        problems.push(format!("|D| = {:e} on the outer contour", outer.min_modulus));
    }
    let pass = problems.is_empty();
    let report = if pass {
        format!("no nonstable zeros; origin multiplicity {ell}")
    } else {
        problems.join("; ")
    };
    Ok(EvansRecord {
        winding: outer.winding,
        origin_multiplicity: inner.winding,
        outer: ContourRecord { label: "outer".into(), contour: outer_c, result: outer },
        inner: ContourRecord { label: "origin".into(), contour: inner_c, result: inner },
        ell_expected: ell,
        essential_spectrum_margin: margin,
        pass,
        report,
    })
}
