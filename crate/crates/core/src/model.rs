//! Conservation-law systems `u_t + f(u)_x = (B(u) u_x)_x`, endstate spectra,
//! structural hypotheses and shock classification.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{real_eigen, CMatrix, Matrix, State, C64};

/// Tolerance on the Rankine-Hugoniot residual `|f(u_-) - f(u_+)|`.
pub const TOL_RH: f64 = 1e-10;
/// Eigenvalues closer than this (or closer to zero) violate strict hyperbolicity.
pub const TOL_EIG: f64 = 1e-10;

/// Flux and viscosity of a parabolic system. Analytic derivatives are optional;
/// [`FluxModel`] falls back to central differences when they are absent.
pub trait ConservationLaw: Send + Sync {
    fn dim(&self) -> usize;
    fn flux(&self, u: &State) -> State;
    fn viscosity(&self, u: &State) -> Matrix;
    fn flux_jacobian(&self, _u: &State) -> Option<Matrix> {
        None
    }
    /// Directional derivative `d/de B(u + e v)` at `e = 0`.
    fn viscosity_derivative(&self, _u: &State, _v: &State) -> Option<Matrix> {
        None
    }
    /// Slice form of [`flux`](Self::flux) for hot loops.
    fn flux_into(&self, u: &[f64], out: &mut [f64]) {
        out.copy_from_slice(self.flux(&State::from_column_slice(u)).as_slice());
    }
    /// Slice form of [`viscosity`](Self::viscosity), row-major.
    fn viscosity_into(&self, u: &[f64], out: &mut [f64]) {
        let b = self.viscosity(&State::from_column_slice(u));
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = b[(i, j)];
            }
        }
    }
    /// True when `B` does not depend on the state.
    fn constant_viscosity(&self) -> bool {
        false
    }
}

/// A conservation law together with the endstates of a standing shock (speed 0).
#[derive(Clone)]
pub struct FluxModel {
    pub name: String,
    law: Arc<dyn ConservationLaw>,
    pub u_minus: State,
    pub u_plus: State,
}

impl fmt::Debug for FluxModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FluxModel")
            .field("name", &self.name)
            .field("n", &self.dim())
            .field("u_minus", &self.u_minus.as_slice())
            .field("u_plus", &self.u_plus.as_slice())
            .finish()
    }
}

fn fd_step(u: &State) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + u.norm())
}

impl FluxModel {
    pub fn new(
        name: impl Into<String>,
        law: Arc<dyn ConservationLaw>,
        u_minus: State,
        u_plus: State,
    ) -> Result<Self> {
        let n = law.dim();
        if n == 0 {
            return Err(Error::Config("state dimension must be at least 1".into()));
        }
        if u_minus.len() != n || u_plus.len() != n {
            return Err(Error::Config(format!("endstates must have dimension {n}")));
        }
        let model = Self { name: name.into(), law, u_minus, u_plus };
        let jump = model.rankine_hugoniot_residual();
        let scale = 1.0 + model.f(&model.u_minus).norm();
        if jump > TOL_RH * scale {
            return Err(Error::Config(format!(
                "endstates violate f(u_-) = f(u_+) for a standing shock (residual {jump:e})"
            )));
        }
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.law.dim()
    }

    /// Shock speed; always zero after moving to the shock frame.
    pub fn speed(&self) -> f64 {
        0.0
    }

    pub fn law(&self) -> &Arc<dyn ConservationLaw> {
        &self.law
    }

    pub fn rankine_hugoniot_residual(&self) -> f64 {
        (self.f(&self.u_minus) - self.f(&self.u_plus)).norm()
    }

    pub fn f(&self, u: &State) -> State {
        self.law.flux(u)
    }

    pub fn b(&self, u: &State) -> Matrix {
        self.law.viscosity(u)
    }

    pub fn df(&self, u: &State) -> Matrix {
        if let Some(j) = self.law.flux_jacobian(u) {
            return j;
        }
        self.fd_flux_jacobian(u)
    }

    /// Central-difference Jacobian of the flux.
    pub fn fd_flux_jacobian(&self, u: &State) -> Matrix {
        let n = self.dim();
        let h = fd_step(u);
        let mut j = Matrix::zeros(n, n);
        for k in 0..n {
            let mut up = u.clone();
            let mut um = u.clone();
            up[k] += h;
            um[k] -= h;
            let col = (self.f(&up) - self.f(&um)) / (2.0 * h);
            j.set_column(k, &col);
        }
        j
    }

    pub fn f_into(&self, u: &[f64], out: &mut [f64]) {
        self.law.flux_into(u, out)
    }

    pub fn b_into(&self, u: &[f64], out: &mut [f64]) {
        self.law.viscosity_into(u, out)
    }

    pub fn has_constant_viscosity(&self) -> bool {
        self.law.constant_viscosity()
    }

    /// `dB(u)(v)`: derivative of `B` at `u` in direction `v`.
    pub fn db(&self, u: &State, v: &State) -> Matrix {
        if let Some(d) = self.law.viscosity_derivative(u, v) {
            return d;
        }
        let h = fd_step(u);
        (self.b(&(u + v * h)) - self.b(&(u - v * h))) / (2.0 * h)
    }

    pub fn endstate(&self, side: Side) -> &State {
        match side {
            Side::Minus => &self.u_minus,
            Side::Plus => &self.u_plus,
        }
    }

    /// Same model with the flux multiplied by `c` (used by invariance tests).
    pub fn with_flux_scaled(&self, c: f64) -> FluxModel {
        FluxModel {
            name: format!("{}*{c}", self.name),
            law: Arc::new(ScaledLaw { inner: self.law.clone(), flux_scale: c }),
            u_minus: self.u_minus.clone(),
            u_plus: self.u_plus.clone(),
        }
    }
}

struct ScaledLaw {
    inner: Arc<dyn ConservationLaw>,
    flux_scale: f64,
}

impl ConservationLaw for ScaledLaw {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn flux(&self, u: &State) -> State {
        self.inner.flux(u) * self.flux_scale
    }
    fn viscosity(&self, u: &State) -> Matrix {
        self.inner.viscosity(u)
    }
    fn flux_jacobian(&self, u: &State) -> Option<Matrix> {
        self.inner.flux_jacobian(u).map(|j| j * self.flux_scale)
    }
    fn viscosity_derivative(&self, u: &State, v: &State) -> Option<Matrix> {
        self.inner.viscosity_derivative(u, v)
    }
    fn flux_into(&self, u: &[f64], out: &mut [f64]) {
        self.inner.flux_into(u, out);
        out.iter_mut().for_each(|v| *v *= self.flux_scale);
    }
    fn viscosity_into(&self, u: &[f64], out: &mut [f64]) {
        self.inner.viscosity_into(u, out)
    }
    fn constant_viscosity(&self) -> bool {
        self.inner.constant_viscosity()
    }
}

// ---------------------------------------------------------------------------
// Polynomial laws

/// One monomial `coef * prod_k u_k^powers[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub coef: f64,
    pub powers: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    pub terms: Vec<Term>,
}

impl Polynomial {
    pub fn constant(c: f64, n: usize) -> Self {
        Self { terms: vec![Term { coef: c, powers: vec![0; n] }] }
    }

    pub fn monomial(coef: f64, powers: &[u32]) -> Self {
        Self { terms: vec![Term { coef, powers: powers.to_vec() }] }
    }

    pub fn plus(mut self, coef: f64, powers: &[u32]) -> Self {
        self.terms.push(Term { coef, powers: powers.to_vec() });
        self
    }

    pub fn eval(&self, u: &State) -> f64 {
        self.eval_slice(u.as_slice())
    }

    pub fn eval_slice(&self, u: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.coef
                    * t.powers
                        .iter()
                        .zip(u.iter())
                        .map(|(&p, &x)| x.powi(p as i32))
                        .product::<f64>()
            })
            .sum()
    }

    /// Partial derivative with respect to `u_k`.
    pub fn partial(&self, u: &State, k: usize) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.powers[k] > 0)
            .map(|t| {
                let mut v = t.coef * t.powers[k] as f64;
                for (i, (&p, &x)) in t.powers.iter().zip(u.iter()).enumerate() {
                    let e = if i == k { p - 1 } else { p };
                    v *= x.powi(e as i32);
                }
                v
            })
            .sum()
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        for t in &self.terms {
            if t.powers.len() != n {
                return Err(Error::Config(format!(
                    "monomial has {} powers, expected {n}",
                    t.powers.len()
                )));
            }
        }
        Ok(())
    }
}

/// Flux with polynomial components and a polynomial viscosity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialLaw {
    pub flux: Vec<Polynomial>,
    pub viscosity: Vec<Vec<Polynomial>>,
}

impl PolynomialLaw {
    pub fn new(flux: Vec<Polynomial>, viscosity: Vec<Vec<Polynomial>>) -> Result<Self> {
        let n = flux.len();
        if viscosity.len() != n || viscosity.iter().any(|r| r.len() != n) {
            return Err(Error::Config(format!("viscosity must be {n}x{n}")));
        }
        for p in flux.iter().chain(viscosity.iter().flatten()) {
            p.check_dim(n)?;
        }
        Ok(Self { flux, viscosity })
    }

    pub fn constant_viscosity(flux: Vec<Polynomial>, b: &Matrix) -> Result<Self> {
        let n = flux.len();
        let visc = (0..n)
            .map(|i| (0..n).map(|j| Polynomial::constant(b[(i, j)], n)).collect())
            .collect();
        Self::new(flux, visc)
    }
}

impl ConservationLaw for PolynomialLaw {
    fn dim(&self) -> usize {
        self.flux.len()
    }
    fn flux(&self, u: &State) -> State {
        State::from_iterator(self.flux.len(), self.flux.iter().map(|p| p.eval(u)))
    }
    fn viscosity(&self, u: &State) -> Matrix {
        let n = self.dim();
        Matrix::from_fn(n, n, |i, j| self.viscosity[i][j].eval(u))
    }
    fn flux_jacobian(&self, u: &State) -> Option<Matrix> {
        let n = self.dim();
        Some(Matrix::from_fn(n, n, |i, k| self.flux[i].partial(u, k)))
    }
    fn viscosity_derivative(&self, u: &State, v: &State) -> Option<Matrix> {
        let n = self.dim();
        Some(Matrix::from_fn(n, n, |i, j| {
            (0..n).map(|k| self.viscosity[i][j].partial(u, k) * v[k]).sum()
        }))
    }
    fn flux_into(&self, u: &[f64], out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(&self.flux) {
            *o = p.eval_slice(u);
        }
    }
    fn viscosity_into(&self, u: &[f64], out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(self.viscosity.iter().flatten()) {
            *o = p.eval_slice(u);
        }
    }
    fn constant_viscosity(&self) -> bool {
        self.viscosity.iter().flatten().all(|p| p.terms.iter().all(|t| t.powers.iter().all(|&k| k == 0)))
    }
}

// ---------------------------------------------------------------------------
// Registry

/// Names accepted by [`registry`].
pub const REGISTRY: &[&str] = &["burgers", "burgers2x2", "coupled_quadratic", "slemrod_reduced"];

/// Parameters of the `coupled_quadratic` entry: `f = (u^2/2 + A v^2, -C u v)`, `B = I`.
/// Toolkit-selected: the line `v = 0` is invariant, so the Burgers connection
/// from `(1,0)` to `(-1,0)` is a saddle-saddle (undercompressive) orbit.
pub const COUPLED_QUADRATIC_A: f64 = 0.5;
pub const COUPLED_QUADRATIC_C: f64 = 2.0;

/// Diffusion of the second component of `slemrod_reduced`: `b2(v) = 1 + K v^2`.
pub const SLEMROD_VISCOSITY_K: f64 = 0.5;

/// Built-in models keyed by name.
pub fn registry(name: &str) -> Result<FluxModel> {
    let s = |v: &[f64]| State::from_column_slice(v);
    match name {
        "burgers" => {
            let law = PolynomialLaw::constant_viscosity(
                vec![Polynomial::monomial(0.5, &[2])],
                &Matrix::identity(1, 1),
            )?;
            FluxModel::new(name, Arc::new(law), s(&[1.0]), s(&[-1.0]))
        }
        "burgers2x2" => {
            // Two independent Burgers shocks with different amplitudes and viscosities.
            let law = PolynomialLaw::constant_viscosity(
                vec![Polynomial::monomial(0.5, &[2, 0]), Polynomial::monomial(0.5, &[0, 2])],
                &Matrix::from_diagonal(&s(&[1.0, 2.0])),
            )?;
            FluxModel::new(name, Arc::new(law), s(&[1.0, 2.0]), s(&[-1.0, -2.0]))
        }
        "coupled_quadratic" => {
            let law = PolynomialLaw::constant_viscosity(
                vec![
                    Polynomial::monomial(0.5, &[2, 0]).plus(COUPLED_QUADRATIC_A, &[0, 2]),
                    Polynomial::monomial(-COUPLED_QUADRATIC_C, &[1, 1]),
                ],
                &Matrix::identity(2, 2),
            )?;
            FluxModel::new(name, Arc::new(law), s(&[1.0, 0.0]), s(&[-1.0, 0.0]))
        }
        "slemrod_reduced" => {
            // p-system with cubic (van der Waals type) pressure p(v) = v - v^3 and
            // diagonal, strictly parabolic viscosity diag(1, 1 + K v^2); state (v, w).
            let law = PolynomialLaw::new(
                vec![
                    Polynomial::monomial(-1.0, &[0, 1]),
                    Polynomial::monomial(1.0, &[1, 0]).plus(-1.0, &[3, 0]),
                ],
                vec![
                    vec![Polynomial::constant(1.0, 2), Polynomial::constant(0.0, 2)],
                    vec![
                        Polynomial::constant(0.0, 2),
                        Polynomial::constant(1.0, 2).plus(SLEMROD_VISCOSITY_K, &[2, 0]),
                    ],
                ],
            )?;
            FluxModel::new(name, Arc::new(law), s(&[-1.0, 0.0]), s(&[1.0, 0.0]))
        }
        other => Err(Error::Config(format!(
            "unknown model '{other}' (known: {})",
            REGISTRY.join(", ")
        ))),
    }
}

/// Inline model definition as read from a run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub u_minus: Vec<f64>,
    pub u_plus: Vec<f64>,
    /// One polynomial (list of terms) per flux component.
    pub flux: Vec<Polynomial>,
    pub viscosity: ViscositySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ViscositySpec {
    Constant(Vec<Vec<f64>>),
    Polynomial(Vec<Vec<Polynomial>>),
}

impl ModelSpec {
    pub fn build(&self) -> Result<FluxModel> {
        let n = self.flux.len();
        let law = match &self.viscosity {
            ViscositySpec::Constant(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Config(format!("viscosity must be {n}x{n}")));
                }
                let b = Matrix::from_fn(n, n, |i, j| rows[i][j]);
                PolynomialLaw::constant_viscosity(self.flux.clone(), &b)?
            }
            ViscositySpec::Polynomial(p) => PolynomialLaw::new(self.flux.clone(), p.clone())?,
        };
        FluxModel::new(
            self.name.clone(),
            Arc::new(law),
            State::from_column_slice(&self.u_minus),
            State::from_column_slice(&self.u_plus),
        )
    }
}

// ---------------------------------------------------------------------------
// Endstate spectra

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Minus,
    Plus,
}

/// Characteristic data of `df(u_side)`.
#[derive(Debug, Clone)]
pub struct EndstateSpectrum {
    pub side: Side,
    /// Strictly increasing characteristic speeds.
    pub a: Vec<f64>,
    /// Right eigenvectors as columns.
    pub r: Matrix,
    /// Left eigenvectors as rows, `l r = I`.
    pub l: Matrix,
    /// `beta_j = l_j B(u_side) r_j`.
    pub beta: Vec<f64>,
}

impl EndstateSpectrum {
    pub fn n(&self) -> usize {
        self.a.len()
    }
}

pub fn endstate_spectrum(model: &FluxModel, side: Side) -> Result<EndstateSpectrum> {
    let u = model.endstate(side);
    let a = model.df(u);
    let eig = real_eigen(&a, TOL_EIG)?;
    if let Some(&z) = eig.values.iter().find(|v| v.abs() < TOL_EIG) {
        return Err(Error::ZeroCharacteristic { speed: z });
    }
    let b = model.b(u);
    let beta = (0..eig.values.len())
        .map(|j| (eig.left.row(j) * &b * eig.right.column(j))[(0, 0)])
        .collect();
    Ok(EndstateSpectrum { side, a: eig.values, r: eig.right, l: eig.left, beta })
}

// ---------------------------------------------------------------------------
// Hypotheses

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// `Re sigma(B(u)) > 0` at every probe state.
    pub h1: HypothesisCheck,
    /// Real, distinct, nonzero characteristic speeds at both endstates.
    pub h2: HypothesisCheck,
    /// Uniform parabolic decay of the constant-coefficient symbol at both endstates.
    pub h3: HypothesisCheck,
    /// Fitted `theta = min_k -max Re sigma(-ik A - k^2 B) / k^2` (NaN if not computed).
    pub theta: f64,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.h1.pass && self.h2.pass && self.h3.pass
    }
}

/// Wavenumbers `+-2^j`, `j = -10..=10`, for the symbol check.
pub fn symbol_wavenumbers() -> Vec<f64> {
    (-10..=10).flat_map(|j| [2f64.powi(j), -(2f64.powi(j))]).collect()
}

fn max_real_eig(m: &CMatrix) -> f64 {
    crate::linalg::complex_eigenvalues(m).iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

pub fn check_assumptions(model: &FluxModel, probe_states: &[State]) -> AssumptionReport {
    let mut worst_h1 = f64::INFINITY;
    let mut worst_state = None;
    for u in probe_states.iter().chain([&model.u_minus, &model.u_plus]) {
        let b = model.b(u);
        let re_min =
            b.clone().complex_eigenvalues().iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        if re_min < worst_h1 {
            worst_h1 = re_min;
            worst_state = Some(u.clone());
        }
    }
    let h1 = HypothesisCheck {
        pass: worst_h1 > 0.0,
        detail: format!(
            "min Re sigma(B) = {worst_h1:.6e} at u = {:?}",
            worst_state.map(|u| u.as_slice().to_vec()).unwrap_or_default()
        ),
    };

    let mut h2_msgs = Vec::new();
    let mut h2_pass = true;
    for side in [Side::Minus, Side::Plus] {
        match endstate_spectrum(model, side) {
            Ok(s) => h2_msgs.push(format!("{side:?}: a = {:?}", s.a)),
            Err(e) => {
                h2_pass = false;
                h2_msgs.push(format!("{side:?}: {e}"));
            }
        }
    }
    let h2 = HypothesisCheck { pass: h2_pass, detail: h2_msgs.join("; ") };

    let mut theta = f64::INFINITY;
    for side in [Side::Minus, Side::Plus] {
        let u = model.endstate(side);
        let a = model.df(u);
        let b = model.b(u);
        for k in symbol_wavenumbers() {
            let sym = CMatrix::from_fn(a.nrows(), a.ncols(), |i, j| {
                C64::new(-k * k * b[(i, j)], -k * a[(i, j)])
            });
            theta = theta.min(-max_real_eig(&sym) / (k * k));
        }
    }
    let h3 = HypothesisCheck {
        pass: theta > 0.0,
        detail: format!("fitted theta = {theta:.6e} over k = +-2^j, j=-10..10"),
    };
    AssumptionReport { h1, h2, h3, theta }
}

// ---------------------------------------------------------------------------
// Classification

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShockKind {
    Lax,
    Undercompressive,
    Overcompressive,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShockClassification {
    /// Characteristics of `df(u_-)` entering the shock (positive speeds).
    pub i_minus: usize,
    /// Characteristics of `df(u_+)` entering the shock (negative speeds).
    pub i_plus: usize,
    pub i: usize,
    pub n: usize,
    pub ell: usize,
    pub kind: ShockKind,
}

impl ShockClassification {
    /// `i - n`.
    pub fn excess(&self) -> i64 {
        self.i as i64 - self.n as i64
    }

    /// 1 for undercompressive or mixed profiles, 0 otherwise.
    pub fn gamma(&self) -> u8 {
        matches!(self.kind, ShockKind::Undercompressive | ShockKind::Mixed) as u8
    }
}

pub fn classify(
    spec_minus: &EndstateSpectrum,
    spec_plus: &EndstateSpectrum,
    ell: usize,
) -> Result<ShockClassification> {
    if ell == 0 {
        return Err(Error::DomainError("ell must be at least 1".into()));
    }
    let n = spec_minus.n();
    let i_minus = spec_minus.a.iter().filter(|&&a| a > 0.0).count();
    let i_plus = spec_plus.a.iter().filter(|&&a| a < 0.0).count();
    let i = i_minus + i_plus;
    let excess = i as i64 - n as i64;
    let kind = match excess {
        e if e < 1 => {
            if ell == 1 {
                ShockKind::Undercompressive
            } else {
                ShockKind::Mixed
            }
        }
        1 => {
            if ell == 1 {
                ShockKind::Lax
            } else {
                ShockKind::Mixed
            }
        }
        e => {
            if ell as i64 > e {
                return Err(Error::InconsistentEll { ell, excess: e });
            }
            if ell as i64 == e {
                ShockKind::Overcompressive
            } else {
                ShockKind::Mixed
            }
        }
    };
    Ok(ShockClassification { i_minus, i_plus, i, n, ell, kind })
}

/// Outgoing right eigenvectors (columns): `a_j^- < 0` at `u_-` and `a_j^+ > 0` at `u_+`.
pub fn outgoing_modes(spec_minus: &EndstateSpectrum, spec_plus: &EndstateSpectrum) -> Matrix {
    let mut cols = Vec::new();
    for (j, &a) in spec_minus.a.iter().enumerate() {
        if a < 0.0 {
            cols.push(spec_minus.r.column(j).into_owned());
        }
    }
    for (j, &a) in spec_plus.a.iter().enumerate() {
        if a > 0.0 {
            cols.push(spec_plus.r.column(j).into_owned());
        }
    }
    let n = spec_minus.n();
    if cols.is_empty() {
        Matrix::zeros(n, 0)
    } else {
        Matrix::from_columns(&cols)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectrum(a: &[f64]) -> EndstateSpectrum {
        let n = a.len();
        EndstateSpectrum {
            side: Side::Minus,
            a: a.to_vec(),
            r: Matrix::identity(n, n),
            l: Matrix::identity(n, n),
            beta: vec![1.0; n],
        }
    }

    #[test]
    fn burgers_spectra() {
        let m = registry("burgers").unwrap();
        let sm = endstate_spectrum(&m, Side::Minus).unwrap();
        let sp = endstate_spectrum(&m, Side::Plus).unwrap();
        assert_eq!(sm.a, vec![1.0]);
        assert_eq!(sp.a, vec![-1.0]);
        assert!((sm.r[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((sm.l[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((sm.beta[0] - 1.0).abs() < 1e-14);
        assert!((sp.beta[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn decoupled_pair_spectrum_matches_diagonal_closed_form() {
        let m = registry("burgers2x2").unwrap();
        let s = endstate_spectrum(&m, Side::Minus).unwrap();
        assert!((s.a[0] - 1.0).abs() < 1e-12 && (s.a[1] - 2.0).abs() < 1e-12);
        // Diagonal B: beta equals the diagonal entries in eigenvector order.
        assert!((s.beta[0] - 1.0).abs() < 1e-12 && (s.beta[1] - 2.0).abs() < 1e-12);
        let b = m.b(&m.u_minus);
        for j in 0..2 {
            let lr = (s.l.row(j) * s.r.column(j))[(0, 0)];
            assert!((lr - 1.0).abs() < 1e-12);
            let beta = (s.l.row(j) * &b * s.r.column(j))[(0, 0)];
            assert!((beta - s.beta[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_characteristic_is_rejected() {
        let law = PolynomialLaw::constant_viscosity(
            vec![Polynomial::monomial(0.5, &[2])],
            &Matrix::identity(1, 1),
        )
        .unwrap();
        // f(0) = f(0): a degenerate "shock" whose endstate has zero speed.
        let m = FluxModel::new("zero", Arc::new(law), State::from_element(1, 0.0), State::from_element(1, 0.0))
            .unwrap();
        assert!(matches!(endstate_spectrum(&m, Side::Plus), Err(Error::ZeroCharacteristic { .. })));
        let rep = check_assumptions(&m, &[]);
        assert!(!rep.h2.pass);
    }

    #[test]
    fn burgers_assumptions_pass_with_unit_theta() {
        let m = registry("burgers").unwrap();
        let probes: Vec<State> = (-10..=10).map(|k| State::from_element(1, k as f64 / 10.0)).collect();
        let rep = check_assumptions(&m, &probes);
        assert!(rep.all_pass(), "{rep:?}");
        assert!((rep.theta - 1.0).abs() < 1e-10);
    }

    #[test]
    fn negative_viscosity_fails_h1() {
        let law = PolynomialLaw::constant_viscosity(
            vec![Polynomial::monomial(0.5, &[2])],
            &Matrix::from_element(1, 1, -1.0),
        )
        .unwrap();
        let m = FluxModel::new("neg", Arc::new(law), State::from_element(1, 1.0), State::from_element(1, -1.0))
            .unwrap();
        let rep = check_assumptions(&m, &[]);
        assert!(!rep.h1.pass);
        assert!(!rep.h3.pass);
    }

    #[test]
    fn registry_models_satisfy_rankine_hugoniot_and_hypotheses() {
        for name in REGISTRY {
            let m = registry(name).unwrap();
            assert!(m.rankine_hugoniot_residual() < TOL_RH, "{name}");
            let rep = check_assumptions(&m, &[]);
            assert!(rep.all_pass(), "{name}: {rep:?}");
            for side in [Side::Minus, Side::Plus] {
                let s = endstate_spectrum(&m, side).unwrap();
                assert!(s.beta.iter().all(|&b| b > 0.0), "{name}");
            }
        }
    }

    #[test]
    fn rankine_hugoniot_violation_rejected() {
        let law = PolynomialLaw::constant_viscosity(
            vec![Polynomial::monomial(0.5, &[2])],
            &Matrix::identity(1, 1),
        )
        .unwrap();
        let r = FluxModel::new("bad", Arc::new(law), State::from_element(1, 1.0), State::from_element(1, 0.5));
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn analytic_jacobians_match_finite_differences() {
        for name in REGISTRY {
            let m = registry(name).unwrap();
            let n = m.dim();
            let u = State::from_fn(n, |i, _| 0.3 + 0.2 * i as f64);
            let v = State::from_fn(n, |i, _| 1.0 - 0.7 * i as f64);
            assert!((m.df(&u) - m.fd_flux_jacobian(&u)).amax() < 1e-8, "{name}");
            let h = 1e-6;
            let fd = (m.b(&(&u + &v * h)) - m.b(&(&u - &v * h))) / (2.0 * h);
            assert!((m.db(&u, &v) - fd).amax() < 1e-8, "{name}");
        }
    }

    #[test]
    fn classification_examples() {
        let c = classify(&spectrum(&[1.0]), &spectrum(&[-1.0]), 1).unwrap();
        assert_eq!((c.i_minus, c.i_plus, c.i, c.kind), (1, 1, 2, ShockKind::Lax));
        assert_eq!(c.gamma(), 0);

        let c = classify(&spectrum(&[1.0, 2.0]), &spectrum(&[-2.0, -1.0]), 2).unwrap();
        assert_eq!(c.i, 4);
        assert_eq!(c.kind, ShockKind::Overcompressive);

        let c = classify(&spectrum(&[-2.0, 1.0]), &spectrum(&[-1.0, 2.0]), 1).unwrap();
        assert_eq!(c.excess(), 0);
        assert_eq!(c.kind, ShockKind::Undercompressive);
        assert_eq!(c.gamma(), 1);

        assert!(matches!(
            classify(&spectrum(&[1.0, 2.0]), &spectrum(&[-2.0, -1.0]), 3),
            Err(Error::InconsistentEll { .. })
        ));
        let c = classify(&spectrum(&[1.0]), &spectrum(&[-1.0]), 2).unwrap();
        assert_eq!(c.kind, ShockKind::Mixed);
        assert_eq!(c.gamma(), 1);
    }

    #[test]
    fn inline_spec_builds_burgers() {
        let text = r#"
            name = "b"
            u_minus = [1.0]
            u_plus = [-1.0]
            flux = [[{ coef = 0.5, powers = [2] }]]
            viscosity = [[1.0]]
        "#;
        let spec: ModelSpec = toml::from_str(text).unwrap();
        let m = spec.build().unwrap();
        let u = State::from_element(1, 3.0);
        assert!((m.f(&u)[0] - 4.5).abs() < 1e-14);
        let bad = text.replace("viscosity", "viscositty");
        assert!(toml::from_str::<ModelSpec>(&bad).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn classification_invariant_under_flux_scaling(c in 0.05f64..20.0, name_idx in 0usize..4) {
                let m = registry(REGISTRY[name_idx]).unwrap();
                let scaled = m.with_flux_scaled(c);
                let ell = if REGISTRY[name_idx] == "burgers2x2" { 2 } else { 1 };
                let k0 = classify(
                    &endstate_spectrum(&m, Side::Minus).unwrap(),
                    &endstate_spectrum(&m, Side::Plus).unwrap(), ell).unwrap();
                let k1 = classify(
                    &endstate_spectrum(&scaled, Side::Minus).unwrap(),
                    &endstate_spectrum(&scaled, Side::Plus).unwrap(), ell).unwrap();
                prop_assert_eq!(k0.kind, k1.kind);
            }

            #[test]
            fn eigenpairs_satisfy_definitions(u1 in 0.2f64..3.0, u2 in 3.5f64..6.0) {
                let law = PolynomialLaw::constant_viscosity(
                    vec![Polynomial::monomial(0.5, &[2, 0]).plus(0.1, &[0, 2]),
                         Polynomial::monomial(0.2, &[1, 1]).plus(0.5, &[0, 2])],
                    &Matrix::identity(2, 2)).unwrap();
                let u = State::from_column_slice(&[u1, u2]);
                let m = FluxModel::new("p", Arc::new(law), u.clone(), u.clone()).unwrap();
                if let Ok(s) = endstate_spectrum(&m, Side::Minus) {
                    let a = m.df(&u);
                    for j in 0..2 {
                        let r = s.r.column(j);
                        let l = s.l.row(j);
                        prop_assert!((&a * r - r * s.a[j]).amax() < 1e-9);
                        prop_assert!((l * &a - l * s.a[j]).amax() < 1e-9);
                        for k in 0..2 {
                            let d = (l * s.r.column(k))[(0, 0)];
                            let expected = if j == k { 1.0 } else { 0.0 };
                            prop_assert!((d - expected).abs() < 1e-9);
                        }
                    }
                }
            }
        }
    }
}
