//! Divergence-form semi-implicit stepper (SBDF2) on a uniform grid.
//!
//! Node `i` sits at `x_i`; face `k` lies between nodes `k - 1` and `k`, so
//! faces `0` and `N` touch the ghost nodes used for the homogeneous Neumann
//! condition on the perturbation.

use crate::error::{Error, Result};
use crate::linalg::{block_tridiagonal_solve, tridiagonal_solve, Matrix, State};
use crate::model::FluxModel;

pub(crate) enum Physics {
    /// `v_t = D(ubar + v) - D(ubar) [+ sigma' (ubar + v)_x]`.
    Nonlinear { r0: Vec<f64>, tracked: bool },
    /// `v_t = (B v_x)_x - (A v)_x` with `A` at nodes (ghosts included) and `B` at faces.
    Linear { a_nodes: Vec<f64>, b_faces: Vec<f64> },
}

pub(crate) struct Stepper<'a> {
    model: &'a FluxModel,
    pub n: usize,
    pub nodes: usize,
    pub dx: f64,
    /// Background with one ghost on each side: entry `(i + 1) * n` is node `i`.
    ubar: Vec<f64>,
    psi: Vec<f64>,
    bconst: Option<Vec<f64>>,
    physics: Physics,
    w: Vec<f64>,
    fnode: Vec<f64>,
    pub face_b: Vec<f64>,
    flux: Vec<f64>,
    tmp: Vec<f64>,
    /// Baumgarte relaxation time of the phase condition.
    pub relax: f64,
}

/// Result of one right-hand-side evaluation.
pub(crate) struct Rhs {
    pub value: Vec<f64>,
    pub sigma_dot: f64,
    /// `sum(value) * dx` written as boundary terms only.
    pub boundary: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(model: &'a FluxModel, dx: f64, ubar: Vec<f64>, psi: Vec<f64>, linear: bool, tracked: bool) -> Self {
        let n = model.dim();
        let nodes = ubar.len() / n - 2;
        let bconst = model.has_constant_viscosity().then(|| {
            let mut b = vec![0.0; n * n];
            model.b_into(&ubar[..n], &mut b);
            b
        });
        let mut s = Self {
            model,
            n,
            nodes,
            dx,
            ubar,
            psi,
            bconst,
            physics: Physics::Nonlinear { r0: Vec::new(), tracked },
            w: vec![0.0; (nodes + 2) * n],
            fnode: vec![0.0; (nodes + 2) * n],
            face_b: vec![0.0; (nodes + 1) * n * n],
            flux: vec![0.0; (nodes + 1) * n],
            tmp: vec![0.0; n],
            relax: 1.0,
        };
        if linear {
            s.physics = s.linear_physics();
        } else {
            let zero = vec![0.0; nodes * n];
            let mut r0 = vec![0.0; nodes * n];
            s.divergence(&zero, &mut r0);
            s.physics = Physics::Nonlinear { r0, tracked };
        }
        s
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.physics, Physics::Linear { .. })
    }

    fn linear_physics(&self) -> Physics {
        let (n, nodes) = (self.n, self.nodes);
        let mut a_nodes = vec![0.0; (nodes + 2) * n * n];
        let mut b_faces = vec![0.0; (nodes + 1) * n * n];
        for i in 0..nodes + 2 {
            let u = State::from_column_slice(&self.ubar[i * n..(i + 1) * n]);
            let du = if i == 0 || i == nodes + 1 {
                State::zeros(n)
            } else {
                State::from_column_slice(&self.psi[(i - 1) * n..i * n])
            };
            let mut a = self.model.df(&u);
            for k in 0..n {
                let mut e = State::zeros(n);
                e[k] = 1.0;
                let col = self.model.db(&u, &e) * &du;
                for r in 0..n {
                    a[(r, k)] -= col[r];
                }
            }
            for r in 0..n {
                for c in 0..n {
                    a_nodes[(i * n + r) * n + c] = a[(r, c)];
                }
            }
        }
        let mut mid = vec![0.0; n];
        for k in 0..nodes + 1 {
            for c in 0..n {
                mid[c] = 0.5 * (self.ubar[k * n + c] + self.ubar[(k + 1) * n + c]);
            }
            self.model.b_into(&mid, &mut b_faces[k * n * n..(k + 1) * n * n]);
        }
        Physics::Linear { a_nodes, b_faces }
    }

    /// Loads `w = ubar + v` with Neumann ghosts on `v`.
    fn load(&mut self, v: &[f64]) {
        let (n, nodes) = (self.n, self.nodes);
        for c in 0..n {
            self.w[c] = self.ubar[c] + v[c];
            self.w[(nodes + 1) * n + c] = self.ubar[(nodes + 1) * n + c] + v[(nodes - 1) * n + c];
        }
        for i in 0..nodes * n {
            self.w[n + i] = self.ubar[n + i] + v[i];
        }
    }

    /// `out = D(ubar + v)`; fills `face_b` and `flux`.
    fn divergence(&mut self, v: &[f64], out: &mut [f64]) {
        let (n, nodes, dx) = (self.n, self.nodes, self.dx);
        self.load(v);
        for i in 0..nodes + 2 {
            let (a, b) = (i * n, (i + 1) * n);
            self.model.f_into(&self.w[a..b], &mut self.fnode[a..b]);
        }
        let nn = n * n;
        for k in 0..nodes + 1 {
            let (l, r) = (k * n, (k + 1) * n);
            let fb = &mut self.face_b[k * nn..(k + 1) * nn];
            match &self.bconst {
                Some(b) => fb.copy_from_slice(b),
                None => {
                    for c in 0..n {
                        self.tmp[c] = 0.5 * (self.w[l + c] + self.w[r + c]);
                    }
                    self.model.b_into(&self.tmp, fb);
                }
            }
            for c in 0..n {
                let mut diff = 0.0;
                for d in 0..n {
                    diff += fb[c * n + d] * (self.w[r + d] - self.w[l + d]);
                }
                self.flux[l + c] = 0.5 * (self.fnode[l + c] + self.fnode[r + c]) - diff / dx;
            }
        }
        for i in 0..nodes {
            for c in 0..n {
                out[i * n + c] = -(self.flux[(i + 1) * n + c] - self.flux[i * n + c]) / dx;
            }
        }
    }

    fn linear_rhs(&mut self, v: &[f64], out: &mut [f64]) -> f64 {
        let (n, nodes, dx) = (self.n, self.nodes, self.dx);
        let Physics::Linear { a_nodes, b_faces } = &self.physics else { unreachable!() };
        let nn = n * n;
        let val = |i: isize, c: usize| -> f64 {
            let j = i.clamp(0, nodes as isize - 1) as usize;
            v[j * n + c]
        };
        for k in 0..nodes + 1 {
            let (il, ir) = (k as isize - 1, k as isize);
            for c in 0..n {
                let mut conv = 0.0;
                let mut diff = 0.0;
                for d in 0..n {
                    conv += a_nodes[k * nn + c * n + d] * val(il, d) + a_nodes[(k + 1) * nn + c * n + d] * val(ir, d);
                    diff += b_faces[k * nn + c * n + d] * (val(ir, d) - val(il, d));
                }
                self.flux[k * n + c] = 0.5 * conv - diff / dx;
            }
        }
        self.face_b.copy_from_slice(b_faces);
        for i in 0..nodes {
            for c in 0..n {
                out[i * n + c] = -(self.flux[(i + 1) * n + c] - self.flux[i * n + c]) / dx;
            }
        }
        let mut bd = 0.0;
        for c in 0..n {
            bd += self.flux[c] - self.flux[nodes * n + c];
        }
        bd
    }

    pub fn rhs(&mut self, v: &[f64]) -> Rhs {
        let (n, nodes, dx) = (self.n, self.nodes, self.dx);
        let mut out = vec![0.0; nodes * n];
        if matches!(self.physics, Physics::Linear { .. }) {
            let boundary = self.linear_rhs(v, &mut out);
            return Rhs { value: out, sigma_dot: 0.0, boundary };
        }
        self.divergence(v, &mut out);
        let Physics::Nonlinear { r0, tracked } = &self.physics else { unreachable!() };
        for (o, r) in out.iter_mut().zip(r0) {
            *o -= r;
        }
        // Boundary terms of D(w) - D(ubar); the background part telescopes the same way.
        let mut boundary = 0.0;
        for c in 0..n {
            boundary += self.flux[c] - self.flux[nodes * n + c];
        }
        let bg: f64 = r0.iter().sum::<f64>() * dx;
        boundary -= bg;
        let mut sigma_dot = 0.0;
        if *tracked {
            let w = &self.w;
            let central = |i: usize, c: usize| (w[(i + 2) * n + c] - w[i * n + c]) / (2.0 * dx);
            let (mut num, mut den, mut mis) = (0.0, 0.0, 0.0);
            for i in 0..nodes {
                for c in 0..n {
                    let p = self.psi[i * n + c];
                    num += out[i * n + c] * p;
                    den += central(i, c) * p;
                    mis += v[i * n + c] * p;
                }
            }
            sigma_dot = -(num + mis / self.relax) / den;
            for i in 0..nodes {
                for c in 0..n {
                    out[i * n + c] += sigma_dot * central(i, c);
                }
            }
            for c in 0..n {
                boundary += sigma_dot
                    * 0.5
                    * (w[(nodes + 1) * n + c] + w[nodes * n + c] - w[n + c] - w[c]);
            }
        }
        Rhs { value: out, sigma_dot, boundary }
    }

    /// `K v` for the frozen face viscosities in `face_b` (Neumann faces dropped).
    pub fn apply_k(&self, v: &[f64], out: &mut [f64]) {
        let (n, nodes) = (self.n, self.nodes);
        let nn = n * n;
        let h2 = self.dx * self.dx;
        out.iter_mut().for_each(|o| *o = 0.0);
        for k in 1..nodes {
            let fb = &self.face_b[k * nn..(k + 1) * nn];
            for c in 0..n {
                let mut g = 0.0;
                for d in 0..n {
                    g += fb[c * n + d] * (v[k * n + d] - v[(k - 1) * n + d]);
                }
                out[(k - 1) * n + c] += g / h2;
                out[k * n + c] -= g / h2;
            }
        }
    }

    /// Solve `(alpha I - dt K) x = rhs`.
    pub fn solve_implicit(&self, alpha: f64, dt: f64, rhs: &[f64]) -> Result<Vec<f64>> {
        let (n, nodes) = (self.n, self.nodes);
        let nn = n * n;
        let h2 = self.dx * self.dx;
        let face = |k: usize| -> &[f64] {
            if k == 0 || k == nodes {
                &[]
            } else {
                &self.face_b[k * nn..(k + 1) * nn]
            }
        };
        if n == 1 {
            let mut a = vec![0.0; nodes];
            let mut b = vec![alpha; nodes];
            let mut c = vec![0.0; nodes];
            for i in 0..nodes {
                if let [bl] = face(i) {
                    a[i] = -dt * bl / h2;
                    b[i] += dt * bl / h2;
                }
                if let [br] = face(i + 1) {
                    c[i] = -dt * br / h2;
                    b[i] += dt * br / h2;
                }
            }
            return Ok(tridiagonal_solve(&a, &b, &c, rhs));
        }
        let mat = |s: &[f64]| Matrix::from_row_slice(n, n, s);
        let zero = Matrix::zeros(n, n);
        let mut lower = Vec::with_capacity(nodes);
        let mut diag = Vec::with_capacity(nodes);
        let mut upper = Vec::with_capacity(nodes);
        let mut r = Vec::with_capacity(nodes);
        for i in 0..nodes {
            let mut d = Matrix::identity(n, n) * alpha;
            let fl = face(i);
            let fr = face(i + 1);
            if fl.is_empty() {
                lower.push(zero.clone());
            } else {
                let m = mat(fl) * (dt / h2);
                d += &m;
                lower.push(-m);
            }
            if fr.is_empty() {
                upper.push(zero.clone());
            } else {
                let m = mat(fr) * (dt / h2);
                d += &m;
                upper.push(-m);
            }
            diag.push(d);
            r.push(State::from_column_slice(&rhs[i * n..(i + 1) * n]));
        }
        let x = block_tridiagonal_solve(&lower, &diag, &upper, &r)?;
        let mut out: Vec<f64> = Vec::with_capacity(nodes * n);
        for xi in x {
            out.extend(xi.iter());
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::DomainError("implicit solve produced non-finite values".into()));
        }
        Ok(out)
    }
}
