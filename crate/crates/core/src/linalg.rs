//! Small dense and banded linear-algebra helpers used across the toolkit.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type State = DVector<f64>;
pub type Matrix = DMatrix<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Eigenvalues of a complex square matrix via complex Schur decomposition.
pub fn complex_eigenvalues(m: &CMatrix) -> Vec<C64> {
    let n = m.nrows();
    if n == 1 {
        return vec![m[(0, 0)]];
    }
    match m.clone().try_schur(1e-14, 10_000) {
        Some(s) => {
            let (_, t) = s.unpack();
            (0..n).map(|i| t[(i, i)]).collect()
        }
        None => {
            // Fall back to the realification; eigenvalues come in (mu, conj(mu)) pairs there,
            // so keep the ones whose residual against m is small.
            let mut cands = realified(m).complex_eigenvalues().iter().copied().collect::<Vec<_>>();
            cands.sort_by(|a, b| {
                smallest_singular(&shifted(m, *a))
                    .partial_cmp(&smallest_singular(&shifted(m, *b)))
                    .unwrap()
            });
            cands.truncate(n);
            cands
        }
    }
}

fn realified(m: &CMatrix) -> Matrix {
    let n = m.nrows();
    let mut r = Matrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            r[(i, j)] = m[(i, j)].re;
            r[(i, j + n)] = -m[(i, j)].im;
            r[(i + n, j)] = m[(i, j)].im;
            r[(i + n, j + n)] = m[(i, j)].re;
        }
    }
    r
}

fn shifted(m: &CMatrix, mu: C64) -> CMatrix {
    let mut s = m.clone();
    for i in 0..m.nrows() {
        s[(i, i)] -= mu;
    }
    s
}

fn smallest_singular(m: &CMatrix) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    sv.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Right null vector of a (numerically) singular complex matrix: the right
/// singular vector of its smallest singular value, unit 2-norm.
pub fn complex_null_vector(m: &CMatrix) -> CVector {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    v_t.row(k).transpose().map(|z| z.conj())
}

/// Eigenpair data for a real matrix whose spectrum is real and simple.
#[derive(Debug, Clone)]
pub struct RealEigen {
    /// Sorted increasing.
    pub values: Vec<f64>,
    /// Right eigenvectors as columns (unit norm, largest entry positive).
    pub right: Matrix,
    /// Left eigenvectors as rows, scaled so that `left * right = I`.
    pub left: Matrix,
}

/// Diagonalize a real matrix with real distinct spectrum. Eigenvalues whose
/// imaginary part exceeds `tol` or which coincide within `tol` are rejected.
pub fn real_eigen(a: &Matrix, tol: f64) -> Result<RealEigen> {
    let n = a.nrows();
    let scale = 1.0 + a.amax();
    let raw = a.clone().complex_eigenvalues();
    let mut values = Vec::with_capacity(n);
    for z in raw.iter() {
        if z.im.abs() > tol * scale {
            return Err(Error::NonRealSpectrum(format!("eigenvalue {}{:+}i", z.re, z.im)));
        }
        values.push(z.re);
    }
    values.sort_by(|x, y| x.partial_cmp(y).unwrap());
    for w in values.windows(2) {
        if (w[1] - w[0]).abs() < tol * scale {
            return Err(Error::NonRealSpectrum(format!("repeated eigenvalue {}", w[0])));
        }
    }
    let mut right = Matrix::zeros(n, n);
    let mut left = Matrix::zeros(n, n);
    for (j, &lam) in values.iter().enumerate() {
        let shifted = a - Matrix::identity(n, n) * lam;
        let r = real_null_vector(&shifted);
        let l = real_null_vector(&shifted.transpose());
        right.set_column(j, &r);
        left.set_row(j, &l.transpose());
    }
    for j in 0..n {
        let d = left.row(j).dot(&right.column(j).transpose());
        if d.abs() < 1e-300 {
            return Err(Error::NonRealSpectrum("defective eigenvector pair".into()));
        }
        let row = left.row(j) / d;
        left.set_row(j, &row);
    }
    Ok(RealEigen { values, right, left })
}

fn real_null_vector(m: &Matrix) -> State {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let mut v = v_t.row(k).transpose();
    let imax = v.iamax();
    if v[imax] < 0.0 {
        v = -v;
    }
    let norm = v.norm();
    v / norm
}

/// Orthonormal basis (as rows) of the orthogonal complement of the span of
/// the given columns.
pub fn orthogonal_complement_rows(cols: &Matrix, n: usize) -> Matrix {
    if cols.ncols() == 0 {
        return Matrix::identity(n, n);
    }
    let svd = cols.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10).count();
    let mut out = Matrix::zeros(n - rank, n);
    // Columns of the full U beyond the rank span the complement; nalgebra's thin
    // SVD only returns min(n, k) columns, so complete with Gram-Schmidt.
    let mut basis: Vec<State> = (0..rank).map(|j| u.column(j).into_owned()).collect();
    let mut row = 0;
    for e in 0..n {
        if row == n - rank {
            break;
        }
        let mut v = State::zeros(n);
        v[e] = 1.0;
        for b in &basis {
            let c = b.dot(&v);
            v -= b * c;
        }
        for b in &basis {
            let c = b.dot(&v);
            v -= b * c;
        }
        if v.norm() > 1e-8 {
            v /= v.norm();
            out.set_row(row, &v.transpose());
            basis.push(v);
            row += 1;
        }
    }
    out
}

/// Symmetric positive (semi)definite banded matrix stored by lower diagonals:
/// `band[d][i]` holds entry `(i + d, i)`.
#[derive(Debug, Clone)]
pub struct SymBanded {
    pub n: usize,
    pub bw: usize,
    band: Vec<Vec<f64>>,
}

impl SymBanded {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, band: vec![vec![0.0; n]; bw + 1] }
    }

    /// Add `v` to entry (i, j); entries outside the band are ignored only if zero.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let d = hi - lo;
        debug_assert!(d <= self.bw, "entry outside band");
        self.band[d][lo] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let d = hi - lo;
        if d > self.bw {
            0.0
        } else {
            self.band[d][lo]
        }
    }

    /// In-place banded Cholesky; returns the factor.
    pub fn cholesky(mut self) -> Result<BandCholesky> {
        let n = self.n;
        let bw = self.bw;
        for j in 0..n {
            let mut d = self.band[0][j];
            for k in j.saturating_sub(bw)..j {
                let l = self.band[j - k][k];
                d -= l * l;
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::DomainError(format!("banded Cholesky breakdown at row {j}")));
            }
            let d = d.sqrt();
            self.band[0][j] = d;
            for i in (j + 1)..(j + bw + 1).min(n) {
                let mut s = self.band[i - j][j];
                for k in i.saturating_sub(bw)..j {
                    s -= self.band[i - k][k] * self.band[j - k][k];
                }
                self.band[i - j][j] = s / d;
            }
        }
        Ok(BandCholesky { f: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandCholesky {
    f: SymBanded,
}

impl BandCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.f.n;
        let bw = self.f.bw;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.f.band[i - k][k] * y[k];
            }
            y[i] = s / self.f.band[0][i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..(i + bw + 1).min(n) {
                s -= self.f.band[k - i][i] * y[k];
            }
            y[i] = s / self.f.band[0][i];
        }
        y
    }
}

/// Sparse row of a least-squares system: `(column, value)` pairs.
pub type SparseRow = Vec<(usize, f64)>;

/// Solve the least-squares problem `min |J x - r|` where most rows of `J` are
/// local (bandwidth `bw` in the normal equations) and a few rows are dense.
/// Normal equations are assembled for the banded part; dense rows are folded
/// in through the Woodbury identity.
pub fn banded_least_squares(
    n: usize,
    bw: usize,
    rows: &[(SparseRow, f64)],
    dense_rows: &[(Vec<f64>, f64)],
) -> Result<Vec<f64>> {
    let mut a = SymBanded::zeros(n, bw);
    let mut rhs = vec![0.0; n];
    for (row, r) in rows {
        for &(i, vi) in row {
            rhs[i] += vi * r;
            for &(j, vj) in row {
                if j <= i {
                    a.add(i, j, vi * vj);
                }
            }
        }
    }
    // Tiny Tikhonov shift keeps the factorization defined when the banded part
    // alone is rank deficient (the dense rows then fix the null direction).
    let diag_scale = (0..n).map(|i| a.get(i, i)).fold(0.0_f64, f64::max).max(1.0);
    let shift = if dense_rows.is_empty() { 0.0 } else { 1e-13 * diag_scale };
    for i in 0..n {
        a.add(i, i, shift);
    }
    for (row, r) in dense_rows {
        for (i, v) in row.iter().enumerate() {
            rhs[i] += v * r;
        }
    }
    let chol = a.cholesky()?;
    let y = chol.solve(&rhs);
    if dense_rows.is_empty() {
        return Ok(y);
    }
    // (A + V^T V)^{-1} b = y - Z (I + V Z)^{-1} V y, with Z = A^{-1} V^T.
    let k = dense_rows.len();
    let z: Vec<Vec<f64>> = dense_rows.iter().map(|(row, _)| chol.solve(row)).collect();
    let mut cap = Matrix::identity(k, k);
    let mut vy = State::zeros(k);
    for (p, (row, _)) in dense_rows.iter().enumerate() {
        vy[p] = dot(row, &y);
        for q in 0..k {
            cap[(p, q)] += dot(row, &z[q]);
        }
    }
    let w = cap
        .lu()
        .solve(&vy)
        .ok_or_else(|| Error::DomainError("singular capacitance matrix".into()))?;
    let mut x = y;
    for q in 0..k {
        for i in 0..n {
            x[i] -= z[q][i] * w[q];
        }
    }
    Ok(x)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve a block-tridiagonal system with square blocks of size `m`:
/// `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]`.
/// `lower[0]` and `upper[last]` are ignored. Block Thomas algorithm.
pub fn block_tridiagonal_solve(
    lower: &[Matrix],
    diag: &[Matrix],
    upper: &[Matrix],
    rhs: &[State],
) -> Result<Vec<State>> {
    let nb = diag.len();
    let mut c_prime: Vec<Matrix> = Vec::with_capacity(nb);
    let mut d_prime: Vec<State> = Vec::with_capacity(nb);
    for i in 0..nb {
        let (denom, d) = if i == 0 {
            (diag[0].clone(), rhs[0].clone())
        } else {
            (
                &diag[i] - &lower[i] * &c_prime[i - 1],
                &rhs[i] - &lower[i] * &d_prime[i - 1],
            )
        };
        let lu = denom.lu();
        let cp = if i + 1 < nb {
            lu.solve(&upper[i])
                .ok_or_else(|| Error::DomainError(format!("singular block at {i}")))?
        } else {
            Matrix::zeros(0, 0)
        };
        let dp = lu
            .solve(&d)
            .ok_or_else(|| Error::DomainError(format!("singular block at {i}")))?;
        c_prime.push(cp);
        d_prime.push(dp);
    }
    let mut x = vec![State::zeros(0); nb];
    x[nb - 1] = d_prime[nb - 1].clone();
    for i in (0..nb - 1).rev() {
        x[i] = &d_prime[i] - &c_prime[i] * &x[i + 1];
    }
    Ok(x)
}

/// Scalar tridiagonal solve (Thomas algorithm), `a` sub-, `b` main, `c` super-diagonal.
pub fn tridiagonal_solve(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    cp[0] = c[0] / b[0];
    dp[0] = d[0] / b[0];
    for i in 1..n {
        let m = b[i] - a[i] * cp[i - 1];
        cp[i] = if i + 1 < n { c[i] / m } else { 0.0 };
        dp[i] = (d[i] - a[i] * dp[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x
}
