//! Linear solvers for singular periodic stiffness systems.
//!
//! Every equilibrium system in this crate has the constant function in its
//! kernel, so solutions are only determined up to a constant and right-hand
//! sides must have zero mean. The solvers here pick the zero-mean
//! representative.
//!
//! Two families are provided:
//!
//! * [`CyclicBandedMatrix`] with [`solve_constrained_direct`]: a direct solver
//!   for the symmetric cyclic banded matrices produced by 1D bond models.
//!   One unknown is pinned to reduce the singular system to a definite one;
//!   the reduced matrix is a band matrix plus a few corner entries from the
//!   periodic wrap, which are handled by a banded `L D L^T` factorization
//!   combined with the Woodbury identity.
//! * [`solve_constrained_cg`]: a Jacobi-preconditioned conjugate gradient
//!   iteration on a matrix-free [`LinearOperator`], used for the 2D systems.
//!
//! [`solve_constrained_dense`] is the dense reference path, used both as the
//! small-system fallback and as an oracle in tests.

use crate::error::{HqcError, Result};
use crate::scalar::Scalar;

/// A symmetric `n x n` matrix with cyclic band structure of bandwidth `bw`:
/// the only nonzero couplings are between sites `i` and `i + k (mod n)` for
/// `k <= bw`.
///
/// Storage is by "slot": `off[k-1][i]` accumulates the coupling between
/// storage sites `i` and `(i + k) % n`. For very small `n` several slots can
/// alias the same matrix entry; all operations treat slots additively, so the
/// represented matrix is always well defined.
#[derive(Debug, Clone)]
pub struct CyclicBandedMatrix<S> {
    n: usize,
    bw: usize,
    diag: Vec<S>,
    off: Vec<Vec<S>>,
}

impl<S: Scalar> CyclicBandedMatrix<S> {
    pub fn zeros(n: usize, bw: usize) -> Result<Self> {
        if n == 0 {
            return Err(HqcError::InvalidArgument("matrix dimension must be >= 1".into()));
        }
        if bw >= n {
            return Err(HqcError::InvalidArgument(format!(
                "bandwidth {bw} must be smaller than dimension {n}"
            )));
        }
        Ok(Self { n, bw, diag: vec![S::zero(); n], off: vec![vec![S::zero(); n]; bw] })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn wrap(&self, i: i64) -> usize {
        (i - 1).rem_euclid(self.n as i64) as usize
    }

    /// Accumulate the stiffness of a bond between sites `i` and `i + r`
    /// (1-based, periodic) with coefficient `c`:
    /// `+c` on both diagonal entries, `-c` on the coupling.
    pub fn add_bond(&mut self, i: i64, r: usize, c: S) {
        assert!(r >= 1 && r <= self.bw, "bond range {r} exceeds bandwidth {}", self.bw);
        let a = self.wrap(i);
        let b = self.wrap(i + r as i64);
        self.diag[a] += c;
        self.diag[b] += c;
        self.off[r - 1][a] -= c;
    }

    /// Accumulate `v` on the diagonal entry of site `i` (1-based, periodic).
    pub fn add_diag(&mut self, i: i64, v: S) {
        let a = self.wrap(i);
        self.diag[a] += v;
    }

    /// Matrix-vector product.
    pub fn apply(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.n);
        let mut y: Vec<S> = self.diag.iter().zip(x).map(|(&d, &xi)| d * xi).collect();
        for (k, row) in self.off.iter().enumerate() {
            let step = k + 1;
            for (i, &v) in row.iter().enumerate() {
                if v != S::zero() {
                    let j = (i + step) % self.n;
                    y[i] += v * x[j];
                    y[j] += v * x[i];
                }
            }
        }
        y
    }

    /// Max row sum of absolute values, `||A||_inf`. Used to estimate the
    /// attainable residual floor `eps ||A|| ||x||` of a solve.
    pub fn norm_inf(&self) -> S {
        let mut rows: Vec<S> = self.diag.iter().map(|d| d.abs()).collect();
        for (k, row) in self.off.iter().enumerate() {
            let step = k + 1;
            for (i, &v) in row.iter().enumerate() {
                let j = (i + step) % self.n;
                rows[i] += v.abs();
                rows[j] += v.abs();
            }
        }
        rows.into_iter().fold(S::zero(), S::max)
    }

    /// Dense copy of the represented matrix (for oracles and small systems).
    pub fn to_dense(&self) -> Vec<Vec<S>> {
        let mut a = vec![vec![S::zero(); self.n]; self.n];
        for (i, &d) in self.diag.iter().enumerate() {
            a[i][i] = d;
        }
        for (k, row) in self.off.iter().enumerate() {
            let step = k + 1;
            for (i, &v) in row.iter().enumerate() {
                let j = (i + step) % self.n;
                a[i][j] += v;
                a[j][i] += v;
            }
        }
        a
    }
}

/// Stiffness matrix of the nearest-neighbour form `<psi D u, D v>`, scaled by
/// `1 / weight`: the bond between sites `i` and `i + 1` has coefficient
/// `psi_i / (weight * delta^2)`.
pub fn nn_stiffness<S: Scalar>(psi: &[S], delta: S, weight: S) -> CyclicBandedMatrix<S> {
    let n = psi.len();
    let bw = if n > 1 { 1 } else { 0 };
    let mut a = CyclicBandedMatrix::zeros(n, bw).expect("valid dimensions");
    if n > 1 {
        let scale = weight * delta * delta;
        for (i, &p) in psi.iter().enumerate() {
            a.add_bond(i as i64 + 1, 1, p / scale);
        }
    }
    a
}

fn check_zero_mean<S: Scalar>(b: &[S]) -> Result<S> {
    let n = S::from_usize(b.len()).unwrap();
    let mean = b.iter().fold(S::zero(), |a, &v| a + v) / n;
    let scale = b.iter().fold(S::zero(), |a, &v| a.max(v.abs())).max(S::one());
    if mean.abs() > S::of(1e-9) * scale {
        return Err(HqcError::NonZeroMeanRhs { mean: mean.to_f64().unwrap() });
    }
    Ok(mean)
}

fn recenter<S: Scalar>(x: &mut [S]) {
    let n = S::from_usize(x.len()).unwrap();
    let mean = x.iter().fold(S::zero(), |a, &v| a + v) / n;
    for v in x.iter_mut() {
        *v -= mean;
    }
}

/// Solve `A x = b` for the zero-mean solution of a singular system whose
/// kernel is the constants. `b` must have (numerically) zero mean.
pub fn solve_constrained_direct<S: Scalar>(a: &CyclicBandedMatrix<S>, b: &[S]) -> Result<Vec<S>> {
    if b.len() != a.n {
        return Err(HqcError::GridMismatch(format!(
            "rhs length {} != matrix dimension {}",
            b.len(),
            a.n
        )));
    }
    let mean = check_zero_mean(b)?;
    if a.n == 1 {
        return Ok(vec![S::zero()]);
    }
    // Clean residual rounding in the mean before reducing the system.
    let b: Vec<S> = b.iter().map(|&v| v - mean).collect();
    // Small systems: slots may alias entries, and the corner bookkeeping is
    // not worth it. Go through the dense representation.
    if a.n < 4 * a.bw + 4 {
        return solve_constrained_dense(&a.to_dense(), &b);
    }
    solve_reduced_banded(a, &b)
}

/// Direct solve of the reduced definite system obtained by pinning the last
/// unknown to zero, then recentering.
fn solve_reduced_banded<S: Scalar>(a: &CyclicBandedMatrix<S>, b: &[S]) -> Result<Vec<S>> {
    let n = a.n;
    let m = n - 1;
    let bw = a.bw;

    // Band part of the reduced matrix and the periodic corner entries.
    let diag = a.diag[..m].to_vec();
    let mut band = vec![vec![S::zero(); m]; bw];
    let mut corners: Vec<(usize, usize, S)> = Vec::new();
    for k in 1..=bw {
        for i in 0..n {
            let v = a.off[k - 1][i];
            if v == S::zero() {
                continue;
            }
            let j = (i + k) % n;
            if i == m || j == m {
                continue; // touches the pinned unknown
            }
            if j == i + k {
                band[k - 1][i] += v;
            } else {
                corners.push((i, j, v));
            }
        }
    }

    let ldl = BandLdl::factor(&diag, &band, bw)?;
    let mut y = ldl.solve(b[..m].to_vec());

    if !corners.is_empty() {
        // Woodbury: A' = B + U W^T with two rank-1 terms per corner pair.
        let t = 2 * corners.len();
        let mut z = Vec::with_capacity(t); // B^{-1} U columns
        let mut w_idx = Vec::with_capacity(t); // W columns as (index, value)
        for &(i, j, v) in &corners {
            let mut ei = vec![S::zero(); m];
            ei[i] = S::one();
            z.push(ldl.solve(ei));
            w_idx.push((j, v));
            let mut ej = vec![S::zero(); m];
            ej[j] = S::one();
            z.push(ldl.solve(ej));
            w_idx.push((i, v));
        }
        // Small capacitance system (I + W^T Z) w = W^T y.
        let mut cap = vec![vec![S::zero(); t]; t];
        let mut rhs = vec![S::zero(); t];
        for s in 0..t {
            let (row, v) = w_idx[s];
            for c in 0..t {
                cap[s][c] = v * z[c][row];
                if s == c {
                    cap[s][c] += S::one();
                }
            }
            rhs[s] = v * y[row];
        }
        let w = lu_solve(&mut cap, &mut rhs)?;
        for s in 0..t {
            for i in 0..m {
                y[i] -= z[s][i] * w[s];
            }
        }
    }

    let mut x = y;
    x.push(S::zero());
    recenter(&mut x);
    Ok(x)
}

/// Banded `L D L^T` factorization of a symmetric positive definite band
/// matrix. `band[r-1][j]` holds the entry `(j, j+r)`.
struct BandLdl<S> {
    m: usize,
    bw: usize,
    d: Vec<S>,
    /// `l[r-1][j] = L[j+r][j]`.
    l: Vec<Vec<S>>,
}

impl<S: Scalar> BandLdl<S> {
    fn factor(diag: &[S], band: &[Vec<S>], bw: usize) -> Result<Self> {
        let m = diag.len();
        let scale = diag.iter().fold(S::zero(), |a, &v| a.max(v.abs())).max(S::one());
        let tol = S::of(1e-14) * scale;
        let mut d = vec![S::zero(); m];
        let mut l = vec![vec![S::zero(); m]; bw];
        for j in 0..m {
            let lo = j.saturating_sub(bw);
            let mut dj = diag[j];
            for k in lo..j {
                let ljk = l[j - k - 1][k];
                dj -= ljk * ljk * d[k];
            }
            if dj <= tol {
                return Err(HqcError::NonCoercive { smallest_pivot: dj.to_f64().unwrap() });
            }
            d[j] = dj;
            for r in 1..=bw {
                let i = j + r;
                if i >= m {
                    break;
                }
                let mut s = band[r - 1][j];
                let lo = i.saturating_sub(bw);
                for k in lo..j {
                    s -= l[i - k - 1][k] * l[j - k - 1][k] * d[k];
                }
                l[r - 1][j] = s / dj;
            }
        }
        Ok(Self { m, bw, d, l })
    }

    fn solve(&self, mut b: Vec<S>) -> Vec<S> {
        // Forward substitution L z = b.
        for i in 0..self.m {
            let lo = i.saturating_sub(self.bw);
            let mut v = b[i];
            for k in lo..i {
                v -= self.l[i - k - 1][k] * b[k];
            }
            b[i] = v;
        }
        for i in 0..self.m {
            b[i] /= self.d[i];
        }
        // Back substitution L^T x = z.
        for i in (0..self.m).rev() {
            let hi = (i + self.bw).min(self.m - 1);
            let mut v = b[i];
            for j in i + 1..=hi {
                v -= self.l[j - i - 1][i] * b[j];
            }
            b[i] = v;
        }
        b
    }
}

/// Dense LU solve with partial pivoting. Overwrites its arguments.
pub fn lu_solve<S: Scalar>(a: &mut [Vec<S>], b: &mut [S]) -> Result<Vec<S>> {
    let n = b.len();
    assert_eq!(a.len(), n);
    let scale = a
        .iter()
        .flat_map(|row| row.iter())
        .fold(S::zero(), |acc, &v| acc.max(v.abs()))
        .max(S::one());
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        if a[piv][col].abs() <= S::of(1e-14) * scale {
            return Err(HqcError::SingularSystem {
                pivot: a[piv][col].to_f64().unwrap(),
                index: col,
            });
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != S::zero() {
                for c in col..n {
                    let v = a[col][c];
                    a[r][c] -= f * v;
                }
                let v = b[col];
                b[r] -= f * v;
            }
        }
    }
    let mut x = vec![S::zero(); n];
    for r in (0..n).rev() {
        let mut v = b[r];
        for c in r + 1..n {
            v -= a[r][c] * x[c];
        }
        x[r] = v / a[r][r];
    }
    Ok(x)
}

/// Zero-mean solve of a dense symmetric singular system whose kernel is the
/// constants: pin the last unknown, factor the reduced SPD block by `L D L^T`,
/// recenter. `b` must have zero mean.
pub fn solve_constrained_dense<S: Scalar>(a: &[Vec<S>], b: &[S]) -> Result<Vec<S>> {
    let n = b.len();
    if a.len() != n {
        return Err(HqcError::GridMismatch(format!(
            "rhs length {} != matrix dimension {}",
            n,
            a.len()
        )));
    }
    let mean = check_zero_mean(b)?;
    if n == 1 {
        return Ok(vec![S::zero()]);
    }
    let m = n - 1;
    let scale = a
        .iter()
        .flat_map(|row| row.iter())
        .fold(S::zero(), |acc, &v| acc.max(v.abs()))
        .max(S::one());
    let tol = S::of(1e-13) * scale;
    // Dense L D L^T of the reduced block, stored in-place.
    let mut f = vec![vec![S::zero(); m]; m];
    for i in 0..m {
        f[i][..=i].copy_from_slice(&a[i][..=i]);
    }
    let mut d = vec![S::zero(); m];
    for j in 0..m {
        let mut dj = f[j][j];
        for k in 0..j {
            dj -= f[j][k] * f[j][k] * d[k];
        }
        if dj <= tol {
            return Err(HqcError::NonCoercive { smallest_pivot: dj.to_f64().unwrap() });
        }
        d[j] = dj;
        for i in j + 1..m {
            let mut s = f[i][j];
            for k in 0..j {
                s -= f[i][k] * f[j][k] * d[k];
            }
            f[i][j] = s / dj;
        }
    }
    let mut x: Vec<S> = b[..m].iter().map(|&v| v - mean).collect();
    for i in 0..m {
        for k in 0..i {
            let v = f[i][k] * x[k];
            x[i] -= v;
        }
    }
    for i in 0..m {
        x[i] /= d[i];
    }
    for i in (0..m).rev() {
        for j in i + 1..m {
            let v = f[j][i] * x[j];
            x[i] -= v;
        }
    }
    x.push(S::zero());
    recenter(&mut x);
    Ok(x)
}

/// A symmetric linear operator given by its action, for matrix-free
/// iterative solves.
pub trait LinearOperator<S> {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[S], y: &mut [S]);
    /// Diagonal of the operator, used for Jacobi preconditioning.
    fn diagonal(&self) -> Vec<S>;
}

/// Convergence report of an iterative solve.
#[derive(Debug, Clone, Copy)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Preconditioned conjugate gradients on the zero-mean subspace for a
/// symmetric positive semidefinite operator whose kernel is the constants.
/// Stops when the residual drops below `rel_tol` times the rhs norm.
pub fn solve_constrained_cg<S: Scalar>(
    op: &dyn LinearOperator<S>,
    b: &[S],
    rel_tol: S,
    max_iter: usize,
) -> Result<(Vec<S>, CgReport)> {
    let n = op.dim();
    if b.len() != n {
        return Err(HqcError::GridMismatch(format!(
            "rhs length {} != operator dimension {}",
            b.len(),
            n
        )));
    }
    check_zero_mean(b)?;
    let mut r = b.to_vec();
    recenter(&mut r);
    let norm2 = |v: &[S]| v.iter().fold(S::zero(), |a, &x| a + x * x).sqrt();
    let b_norm = norm2(&r);
    let mut x = vec![S::zero(); n];
    if b_norm == S::zero() {
        return Ok((x, CgReport { iterations: 0, relative_residual: 0.0 }));
    }
    let mut prec = op.diagonal();
    for p in prec.iter_mut() {
        *p = if p.abs() > S::zero() { S::one() / *p } else { S::one() };
    }
    let mut z: Vec<S> = r.iter().zip(&prec).map(|(&ri, &pi)| ri * pi).collect();
    recenter(&mut z);
    let mut p = z.clone();
    let mut rz = r.iter().zip(&z).fold(S::zero(), |a, (&ri, &zi)| a + ri * zi);
    let mut ap = vec![S::zero(); n];
    for it in 1..=max_iter {
        op.apply(&p, &mut ap);
        let pap = p.iter().zip(&ap).fold(S::zero(), |a, (&pi, &ai)| a + pi * ai);
        if pap <= S::zero() {
            return Err(HqcError::NonCoercive { smallest_pivot: pap.to_f64().unwrap() });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let res = norm2(&r);
        if res <= rel_tol * b_norm {
            recenter(&mut x);
            return Ok((
                x,
                CgReport { iterations: it, relative_residual: (res / b_norm).to_f64().unwrap() },
            ));
        }
        for i in 0..n {
            z[i] = r[i] * prec[i];
        }
        recenter(&mut z);
        let rz_new = r.iter().zip(&z).fold(S::zero(), |a, (&ri, &zi)| a + ri * zi);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(HqcError::NoConvergence {
        iterations: max_iter,
        residual: (norm2(&r) / b_norm).to_f64().unwrap(),
    })
}
