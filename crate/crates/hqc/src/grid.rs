//! Periodic lattice function spaces and discrete calculus.
//!
//! Functions live on an `n`-periodic 1D lattice with spacing `delta`.
//! Site indices follow the 1-based convention (`X_i`, `i = 1..=n`), and any
//! integer index is interpreted modulo the period. The discrete derivative,
//! translation, integration and the norm family defined here are the
//! foundation for every other module.

use crate::error::{HqcError, Result};
use crate::scalar::Scalar;
use crate::solver;

/// An `n`-periodic 1D lattice with spacing `delta > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicGrid1D<S> {
    n: usize,
    delta: S,
}

impl<S: Scalar> PeriodicGrid1D<S> {
    pub fn new(n: usize, delta: S) -> Result<Self> {
        if n == 0 {
            return Err(HqcError::InvalidArgument("grid period n must be >= 1".into()));
        }
        if !(delta > S::zero()) {
            return Err(HqcError::InvalidArgument("grid spacing delta must be > 0".into()));
        }
        Ok(Self { n, delta })
    }

    /// Unit domain grid: `n` sites, spacing `1/n`.
    pub fn unit_domain(n: usize) -> Result<Self> {
        Self::new(n, S::of(1.0) / S::from_usize(n).unwrap())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta(&self) -> S {
        self.delta
    }

    /// Coordinate of site `i` (1-based): `X_i = i * delta`.
    pub fn x(&self, i: i64) -> S {
        S::from_i64(i).unwrap() * self.delta
    }

    /// Map an arbitrary 1-based site index into storage index `0..n`.
    #[inline]
    pub fn wrap(&self, i: i64) -> usize {
        (i - 1).rem_euclid(self.n as i64) as usize
    }
}

/// A real-valued `n`-periodic function on the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeFn1D<S> {
    grid: PeriodicGrid1D<S>,
    values: Vec<S>,
}

/// Norms of the discrete function space family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    /// `L^q` norm, `q >= 1`.
    Lq(f64),
    /// Max norm.
    Linf,
    /// `W^{1,q}` seminorm: `L^q` norm of the forward derivative.
    W1q(f64),
    /// `H^1` seminorm (`W^{1,2}`).
    H1,
    /// `H^2` seminorm: `L^2` norm of the second forward derivative.
    H2,
    /// `H^{-1}` norm over zero-mean test functions.
    Hm1,
}

impl<S: Scalar> LatticeFn1D<S> {
    pub fn from_values(grid: PeriodicGrid1D<S>, values: Vec<S>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(HqcError::GridMismatch(format!(
                "expected {} values, got {}",
                grid.n(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: PeriodicGrid1D<S>) -> Self {
        let n = grid.n();
        Self { grid, values: vec![S::zero(); n] }
    }

    /// Build from a closure of the 1-based site index.
    pub fn from_fn(grid: PeriodicGrid1D<S>, f: impl Fn(usize) -> S) -> Self {
        let values = (1..=grid.n()).map(f).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> PeriodicGrid1D<S> {
        self.grid
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    /// Value at an arbitrary integer site index (1-based, periodic).
    #[inline]
    pub fn value(&self, i: i64) -> S {
        self.values[self.grid.wrap(i)]
    }

    fn same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(HqcError::GridMismatch("operands on different grids".into()));
        }
        Ok(())
    }

    /// Translation: `(T^r u)(X_i) = u(X_{i+r})`.
    pub fn translate(&self, r: i64) -> Self {
        let n = self.grid.n();
        let values = (1..=n as i64).map(|i| self.value(i + r)).collect();
        Self { grid: self.grid, values }
    }

    /// The `r`-step discrete derivative `D_r u(X_i) = (u(X_{i+r}) - u(X_i)) / (r delta)`.
    pub fn diff(&self, r: i64) -> Result<Self> {
        if r == 0 {
            return Err(HqcError::InvalidArgument("diff step r must be nonzero".into()));
        }
        let n = self.grid.n();
        let h = S::from_i64(r).unwrap() * self.grid.delta();
        let values = (1..=n as i64).map(|i| (self.value(i + r) - self.value(i)) / h).collect();
        Ok(Self { grid: self.grid, values })
    }

    /// Discrete integration: `(1/n) sum u_i`.
    pub fn average(&self) -> S {
        let sum = self.values.iter().fold(S::zero(), |a, &v| a + v);
        sum / S::from_usize(self.grid.n()).unwrap()
    }

    /// Bilinear form `(1/n) sum u_i v_i`.
    pub fn inner(&self, other: &Self) -> Result<S> {
        self.same_grid(other)?;
        let sum = self
            .values
            .iter()
            .zip(&other.values)
            .fold(S::zero(), |a, (&u, &v)| a + u * v);
        Ok(sum / S::from_usize(self.grid.n()).unwrap())
    }

    /// Subtract the mean, yielding an exactly zero-average function.
    pub fn project_zero_mean(&self) -> ZeroMeanFn1D<S> {
        let mean = self.average();
        let values = self.values.iter().map(|&v| v - mean).collect();
        ZeroMeanFn1D(Self { grid: self.grid, values })
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        let values = self.values.iter().map(|&v| f(v)).collect();
        Self { grid: self.grid, values }
    }

    /// Pointwise `self + alpha * other`.
    pub fn axpy(&self, alpha: S, other: &Self) -> Result<Self> {
        self.same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&u, &v)| u + alpha * v)
            .collect();
        Ok(Self { grid: self.grid, values })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.axpy(S::of(-1.0), other)
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&u, &v)| u * v)
            .collect();
        Ok(Self { grid: self.grid, values })
    }

    fn lq(&self, values: &[S], q: f64) -> Result<S> {
        if q < 1.0 {
            return Err(HqcError::InvalidArgument(format!("Lq norm requires q >= 1, got {q}")));
        }
        let n = S::from_usize(self.grid.n()).unwrap();
        if q == f64::INFINITY {
            return Ok(values.iter().fold(S::zero(), |a, &v| a.max(v.abs())));
        }
        let qs = S::of(q);
        let sum = values.iter().fold(S::zero(), |a, &v| a + v.abs().powf(qs));
        Ok((sum / n).powf(S::one() / qs))
    }

    /// Norm in one of the discrete spaces.
    ///
    /// `Hm1` is computed through the auxiliary Poisson characterization:
    /// `|v|_{H^-1} = |z|_{H^1}` where `z` is the zero-mean solution of
    /// `<Dz, Dw> = <v, w>` for all zero-mean `w`. It requires `v` to have
    /// zero average.
    pub fn norm(&self, kind: NormKind) -> Result<S> {
        match kind {
            NormKind::Lq(q) => self.lq(&self.values, q),
            NormKind::Linf => self.lq(&self.values, f64::INFINITY),
            NormKind::W1q(q) => self.lq(&self.diff(1)?.values, q),
            NormKind::H1 => self.lq(&self.diff(1)?.values, 2.0),
            NormKind::H2 => self.lq(&self.diff(1)?.diff(1)?.values, 2.0),
            NormKind::Hm1 => self.hm1(),
        }
    }

    fn hm1(&self) -> Result<S> {
        let n = self.grid.n();
        if n == 1 {
            return Ok(S::zero());
        }
        let mean = self.average();
        let scale = self.lq(&self.values, f64::INFINITY)?;
        let tol = S::of(1e-12) * scale.max(S::one());
        if mean.abs() > tol {
            return Err(HqcError::NonZeroMeanRhs { mean: mean.to_f64().unwrap() });
        }
        // Stiffness of <Dz, Dw>: cyclic tridiagonal with unit coefficient.
        let ones = vec![S::one(); n];
        let a = solver::nn_stiffness(&ones, self.grid.delta(), S::from_usize(n).unwrap());
        let b: Vec<S> = self
            .values
            .iter()
            .map(|&v| (v - mean) / S::from_usize(n).unwrap())
            .collect();
        let z = solver::solve_constrained_direct(&a, &b)?;
        let zf = Self { grid: self.grid, values: z };
        zf.norm(NormKind::H1)
    }
}

/// A periodic lattice function with zero average.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroMeanFn1D<S>(LatticeFn1D<S>);

impl<S: Scalar> ZeroMeanFn1D<S> {
    /// Wrap an existing function, checking that its mean is small.
    pub fn new(f: LatticeFn1D<S>) -> Result<Self> {
        let scale = f.norm(NormKind::Linf)?;
        let tol = S::of(1e-12) * scale.max(S::one());
        let mean = f.average();
        if mean.abs() > tol {
            return Err(HqcError::NonZeroMeanRhs { mean: mean.to_f64().unwrap() });
        }
        Ok(Self(f))
    }

    pub fn zeros(grid: PeriodicGrid1D<S>) -> Self {
        Self(LatticeFn1D::zeros(grid))
    }

    pub fn as_fn(&self) -> &LatticeFn1D<S> {
        &self.0
    }

    pub fn into_fn(self) -> LatticeFn1D<S> {
        self.0
    }
}

impl<S> std::ops::Deref for ZeroMeanFn1D<S> {
    type Target = LatticeFn1D<S>;

    fn deref(&self) -> &Self::Target {
        &self.0
    }
}

/// A function of a slow index (period `n_slow`) and a fast index (period `p`),
/// stored as a dense `n_slow x p` table. Both indices are 1-based periodic.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoScaleFn<S> {
    n_slow: usize,
    p_fast: usize,
    values: Vec<S>,
}

impl<S: Scalar> TwoScaleFn<S> {
    pub fn from_values(n_slow: usize, p_fast: usize, values: Vec<S>) -> Result<Self> {
        if n_slow == 0 || p_fast == 0 {
            return Err(HqcError::InvalidArgument("two-scale periods must be >= 1".into()));
        }
        if values.len() != n_slow * p_fast {
            return Err(HqcError::GridMismatch(format!(
                "expected {} values, got {}",
                n_slow * p_fast,
                values.len()
            )));
        }
        Ok(Self { n_slow, p_fast, values })
    }

    pub fn from_fn(n_slow: usize, p_fast: usize, f: impl Fn(usize, usize) -> S) -> Self {
        let mut values = Vec::with_capacity(n_slow * p_fast);
        for i in 1..=n_slow {
            for j in 1..=p_fast {
                values.push(f(i, j));
            }
        }
        Self { n_slow, p_fast, values }
    }

    pub fn n_slow(&self) -> usize {
        self.n_slow
    }

    pub fn p_fast(&self) -> usize {
        self.p_fast
    }

    /// Value at slow index `i`, fast index `j` (1-based, both periodic).
    #[inline]
    pub fn value(&self, i: i64, j: i64) -> S {
        let i = (i - 1).rem_euclid(self.n_slow as i64) as usize;
        let j = (j - 1).rem_euclid(self.p_fast as i64) as usize;
        self.values[i * self.p_fast + j]
    }

    /// One row of the table: the fast-periodic slice at slow site `i`.
    pub fn row(&self, i: i64) -> Vec<S> {
        let i = (i - 1).rem_euclid(self.n_slow as i64) as usize;
        self.values[i * self.p_fast..(i + 1) * self.p_fast].to_vec()
    }

    /// Evaluate on the diagonal `(X_i, Y_i)`, producing a lattice function.
    /// Requires `p | n` so the trace is well defined and `n`-periodic.
    pub fn trace(&self, grid: PeriodicGrid1D<S>) -> Result<LatticeFn1D<S>> {
        if grid.n() != self.n_slow {
            return Err(HqcError::GridMismatch("trace grid period != slow period".into()));
        }
        if self.n_slow % self.p_fast != 0 {
            return Err(HqcError::InvalidArgument(
                "two-scale trace requires fast period to divide slow period".into(),
            ));
        }
        Ok(LatticeFn1D::from_fn(grid, |i| self.value(i as i64, i as i64)))
    }

    pub fn max_abs(&self) -> S {
        self.values.iter().fold(S::zero(), |a, &v| a.max(v.abs()))
    }
}
