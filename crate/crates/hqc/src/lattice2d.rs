//! Vector-valued lattice statics and HQC on 2D periodic lattices.
//!
//! Sites `(i_1, i_2)` live on an `(N_1, N_2)`-periodic square lattice with
//! spacing `eps`; displacements are 2-vectors. Bonds connect `i` to `i + r`
//! for offsets `r` in a reflection-reduced neighbour set, with scalar,
//! site-dependent coefficients `psi_r` acting isotropically on the
//! components:
//!
//! `sum_r <psi_r D_r u, D_r v>_X = <f, v>_X`, `D_r u_i = (u_{i+r} - u_i) / (eps |r|)`.
//!
//! Because the coefficients are scalar, every system decouples into two
//! identical scalar problems, which are solved matrix-free by projected
//! conjugate gradients. Cell problems on a `p_1 x p_2` fast cell produce
//! scalar correctors `zeta_alpha` with `chi_alpha = zeta_alpha I`, the
//! homogenized tensor, and the per-element effective coefficients of the 2D
//! HQC method on a uniform right-triangle macroscopic mesh.

use crate::error::{HqcError, Result};
use crate::scalar::Scalar;
use crate::solver::{self, LinearOperator};

/// Periodic 2D lattice: `n1 x n2` sites with spacing `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D<S> {
    n1: usize,
    n2: usize,
    delta: S,
}

impl<S: Scalar> Grid2D<S> {
    pub fn new(n1: usize, n2: usize, delta: S) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(HqcError::InvalidArgument("2D grid periods must be >= 1".into()));
        }
        if !(delta > S::zero()) {
            return Err(HqcError::InvalidArgument("2D grid spacing must be > 0".into()));
        }
        Ok(Self { n1, n2, delta })
    }

    /// Spacing `1 / n1`, so the first domain direction has unit length.
    pub fn unit_domain(n1: usize, n2: usize) -> Result<Self> {
        Self::new(n1, n2, S::of(1.0) / S::from_usize(n1).unwrap())
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn delta(&self) -> S {
        self.delta
    }

    pub fn size(&self) -> usize {
        self.n1 * self.n2
    }

    /// Storage index of the (1-based, periodic) site `(i1, i2)`.
    #[inline]
    pub fn idx(&self, i1: i64, i2: i64) -> usize {
        let a = (i1 - 1).rem_euclid(self.n1 as i64) as usize;
        let b = (i2 - 1).rem_euclid(self.n2 as i64) as usize;
        b * self.n1 + a
    }
}

/// The reflection-reduced neighbour set used throughout:
/// right, upper-right, up, upper-left.
pub fn standard_offsets() -> Vec<(i32, i32)> {
    vec![(1, 0), (1, 1), (0, 1), (-1, 1)]
}

/// Scalar bond coefficients `psi_r(i)`, periodic with a fast period
/// `(q1, q2)`, one table per offset.
#[derive(Debug, Clone)]
pub struct BondField2D<S> {
    q1: usize,
    q2: usize,
    offsets: Vec<(i32, i32)>,
    tables: Vec<Vec<S>>,
}

impl<S: Scalar> BondField2D<S> {
    pub fn from_fn(
        q1: usize,
        q2: usize,
        offsets: Vec<(i32, i32)>,
        psi: impl Fn(usize, usize, usize) -> S,
    ) -> Result<Self> {
        if q1 == 0 || q2 == 0 {
            return Err(HqcError::InvalidArgument("bond field periods must be >= 1".into()));
        }
        if offsets.iter().any(|&(a, b)| a == 0 && b == 0) {
            return Err(HqcError::InvalidArgument("bond offsets must be nonzero".into()));
        }
        let mut tables = Vec::with_capacity(offsets.len());
        for o in 0..offsets.len() {
            let mut t = Vec::with_capacity(q1 * q2);
            for j2 in 1..=q2 {
                for j1 in 1..=q1 {
                    t.push(psi(o, j1, j2));
                }
            }
            tables.push(t);
        }
        Ok(Self { q1, q2, offsets, tables })
    }

    pub fn offsets(&self) -> &[(i32, i32)] {
        &self.offsets
    }

    pub fn period(&self) -> (usize, usize) {
        (self.q1, self.q2)
    }

    /// Coefficient of the bond starting at site `(i1, i2)` with offset `o`.
    #[inline]
    pub fn value(&self, o: usize, i1: i64, i2: i64) -> S {
        let a = (i1 - 1).rem_euclid(self.q1 as i64) as usize;
        let b = (i2 - 1).rem_euclid(self.q2 as i64) as usize;
        self.tables[o][b * self.q1 + a]
    }

    /// Restriction to a `p1 x p2` rectangle with lower-left site
    /// `(start1, start2)`, reindexed so the local site `(1,1)` is the
    /// rectangle corner. Used for sampling windows and cell problems.
    pub fn window(&self, start1: i64, start2: i64, p1: usize, p2: usize) -> Self {
        let mut tables = Vec::with_capacity(self.offsets.len());
        for o in 0..self.offsets.len() {
            let mut t = Vec::with_capacity(p1 * p2);
            for j2 in 0..p2 as i64 {
                for j1 in 0..p1 as i64 {
                    t.push(self.value(o, start1 + j1, start2 + j2));
                }
            }
            tables.push(t);
        }
        Self { q1: p1, q2: p2, offsets: self.offsets.clone(), tables }
    }
}

/// A 2-vector field on a 2D lattice, stored as one plane per component.
#[derive(Debug, Clone)]
pub struct VectorFn2D<S> {
    grid: Grid2D<S>,
    comp: [Vec<S>; 2],
}

impl<S: Scalar> VectorFn2D<S> {
    pub fn zeros(grid: Grid2D<S>) -> Self {
        Self { grid, comp: [vec![S::zero(); grid.size()], vec![S::zero(); grid.size()]] }
    }

    pub fn from_fn(grid: Grid2D<S>, f: impl Fn(usize, usize) -> [S; 2]) -> Self {
        let mut c0 = Vec::with_capacity(grid.size());
        let mut c1 = Vec::with_capacity(grid.size());
        for i2 in 1..=grid.n2() {
            for i1 in 1..=grid.n1() {
                let v = f(i1, i2);
                c0.push(v[0]);
                c1.push(v[1]);
            }
        }
        Self { grid, comp: [c0, c1] }
    }

    pub fn from_planes(grid: Grid2D<S>, comp: [Vec<S>; 2]) -> Result<Self> {
        if comp[0].len() != grid.size() || comp[1].len() != grid.size() {
            return Err(HqcError::GridMismatch("vector field planes do not match grid".into()));
        }
        Ok(Self { grid, comp })
    }

    pub fn grid(&self) -> Grid2D<S> {
        self.grid
    }

    pub fn component(&self, c: usize) -> &[S] {
        &self.comp[c]
    }

    #[inline]
    pub fn value(&self, i1: i64, i2: i64) -> [S; 2] {
        let i = self.grid.idx(i1, i2);
        [self.comp[0][i], self.comp[1][i]]
    }

    /// Subtract the per-component mean.
    pub fn project_zero_mean(&self) -> Self {
        let n = S::from_usize(self.grid.size()).unwrap();
        let comp = [0, 1].map(|c| {
            let mean = self.comp[c].iter().fold(S::zero(), |a, &v| a + v) / n;
            self.comp[c].iter().map(|&v| v - mean).collect()
        });
        Self { grid: self.grid, comp }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(HqcError::GridMismatch("2D operands on different grids".into()));
        }
        let comp = [0, 1].map(|c| {
            self.comp[c].iter().zip(&other.comp[c]).map(|(&a, &b)| a - b).collect()
        });
        Ok(Self { grid: self.grid, comp })
    }

    /// `L^2` norm: `sqrt(<|v|^2>_X)`.
    pub fn norm_l2(&self) -> S {
        let n = S::from_usize(self.grid.size()).unwrap();
        let s = self.comp.iter().fold(S::zero(), |a, plane| {
            a + plane.iter().fold(S::zero(), |b, &v| b + v * v)
        });
        (s / n).sqrt()
    }

    pub fn norm_linf(&self) -> S {
        self.comp
            .iter()
            .fold(S::zero(), |a, plane| plane.iter().fold(a, |b, &v| b.max(v.abs())))
    }

    /// `H^1` seminorm: `L^2` norm of the forward differences in both axis
    /// directions, scaled by `1/eps`.
    pub fn norm_h1(&self) -> S {
        let n = S::from_usize(self.grid.size()).unwrap();
        let d = self.grid.delta();
        let mut s = S::zero();
        for i2 in 1..=self.grid.n2() as i64 {
            for i1 in 1..=self.grid.n1() as i64 {
                let u = self.value(i1, i2);
                let ux = self.value(i1 + 1, i2);
                let uy = self.value(i1, i2 + 1);
                for c in 0..2 {
                    let gx = (ux[c] - u[c]) / d;
                    let gy = (uy[c] - u[c]) / d;
                    s += gx * gx + gy * gy;
                }
            }
        }
        (s / n).sqrt()
    }
}

/// One scalar component of the lattice operator
/// `u -> sum_r psi_r (u_i - u_{i+r}) / (eps |r|)^2`, scaled by `N_1 N_2`
/// (i.e. the bilinear form uses plain sums).
struct ComponentOp<'a, S> {
    grid: Grid2D<S>,
    bonds: &'a BondField2D<S>,
}

impl<S: Scalar> ComponentOp<'_, S> {
    fn coeff(&self, o: usize, i1: i64, i2: i64) -> S {
        let (r1, r2) = self.bonds.offsets()[o];
        let rr = S::of((r1 * r1 + r2 * r2) as f64);
        let d = self.grid.delta();
        self.bonds.value(o, i1, i2) / (d * d * rr)
    }
}

impl<S: Scalar> LinearOperator<S> for ComponentOp<'_, S> {
    fn dim(&self) -> usize {
        self.grid.size()
    }

    fn apply(&self, x: &[S], y: &mut [S]) {
        for v in y.iter_mut() {
            *v = S::zero();
        }
        for o in 0..self.bonds.offsets().len() {
            let (r1, r2) = self.bonds.offsets()[o];
            for i2 in 1..=self.grid.n2() as i64 {
                for i1 in 1..=self.grid.n1() as i64 {
                    let c = self.coeff(o, i1, i2);
                    let i = self.grid.idx(i1, i2);
                    let j = self.grid.idx(i1 + r1 as i64, i2 + r2 as i64);
                    let d = c * (x[i] - x[j]);
                    y[i] += d;
                    y[j] -= d;
                }
            }
        }
    }

    fn diagonal(&self) -> Vec<S> {
        let mut diag = vec![S::zero(); self.grid.size()];
        for o in 0..self.bonds.offsets().len() {
            let (r1, r2) = self.bonds.offsets()[o];
            for i2 in 1..=self.grid.n2() as i64 {
                for i1 in 1..=self.grid.n1() as i64 {
                    let c = self.coeff(o, i1, i2);
                    diag[self.grid.idx(i1, i2)] += c;
                    diag[self.grid.idx(i1 + r1 as i64, i2 + r2 as i64)] += c;
                }
            }
        }
        diag
    }
}

/// Residual `A u - b` of the full 2D problem (plain-sum scaling), for
/// verification.
pub fn residual_2d<S: Scalar>(
    grid: Grid2D<S>,
    bonds: &BondField2D<S>,
    u: &VectorFn2D<S>,
    f: &VectorFn2D<S>,
) -> Result<VectorFn2D<S>> {
    let op = ComponentOp { grid, bonds };
    let f = f.project_zero_mean();
    let mut planes: [Vec<S>; 2] = [vec![S::zero(); grid.size()], vec![S::zero(); grid.size()]];
    for c in 0..2 {
        op.apply(u.component(c), &mut planes[c]);
        for (ri, &fi) in planes[c].iter_mut().zip(f.component(c)) {
            *ri -= fi;
        }
    }
    VectorFn2D::from_planes(grid, planes)
}

/// Solve the full lattice problem for the zero-mean displacement by
/// projected conjugate gradients (per component).
pub fn solve_full_2d<S: Scalar>(
    grid: Grid2D<S>,
    bonds: &BondField2D<S>,
    f: &VectorFn2D<S>,
    rel_tol: S,
) -> Result<(VectorFn2D<S>, usize)> {
    let op = ComponentOp { grid, bonds };
    let f = f.project_zero_mean();
    let max_iter = 100 * (grid.n1() + grid.n2()) + 1000;
    let (u0, r0) = solver::solve_constrained_cg(&op, f.component(0), rel_tol, max_iter)?;
    let (u1, r1) = solver::solve_constrained_cg(&op, f.component(1), rel_tol, max_iter)?;
    Ok((VectorFn2D::from_planes(grid, [u0, u1])?, r0.iterations.max(r1.iterations)))
}

#[inline]
fn cyc2_idx(p1: usize, p2: usize, j1: i64, j2: i64) -> usize {
    let a = j1.rem_euclid(p1 as i64) as usize;
    let b = j2.rem_euclid(p2 as i64) as usize;
    b * p1 + a
}

/// Solve the two scalar cell problems on the `p1 x p2` fast cell of `bonds`
/// (whose period is taken as the cell): for `alpha = 1, 2` find the
/// zero-mean `zeta_alpha` with
/// `sum_r <psi_r D_{Y,r} zeta_alpha, D_{Y,r} s>_Y = -sum_r <psi_r r_alpha / |r|, D_{Y,r} s>_Y`.
/// The matrix corrector is `chi_alpha = zeta_alpha I`.
pub fn solve_cell_2d<S: Scalar>(bonds: &BondField2D<S>) -> Result<[Vec<S>; 2]> {
    let (p1, p2) = bonds.period();
    let m = p1 * p2;
    if m == 1 {
        return Ok([vec![S::zero()], vec![S::zero()]]);
    }
    let mut a = vec![vec![S::zero(); m]; m];
    let mut b = [vec![S::zero(); m], vec![S::zero(); m]];
    for (o, &(r1, r2)) in bonds.offsets().iter().enumerate() {
        let rr = S::of((r1 * r1 + r2 * r2) as f64);
        for j2 in 0..p2 as i64 {
            for j1 in 0..p1 as i64 {
                let j = cyc2_idx(p1, p2, j1, j2);
                let jr = cyc2_idx(p1, p2, j1 + r1 as i64, j2 + r2 as i64);
                let psi_j = bonds.value(o, j1 + 1, j2 + 1);
                let psi_jr = bonds.value(o, j1 + 1 + r1 as i64, j2 + 1 + r2 as i64);
                let c = psi_j / rr;
                a[j][j] += c;
                a[jr][jr] += c;
                a[j][jr] -= c;
                a[jr][j] -= c;
                // RHS: (r_alpha / |r|^2) (psi_{r, j+r} - psi_{r, j}) at j+r.
                let d = (psi_jr - psi_j) / rr;
                b[0][jr] += S::of(r1 as f64) * d;
                b[1][jr] += S::of(r2 as f64) * d;
            }
        }
    }
    let z0 = solver::solve_constrained_dense(&a, &b[0])?;
    let z1 = solver::solve_constrained_dense(&a, &b[1])?;
    Ok([z0, z1])
}

/// Homogenized tensor: scalar entries `psi0[alpha][beta]`, each acting as a
/// multiple of the identity on the displacement components. Computed as the
/// plain cell sum
/// `sum_r sum_j psi_r (r_alpha + D_{Y,r} zeta_alpha) (r_beta + D_{Y,r} zeta_beta)`
/// with `D_{Y,r} zeta = (zeta_{j+r} - zeta_j) / |r|`.
#[derive(Debug, Clone, Copy)]
pub struct HomogenizedTensor2D<S> {
    pub psi0: [[S; 2]; 2],
}

pub fn homogenize_2d<S: Scalar>(
    bonds: &BondField2D<S>,
) -> Result<(HomogenizedTensor2D<S>, [Vec<S>; 2])> {
    let zeta = solve_cell_2d(bonds)?;
    let (p1, p2) = bonds.period();
    let mut psi0 = [[S::zero(); 2]; 2];
    for (o, &(r1, r2)) in bonds.offsets().iter().enumerate() {
        let rlen = S::of(((r1 * r1 + r2 * r2) as f64).sqrt());
        let rf = [S::of(r1 as f64), S::of(r2 as f64)];
        for j2 in 0..p2 as i64 {
            for j1 in 0..p1 as i64 {
                let j = cyc2_idx(p1, p2, j1, j2);
                let jr = cyc2_idx(p1, p2, j1 + r1 as i64, j2 + r2 as i64);
                let psi = bonds.value(o, j1 + 1, j2 + 1);
                let a: [S; 2] =
                    [0, 1].map(|al| rf[al] + (zeta[al][jr] - zeta[al][j]) / rlen);
                for al in 0..2 {
                    for be in 0..2 {
                        psi0[al][be] += psi * a[al] * a[be];
                    }
                }
            }
        }
    }
    Ok((HomogenizedTensor2D { psi0 }, zeta))
}

/// Energy-consistent effective 2x2 coefficient of a sampling window:
/// `M[alpha][beta] = sum_r <psi_r (r_alpha/|r| + D_{Y,r} zeta_alpha)
/// (r_beta/|r| + D_{Y,r} zeta_beta)>_Y`. This is the coefficient entering
/// the HQC element bilinear form.
fn effective_coeff<S: Scalar>(bonds: &BondField2D<S>, zeta: &[Vec<S>; 2]) -> [[S; 2]; 2] {
    let (p1, p2) = bonds.period();
    let m = S::from_usize(p1 * p2).unwrap();
    let mut coeff = [[S::zero(); 2]; 2];
    for (o, &(r1, r2)) in bonds.offsets().iter().enumerate() {
        let rlen = S::of(((r1 * r1 + r2 * r2) as f64).sqrt());
        let rf = [S::of(r1 as f64) / rlen, S::of(r2 as f64) / rlen];
        for j2 in 0..p2 as i64 {
            for j1 in 0..p1 as i64 {
                let j = cyc2_idx(p1, p2, j1, j2);
                let jr = cyc2_idx(p1, p2, j1 + r1 as i64, j2 + r2 as i64);
                let psi = bonds.value(o, j1 + 1, j2 + 1);
                let a: [S; 2] = [0, 1].map(|al| rf[al] + (zeta[al][jr] - zeta[al][j]) / rlen);
                for al in 0..2 {
                    for be in 0..2 {
                        coeff[al][be] += psi * a[al] * a[be] / m;
                    }
                }
            }
        }
    }
    coeff
}

/// Uniform right-triangle macroscopic mesh: `t1 x t2` nodes on the periodic
/// domain, each grid square split along its main diagonal into a lower and
/// an upper triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriMesh2D<S> {
    grid: Grid2D<S>,
    t1: usize,
    t2: usize,
}

impl<S: Scalar> TriMesh2D<S> {
    pub fn uniform(grid: Grid2D<S>, t1: usize, t2: usize) -> Result<Self> {
        if t1 < 2 || t2 < 2 || grid.n1() % t1 != 0 || grid.n2() % t2 != 0 {
            return Err(HqcError::InvalidArgument(format!(
                "macro mesh {t1} x {t2} must divide the {} x {} lattice (>= 2 per axis)",
                grid.n1(),
                grid.n2()
            )));
        }
        Ok(Self { grid, t1, t2 })
    }

    pub fn grid(&self) -> Grid2D<S> {
        self.grid
    }

    pub fn nodes(&self) -> (usize, usize) {
        (self.t1, self.t2)
    }

    pub fn num_nodes(&self) -> usize {
        self.t1 * self.t2
    }

    pub fn num_triangles(&self) -> usize {
        2 * self.t1 * self.t2
    }

    /// Fine sites per macro cell in each direction.
    pub fn stride(&self) -> (usize, usize) {
        (self.grid.n1() / self.t1, self.grid.n2() / self.t2)
    }

    /// Element legs in physical units.
    pub fn legs(&self) -> (S, S) {
        let (s1, s2) = self.stride();
        (
            S::from_usize(s1).unwrap() * self.grid.delta(),
            S::from_usize(s2).unwrap() * self.grid.delta(),
        )
    }

    #[inline]
    fn node_idx(&self, a: i64, b: i64) -> usize {
        let aa = a.rem_euclid(self.t1 as i64) as usize;
        let bb = b.rem_euclid(self.t2 as i64) as usize;
        bb * self.t1 + aa
    }

    /// Node indices of triangle `k` (lower: k even, upper: k odd in each
    /// macro cell), ordered as the barycentric weights of
    /// [`TriMesh2D::site_weights`].
    pub fn triangle_nodes(&self, k: usize) -> [usize; 3] {
        let cell = k / 2;
        let a = (cell % self.t1) as i64;
        let b = (cell / self.t1) as i64;
        if k % 2 == 0 {
            [self.node_idx(a, b), self.node_idx(a + 1, b), self.node_idx(a + 1, b + 1)]
        } else {
            [self.node_idx(a, b), self.node_idx(a + 1, b + 1), self.node_idx(a, b + 1)]
        }
    }

    /// Constant gradients of the three nodal basis functions on triangle `k`.
    pub fn triangle_gradients(&self, k: usize) -> [[S; 2]; 3] {
        let (hx, hy) = self.legs();
        let ix = S::one() / hx;
        let iy = S::one() / hy;
        if k % 2 == 0 {
            // lambda = (1 - xi, xi - eta, eta)
            [[-ix, S::zero()], [ix, -iy], [S::zero(), iy]]
        } else {
            // lambda = (1 - eta, xi, eta - xi)
            [[S::zero(), -iy], [ix, S::zero()], [-ix, iy]]
        }
    }

    /// Triangle containing the fine site and the barycentric weights of its
    /// three nodes: `(triangle, [w0, w1, w2])`.
    pub fn site_weights(&self, i1: usize, i2: usize) -> (usize, [S; 3]) {
        let (s1, s2) = self.stride();
        let a = (i1 - 1) / s1;
        let b = (i2 - 1) / s2;
        let xi = S::from_usize((i1 - 1) % s1).unwrap() / S::from_usize(s1).unwrap();
        let eta = S::from_usize((i2 - 1) % s2).unwrap() / S::from_usize(s2).unwrap();
        let cell = b * self.t1 + a;
        if xi >= eta {
            (2 * cell, [S::one() - xi, xi - eta, eta])
        } else {
            (2 * cell + 1, [S::one() - eta, xi, eta - xi])
        }
    }

    /// Relative area of each triangle (the domain has measure
    /// `(n1 eps)(n2 eps)`).
    pub fn triangle_area(&self) -> S {
        let (hx, hy) = self.legs();
        S::of(0.5) * hx * hy
    }

    /// Lower-left site of the `p1 x p2` sampling rectangle nearest the
    /// centroid of triangle `k`.
    pub fn sampling_start(&self, k: usize, p1: usize, p2: usize) -> (i64, i64) {
        let (s1, s2) = self.stride();
        let cell = k / 2;
        let a = cell % self.t1;
        let b = cell / self.t1;
        // Centroid in fine-site coordinates (sites of the cell span
        // offsets 0..s along each axis from the cell's corner node).
        let (cx, cy) = if k % 2 == 0 {
            (2.0 * s1 as f64 / 3.0, s2 as f64 / 3.0)
        } else {
            (s1 as f64 / 3.0, 2.0 * s2 as f64 / 3.0)
        };
        let base1 = 1 + (a * s1) as i64;
        let base2 = 1 + (b * s2) as i64;
        let st1 = base1 + (cx - p1 as f64 / 2.0).round() as i64;
        let st2 = base2 + (cy - p2 as f64 / 2.0).round() as i64;
        (st1, st2)
    }
}

/// Solution of a 2D HQC solve.
pub struct Hqc2DSolution<S> {
    pub mesh: TriMesh2D<S>,
    /// Nodal values per component.
    pub nodal: [Vec<S>; 2],
    /// Per-triangle sampling rectangle origin.
    pub windows: Vec<(i64, i64)>,
    /// Per-triangle cell correctors `zeta_alpha` on the rectangle.
    pub zeta: Vec<[Vec<S>; 2]>,
    /// Window size.
    pub p: (usize, usize),
    pub cg_iterations: usize,
}

impl<S: Scalar> Hqc2DSolution<S> {
    /// Displacement gradient `G[c][alpha] = D_alpha u_c` on triangle `k`.
    pub fn gradient(&self, k: usize) -> [[S; 2]; 2] {
        let nodes = self.mesh.triangle_nodes(k);
        let grads = self.mesh.triangle_gradients(k);
        let mut g = [[S::zero(); 2]; 2];
        for c in 0..2 {
            for (v, gr) in nodes.iter().zip(&grads) {
                for al in 0..2 {
                    g[c][al] += self.nodal[c][*v] * gr[al];
                }
            }
        }
        g
    }

    /// The piecewise affine macroscopic displacement on the fine lattice.
    pub fn to_lattice(&self) -> VectorFn2D<S> {
        let grid = self.mesh.grid();
        VectorFn2D::from_fn(grid, |i1, i2| {
            let (k, w) = self.mesh.site_weights(i1, i2);
            let nodes = self.mesh.triangle_nodes(k);
            [0, 1].map(|c| {
                nodes.iter().zip(&w).fold(S::zero(), |acc, (&v, &wv)| acc + wv * self.nodal[c][v])
            })
        })
        .project_zero_mean()
    }

    /// Reconstruction: add the periodically extended micro corrector,
    /// `u^{H,c}_c(i) = u^H_c(i) + eps sum_alpha G[c][alpha] zeta_alpha(Y_i)`.
    pub fn reconstruct(&self) -> VectorFn2D<S> {
        let grid = self.mesh.grid();
        let eps = grid.delta();
        let (p1, p2) = self.p;
        let base = self.to_lattice();
        VectorFn2D::from_fn(grid, |i1, i2| {
            let (k, _) = self.mesh.site_weights(i1, i2);
            let g = self.gradient(k);
            let (st1, st2) = self.windows[k];
            let j = cyc2_idx(p1, p2, i1 as i64 - st1, i2 as i64 - st2);
            let mut v = base.value(i1 as i64, i2 as i64);
            for c in 0..2 {
                for al in 0..2 {
                    v[c] += eps * g[c][al] * self.zeta[k][al][j];
                }
            }
            v
        })
    }
}

/// Assemble per-triangle element matrices
/// `E_lm = area * grad(phi_l)^T M_k grad(phi_m)`.
fn macro_operator<S: Scalar>(
    mesh: &TriMesh2D<S>,
    coeff: &[[[S; 2]; 2]],
) -> (Vec<[usize; 3]>, Vec<[[S; 3]; 3]>) {
    let area = mesh.triangle_area();
    let mut tri_nodes = Vec::with_capacity(mesh.num_triangles());
    let mut elem = Vec::with_capacity(mesh.num_triangles());
    for k in 0..mesh.num_triangles() {
        let nodes = mesh.triangle_nodes(k);
        let grads = mesh.triangle_gradients(k);
        let m = &coeff[k];
        let mut e = [[S::zero(); 3]; 3];
        for l in 0..3 {
            for j in 0..3 {
                let mut acc = S::zero();
                for al in 0..2 {
                    for be in 0..2 {
                        acc += grads[l][al] * m[al][be] * grads[j][be];
                    }
                }
                e[l][j] = area * acc;
            }
        }
        tri_nodes.push(nodes);
        elem.push(e);
    }
    (tri_nodes, elem)
}

struct NodalOp<'a, S> {
    num_nodes: usize,
    tri_nodes: &'a [[usize; 3]],
    elem: &'a [[[S; 3]; 3]],
}

impl<S: Scalar> LinearOperator<S> for NodalOp<'_, S> {
    fn dim(&self) -> usize {
        self.num_nodes
    }

    fn apply(&self, x: &[S], y: &mut [S]) {
        for v in y.iter_mut() {
            *v = S::zero();
        }
        for (nodes, e) in self.tri_nodes.iter().zip(self.elem) {
            for l in 0..3 {
                let mut acc = S::zero();
                for j in 0..3 {
                    acc += e[l][j] * x[nodes[j]];
                }
                y[nodes[l]] += acc;
            }
        }
    }

    fn diagonal(&self) -> Vec<S> {
        let mut d = vec![S::zero(); self.num_nodes];
        for (nodes, e) in self.tri_nodes.iter().zip(self.elem) {
            for l in 0..3 {
                d[nodes[l]] += e[l][l];
            }
        }
        d
    }
}

/// Load assembly mode, mirroring the 1D [`crate::hqc::LoadMode`].
pub use crate::hqc::LoadMode;

/// Solve the 2D HQC problem on a uniform right-triangle mesh with `p1 x p2`
/// sampling rectangles.
pub fn solve_hqc_2d<S: Scalar>(
    bonds: &BondField2D<S>,
    mesh: &TriMesh2D<S>,
    f: &VectorFn2D<S>,
    p: (usize, usize),
    mode: LoadMode,
    rel_tol: S,
) -> Result<Hqc2DSolution<S>> {
    let grid = mesh.grid();
    if f.grid() != grid {
        return Err(HqcError::GridMismatch("load not on the mesh grid".into()));
    }
    let (p1, p2) = p;
    let (s1, s2) = mesh.stride();
    if p1 == 0 || p2 == 0 || p1 > s1 || p2 > s2 {
        return Err(HqcError::InvalidArgument(format!(
            "sampling rectangle {p1} x {p2} does not fit in a {s1} x {s2} macro cell"
        )));
    }
    let f = f.project_zero_mean();

    // Per-triangle microproblems; identical windows (modulo the fast period)
    // share one cell solve.
    let (q1, q2) = bonds.period();
    let mut cache: std::collections::HashMap<(i64, i64), ([Vec<S>; 2], [[S; 2]; 2])> =
        std::collections::HashMap::new();
    let mut windows = Vec::with_capacity(mesh.num_triangles());
    let mut zeta = Vec::with_capacity(mesh.num_triangles());
    let mut coeff = Vec::with_capacity(mesh.num_triangles());
    for k in 0..mesh.num_triangles() {
        let (st1, st2) = mesh.sampling_start(k, p1, p2);
        let key = ((st1 - 1).rem_euclid(q1 as i64), (st2 - 1).rem_euclid(q2 as i64));
        let entry = match cache.get(&key) {
            Some(hit) => hit.clone(),
            None => {
                let win = bonds.window(st1, st2, p1, p2);
                let z = solve_cell_2d(&win)?;
                let m = effective_coeff(&win, &z);
                cache.insert(key, (z.clone(), m));
                (z, m)
            }
        };
        windows.push((st1, st2));
        zeta.push(entry.0);
        coeff.push(entry.1);
    }

    let (tri_nodes, elem) = macro_operator(mesh, &coeff);
    let op = NodalOp { num_nodes: mesh.num_nodes(), tri_nodes: &tri_nodes, elem: &elem };

    // Nodal load per component.
    let nn = S::from_usize(grid.size()).unwrap();
    let mut b = [vec![S::zero(); mesh.num_nodes()], vec![S::zero(); mesh.num_nodes()]];
    match mode {
        LoadMode::Exact => {
            for i2 in 1..=grid.n2() {
                for i1 in 1..=grid.n1() {
                    let (k, w) = mesh.site_weights(i1, i2);
                    let nodes = mesh.triangle_nodes(k);
                    let fv = f.value(i1 as i64, i2 as i64);
                    for c in 0..2 {
                        for (v, wv) in nodes.iter().zip(&w) {
                            b[c][*v] += *wv * fv[c] / nn;
                        }
                    }
                }
            }
        }
        LoadMode::Sampled => {
            let area = mesh.triangle_area();
            let wsize = S::from_usize(p1 * p2).unwrap();
            for k in 0..mesh.num_triangles() {
                let (st1, st2) = windows[k];
                for j2 in 0..p2 as i64 {
                    for j1 in 0..p1 as i64 {
                        let i1 = (st1 + j1 - 1).rem_euclid(grid.n1() as i64) as usize + 1;
                        let i2 = (st2 + j2 - 1).rem_euclid(grid.n2() as i64) as usize + 1;
                        let (kt, w) = mesh.site_weights(i1, i2);
                        let nodes = mesh.triangle_nodes(kt);
                        let fv = f.value(i1 as i64, i2 as i64);
                        for c in 0..2 {
                            for (v, wv) in nodes.iter().zip(&w) {
                                b[c][*v] += area / wsize * *wv * fv[c];
                            }
                        }
                    }
                }
            }
        }
    }
    // Project each component load consistently with the singular operator
    // (only needed for sampled loads, whose nodal sums need not vanish).
    for plane in b.iter_mut() {
        let mean =
            plane.iter().fold(S::zero(), |a, &v| a + v) / S::from_usize(plane.len()).unwrap();
        for v in plane.iter_mut() {
            *v -= mean;
        }
    }

    let max_iter = 200 * (mesh.nodes().0 + mesh.nodes().1) + 1000;
    let (x0, r0) = solver::solve_constrained_cg(&op, &b[0], rel_tol, max_iter)?;
    let (x1, r1) = solver::solve_constrained_cg(&op, &b[1], rel_tol, max_iter)?;

    let mut sol = Hqc2DSolution {
        mesh: *mesh,
        nodal: [x0, x1],
        windows,
        zeta,
        p,
        cg_iterations: r0.iterations.max(r1.iterations),
    };
    // Recenter so the induced lattice field has zero mean per component.
    let lattice = sol.to_lattice();
    for c in 0..2 {
        let mean = lattice.component(c).iter().fold(S::zero(), |a, &v| a + v)
            / S::from_usize(grid.size()).unwrap();
        for v in sol.nodal[c].iter_mut() {
            *v -= mean;
        }
    }
    Ok(sol)
}
