//! Unit-cell (corrector) problems and homogenized coefficients.
//!
//! The fast variable lives on a `p`-periodic lattice with unit spacing; cell
//! functions are zero-mean `p`-periodic vectors. The linear nearest-neighbour
//! cell problem reads
//!
//! `<psi D_Y chi, D_Y s>_Y = -<psi, D_Y s>_Y` for all zero-mean `s`,
//!
//! whose first integral is `psi (1 + D_Y chi) = psi^0` with `psi^0` the
//! harmonic mean of `psi`. Finite-range and nonlinear variants replace
//! `psi D_Y chi` by `sum_r psi_r D_{Y,r} chi` and `Phi_r'(z + D_{Y,r} chi)`.
//!
//! All cell systems are small (a handful of atoms), so they are assembled
//! densely and solved by the dense zero-mean direct solver.

use std::cell::RefCell;
use std::collections::HashMap;

use crate::error::{HqcError, Result};
use crate::grid::{LatticeFn1D, TwoScaleFn};
use crate::model::BondTable;
use crate::scalar::Scalar;
use crate::solver;

/// Cyclic difference `v_{j+r} - v_j` on 0-based storage of period `p`.
#[inline]
fn cyc_diff<S: Scalar>(v: &[S], j: usize, r: usize) -> S {
    let p = v.len();
    v[(j + r) % p] - v[j]
}

/// Assemble and solve the linear finite-range cell problem
/// `sum_r <psi_r D_{Y,r} chi, D_{Y,r} s>_Y = -sum_r <psi_r, D_{Y,r} s>_Y`.
/// `psi[r-1][j-1]` is the coefficient of the bond `(j, j+r)`; the returned
/// corrector has zero mean.
pub fn solve_cell_finite_range<S: Scalar>(psi: &[Vec<S>]) -> Result<Vec<S>> {
    if psi.is_empty() {
        return Err(HqcError::InvalidArgument("cell problem needs at least one range".into()));
    }
    let p = psi[0].len();
    if p == 0 || psi.iter().any(|row| row.len() != p) {
        return Err(HqcError::InvalidArgument("cell coefficient rows must share a period".into()));
    }
    if p == 1 {
        return Ok(vec![S::zero()]);
    }
    let mut a = vec![vec![S::zero(); p]; p];
    let mut b = vec![S::zero(); p];
    for (ri, row) in psi.iter().enumerate() {
        let r = ri + 1;
        let rs = S::from_usize(r).unwrap();
        for j in 0..p {
            let jr = (j + r) % p;
            let c = row[j] / (rs * rs);
            a[j][j] += c;
            a[jr][jr] += c;
            a[j][jr] -= c;
            a[jr][j] -= c;
            // RHS of -<psi_r, D_{Y,r} s>: (psi_{r,j} - psi_{r,j-r}) / r.
            b[jr] += (row[jr] - row[j]) / rs;
        }
    }
    solver::solve_constrained_dense(&a, &b)
}

/// Nearest-neighbour cell problem for a single coefficient row.
pub fn solve_cell_nn<S: Scalar>(psi: &[S]) -> Result<Vec<S>> {
    solve_cell_finite_range(&[psi.to_vec()])
}

/// Harmonic mean `<1/psi>_Y^{-1}`, the closed-form homogenized coefficient of
/// the nearest-neighbour cell problem.
pub fn harmonic_mean<S: Scalar>(psi: &[S]) -> Result<S> {
    if psi.is_empty() {
        return Err(HqcError::InvalidArgument("harmonic mean of empty slice".into()));
    }
    let mut acc = S::zero();
    for &v in psi {
        if !(v > S::zero()) {
            return Err(HqcError::NonCoercive { smallest_pivot: v.to_f64().unwrap() });
        }
        acc += S::one() / v;
    }
    Ok(S::from_usize(psi.len()).unwrap() / acc)
}

/// Closed-form nearest-neighbour corrector
/// `chi(Y_j) = psi^0 <g(Y_j - .) / psi(.)>_Y` with the zero-mean sawtooth
/// `g(Y_j) = (p+1)/2 - j` on `1 <= j <= p` extended periodically.
pub fn chi_closed_form<S: Scalar>(psi: &[S]) -> Result<Vec<S>> {
    let p = psi.len() as i64;
    let psi0 = harmonic_mean(psi)?;
    let g = |j: i64| -> S {
        let jj = (j - 1).rem_euclid(p) + 1;
        S::of((p as f64 + 1.0) / 2.0) - S::from_i64(jj).unwrap()
    };
    let mut chi = Vec::with_capacity(psi.len());
    for j in 1..=p {
        let mut acc = S::zero();
        for beta in 1..=p {
            acc += g(j - beta) / psi[(beta - 1) as usize];
        }
        chi.push(psi0 * acc / S::from_i64(p).unwrap());
    }
    Ok(chi)
}

/// Homogenized coefficient from the corrector flux:
/// `psi^0 = sum_r <psi_r (1 + D_{Y,r} chi)>_Y`.
pub fn homogenize_finite_range<S: Scalar>(psi: &[Vec<S>], chi: &[S]) -> S {
    let p = chi.len();
    let ps = S::from_usize(p).unwrap();
    let mut acc = S::zero();
    for (ri, row) in psi.iter().enumerate() {
        let r = ri + 1;
        let rs = S::from_usize(r).unwrap();
        for j in 0..p {
            acc += row[j] * (S::one() + cyc_diff(chi, j, r) / rs);
        }
    }
    acc / ps
}

/// Nearest-neighbour homogenized coefficient via the corrector flux. Agrees
/// with [`harmonic_mean`] by the first integral of the cell problem.
pub fn homogenize_nn<S: Scalar>(psi: &[S]) -> Result<S> {
    let chi = solve_cell_nn(psi)?;
    Ok(homogenize_finite_range(&[psi.to_vec()], &chi))
}

/// Deformed bond length (in lattice units) seen by the cell problem:
/// `r (1 + z) + (chi_{j+r} - chi_j)` for the bond starting at cell site `j`.
#[inline]
fn cell_bond_length<S: Scalar>(z: S, chi: &[S], j: usize, r: usize) -> S {
    S::from_usize(r).unwrap() * (S::one() + z) + cyc_diff(chi, j, r)
}

fn cell_domain_check<S: Scalar>(bonds: &BondTable<S>, j: usize, r: usize, arg: S) -> Result<()> {
    if !bonds.at(j as i64 + 1, r).valid(arg) {
        return Err(HqcError::DomainViolation {
            site: j + 1,
            offset: r as i64,
            z: arg.to_f64().unwrap(),
        });
    }
    Ok(())
}

/// Cell energy per unit cell (unnormalized), used for the Newton line search.
fn cell_energy<S: Scalar>(bonds: &BondTable<S>, z: S, chi: &[S]) -> Result<S> {
    let p = bonds.period();
    let mut acc = S::zero();
    for j in 0..p {
        for r in 1..=bonds.range() {
            let arg = cell_bond_length(z, chi, j, r);
            cell_domain_check(bonds, j, r, arg)?;
            acc += bonds.at(j as i64 + 1, r).eval(arg);
        }
    }
    Ok(acc)
}

/// Cell energy density `sum_r <Phi_r(z + D_{Y,r} chi)>_Y` (the unit-cell
/// average of the bond energies of the corrected state).
pub fn cell_energy_per_cell<S: Scalar>(bonds: &BondTable<S>, z: S, chi: &[S]) -> Result<S> {
    Ok(cell_energy(bonds, z, chi)? / S::from_usize(bonds.period()).unwrap())
}

/// Gradient of the cell energy with respect to the corrector values.
fn cell_residual<S: Scalar>(bonds: &BondTable<S>, z: S, chi: &[S]) -> Result<Vec<S>> {
    let p = bonds.period();
    let mut g = vec![S::zero(); p];
    for j in 0..p {
        for r in 1..=bonds.range() {
            let arg = cell_bond_length(z, chi, j, r);
            cell_domain_check(bonds, j, r, arg)?;
            let d = bonds.at(j as i64 + 1, r).deriv(arg);
            g[j] -= d;
            g[(j + r) % p] += d;
        }
    }
    Ok(g)
}

/// Bond curvatures `psi_r(z)` at the current corrector:
/// `psi_{r,j} = r^2 phi_{j,j+r}''(r (1 + z) + (chi_{j+r} - chi_j))`.
fn cell_curvatures<S: Scalar>(bonds: &BondTable<S>, z: S, chi: &[S]) -> Result<Vec<Vec<S>>> {
    let p = bonds.period();
    let mut psi = vec![vec![S::zero(); p]; bonds.range()];
    for j in 0..p {
        for r in 1..=bonds.range() {
            let arg = cell_bond_length(z, chi, j, r);
            cell_domain_check(bonds, j, r, arg)?;
            let rs = S::from_usize(r).unwrap();
            psi[r - 1][j] = rs * rs * bonds.at(j as i64 + 1, r).deriv2(arg);
        }
    }
    Ok(psi)
}

fn dense_cell_matrix<S: Scalar>(psi: &[Vec<S>]) -> Vec<Vec<S>> {
    let p = psi[0].len();
    let mut a = vec![vec![S::zero(); p]; p];
    for (ri, row) in psi.iter().enumerate() {
        let r = ri + 1;
        let rs = S::from_usize(r).unwrap();
        for j in 0..p {
            let jr = (j + r) % p;
            let c = row[j] / (rs * rs);
            a[j][j] += c;
            a[jr][jr] += c;
            a[j][jr] -= c;
            a[jr][j] -= c;
        }
    }
    a
}

/// Solve the nonlinear cell problem at macroscopic strain `z`:
/// find the zero-mean `p`-periodic `chi` with
/// `sum_r <Phi_r'(z + D_{Y,r} chi), D_{Y,r} s>_Y = 0` for all zero-mean `s`.
/// `init` warm-starts the Newton iteration.
pub fn solve_cell_nonlinear<S: Scalar>(
    bonds: &BondTable<S>,
    z: S,
    init: Option<&[S]>,
    tol: S,
    max_iter: usize,
) -> Result<Vec<S>> {
    let p = bonds.period();
    let mut chi = match init {
        Some(v) if v.len() == p => {
            let mean = v.iter().fold(S::zero(), |a, &x| a + x) / S::from_usize(p).unwrap();
            v.iter().map(|&x| x - mean).collect()
        }
        _ => vec![S::zero(); p],
    };
    if p == 1 {
        return Ok(chi);
    }
    for it in 0..max_iter {
        let g = cell_residual(bonds, z, &chi)?;
        let gnorm = g.iter().fold(S::zero(), |a, &v| a.max(v.abs()));
        if gnorm <= tol {
            return Ok(chi);
        }
        let psi = cell_curvatures(bonds, z, &chi)?;
        let a = dense_cell_matrix(&psi);
        let rhs: Vec<S> = g.iter().map(|&v| -v).collect();
        let delta = solver::solve_constrained_dense(&a, &rhs)?;
        let slope = g.iter().zip(&delta).fold(S::zero(), |a, (&gi, &di)| a + gi * di);
        let e0 = cell_energy(bonds, z, &chi)?;
        // Rounding slack: near the minimum the predicted decrease drops
        // below the accuracy of the energy itself (which sums terms with
        // cancellation, so its noise is well above one ulp).
        let slack = S::of(f64::EPSILON.powf(2.0 / 3.0)) * (S::one() + e0.abs());
        let mut t = S::one();
        let mut accepted = false;
        for _ in 0..=30 {
            let trial: Vec<S> = chi.iter().zip(&delta).map(|(&c, &d)| c + t * d).collect();
            match cell_energy(bonds, z, &trial) {
                Ok(e) if e <= e0 + S::of(1e-4) * t * slope + slack => {
                    chi = trial;
                    accepted = true;
                    break;
                }
                _ => t *= S::of(0.5),
            }
        }
        if !accepted {
            return Err(HqcError::NoConvergence {
                iterations: it,
                residual: gnorm.to_f64().unwrap(),
            });
        }
    }
    let g = cell_residual(bonds, z, &chi)?;
    Err(HqcError::NoConvergence {
        iterations: max_iter,
        residual: g.iter().fold(S::zero(), |a, &v| a.max(v.abs())).to_f64().unwrap(),
    })
}

/// Homogenized flux at strain `z` with corrector `chi`:
/// `(Phi^0)'(z) = sum_r <Phi_r'(z + D_{Y,r} chi)>_Y`.
pub fn cell_flux<S: Scalar>(bonds: &BondTable<S>, z: S, chi: &[S]) -> Result<S> {
    let p = bonds.period();
    let mut acc = S::zero();
    for j in 0..p {
        for r in 1..=bonds.range() {
            let arg = cell_bond_length(z, chi, j, r);
            cell_domain_check(bonds, j, r, arg)?;
            acc += S::from_usize(r).unwrap() * bonds.at(j as i64 + 1, r).deriv(arg);
        }
    }
    Ok(acc / S::from_usize(p).unwrap())
}

/// Homogenized tangent modulus at strain `z`: solves the linearized cell
/// problem for the corrector sensitivity `chi' = d chi / d z` and returns
/// `(Phi^0)''(z) = sum_r <Phi_r''(z + D_{Y,r} chi) (1 + D_{Y,r} chi')>_Y`
/// together with `chi'`.
pub fn cell_tangent<S: Scalar>(bonds: &BondTable<S>, z: S, chi: &[S]) -> Result<(S, Vec<S>)> {
    let psi = cell_curvatures(bonds, z, chi)?;
    let chi_prime = solve_cell_finite_range(&psi)?;
    Ok((homogenize_finite_range(&psi, &chi_prime), chi_prime))
}

/// Memoizing evaluator of the homogenized flux `(Phi^0)'` and modulus
/// `(Phi^0)''` of a bond table. Strains are quantized at `1e-14` for the
/// cache key; cell solves warm-start from the nearest previous corrector.
pub struct HomogenizedFlux<S> {
    bonds: BondTable<S>,
    tol: S,
    cache: RefCell<HashMap<i64, (S, S, Vec<S>)>>,
    last: RefCell<Option<Vec<S>>>,
}

impl<S: Scalar> HomogenizedFlux<S> {
    pub fn new(bonds: BondTable<S>, tol: S) -> Self {
        Self { bonds, tol, cache: RefCell::new(HashMap::new()), last: RefCell::new(None) }
    }

    fn key(z: S) -> i64 {
        (z.to_f64().unwrap() / 1e-14).round() as i64
    }

    fn entry(&self, z: S) -> Result<(S, S, Vec<S>)> {
        let key = Self::key(z);
        if let Some(hit) = self.cache.borrow().get(&key) {
            return Ok(hit.clone());
        }
        let warm = self.last.borrow().clone();
        let chi = solve_cell_nonlinear(&self.bonds, z, warm.as_deref(), self.tol, 100)?;
        let flux = cell_flux(&self.bonds, z, &chi)?;
        let (modulus, _) = cell_tangent(&self.bonds, z, &chi)?;
        *self.last.borrow_mut() = Some(chi.clone());
        let entry = (flux, modulus, chi);
        self.cache.borrow_mut().insert(key, entry.clone());
        Ok(entry)
    }

    /// `(Phi^0)'(z)`.
    pub fn flux(&self, z: S) -> Result<S> {
        Ok(self.entry(z)?.0)
    }

    /// `(Phi^0)''(z)`.
    pub fn modulus(&self, z: S) -> Result<S> {
        Ok(self.entry(z)?.1)
    }

    /// Corrector `chi(z)`.
    pub fn corrector(&self, z: S) -> Result<Vec<S>> {
        Ok(self.entry(z)?.2)
    }
}

/// Per-row nearest-neighbour correctors of a two-scale coefficient
/// `psi(X_i, Y_j)`: row `i` of the result is the cell solution for
/// `psi(X_i, .)`.
pub fn chi_table<S: Scalar>(psi: &TwoScaleFn<S>) -> Result<TwoScaleFn<S>> {
    let n = psi.n_slow();
    let p = psi.p_fast();
    let mut values = Vec::with_capacity(n * p);
    for i in 1..=n as i64 {
        values.extend(solve_cell_nn(&psi.row(i))?);
    }
    TwoScaleFn::from_values(n, p, values)
}

/// Pointwise homogenized coefficient `psi^0(X_i)`: the harmonic mean in `Y`
/// of each slow row.
pub fn psi0_field<S: Scalar>(
    psi: &TwoScaleFn<S>,
    grid: crate::grid::PeriodicGrid1D<S>,
) -> Result<LatticeFn1D<S>> {
    if grid.n() != psi.n_slow() {
        return Err(HqcError::GridMismatch("psi0 field grid != slow period".into()));
    }
    let mut vals = Vec::with_capacity(psi.n_slow());
    for i in 1..=psi.n_slow() as i64 {
        vals.push(harmonic_mean(&psi.row(i))?);
    }
    LatticeFn1D::from_values(grid, vals)
}

/// Two-scale corrector applied to a macroscopic solution:
/// `u^c(X_i) = u^0(X_i) + eps chi(X_i, X_i/eps) D_X u^0(X_i)`.
pub fn corrector<S: Scalar>(u0: &LatticeFn1D<S>, chi: &TwoScaleFn<S>) -> Result<LatticeFn1D<S>> {
    let grid = u0.grid();
    if chi.n_slow() != grid.n() {
        return Err(HqcError::GridMismatch("corrector table slow period != grid".into()));
    }
    let du = u0.diff(1)?;
    let eps = grid.delta();
    let vals = (1..=grid.n() as i64)
        .map(|i| u0.value(i) + eps * chi.value(i, i) * du.value(i))
        .collect();
    LatticeFn1D::from_values(grid, vals)
}

/// The two sides of each a-priori bound on the nearest-neighbour cell
/// solution: `value <= bound` must hold.
#[derive(Debug, Clone, Copy)]
pub struct BoundCheck<S> {
    pub value: S,
    pub bound: S,
}

/// A-priori bounds on the corrector of a two-scale coefficient:
/// `||chi||_inf <= (p/2) C_psi / c_psi`,
/// `|psi^0|_{W1,inf} <= (C_psi / c_psi) C'_psi` and
/// `||D_X chi||_inf <= p C'_psi / c_psi`,
/// where `c_psi <= psi <= C_psi` and `C'_psi` bounds the slow increments
/// `|psi(X_{i+1}, Y) - psi(X_i, Y)| / eps`.
#[derive(Debug, Clone, Copy)]
pub struct ModelBounds<S> {
    pub c_psi: S,
    pub big_c_psi: S,
    pub lipschitz: S,
    pub chi_sup: BoundCheck<S>,
    pub psi0_slope: BoundCheck<S>,
    pub dx_chi_sup: BoundCheck<S>,
}

pub fn model_bounds<S: Scalar>(psi: &TwoScaleFn<S>, eps: S) -> Result<ModelBounds<S>> {
    let n = psi.n_slow();
    let p = psi.p_fast();
    let ps = S::from_usize(p).unwrap();
    let mut c_psi = S::infinity();
    let mut big_c = S::zero();
    let mut lip = S::zero();
    for i in 1..=n as i64 {
        for j in 1..=p as i64 {
            let v = psi.value(i, j);
            c_psi = c_psi.min(v);
            big_c = big_c.max(v);
            lip = lip.max((psi.value(i + 1, j) - v).abs() / eps);
        }
    }
    if !(c_psi > S::zero()) {
        return Err(HqcError::NonCoercive { smallest_pivot: c_psi.to_f64().unwrap() });
    }
    let chi = chi_table(psi)?;
    let mut chi_sup = S::zero();
    let mut dx_chi = S::zero();
    let mut psi0_slope = S::zero();
    let mut prev_psi0 = harmonic_mean(&psi.row(1))?;
    for i in 1..=n as i64 {
        for j in 1..=p as i64 {
            chi_sup = chi_sup.max(chi.value(i, j).abs());
            dx_chi = dx_chi.max((chi.value(i + 1, j) - chi.value(i, j)).abs() / eps);
        }
        let next = harmonic_mean(&psi.row(i + 1))?;
        psi0_slope = psi0_slope.max((next - prev_psi0).abs() / eps);
        prev_psi0 = next;
    }
    let half_p = S::of(0.5) * ps;
    Ok(ModelBounds {
        c_psi,
        big_c_psi: big_c,
        lipschitz: lip,
        chi_sup: BoundCheck { value: chi_sup, bound: half_p * big_c / c_psi },
        psi0_slope: BoundCheck { value: psi0_slope, bound: big_c / c_psi * lip },
        dx_chi_sup: BoundCheck { value: dx_chi, bound: ps * lip / c_psi },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PeriodicGrid1D;

    #[test]
    fn two_phase_cell_closed_form() {
        // psi = [1, 2]: chi = [-1/6, 1/6], psi^0 = 4/3 by hand.
        let psi = [1.0_f64, 2.0];
        let chi = solve_cell_nn(&psi).unwrap();
        assert!((chi[0] + 1.0 / 6.0).abs() < 1e-14);
        assert!((chi[1] - 1.0 / 6.0).abs() < 1e-14);
        let closed = chi_closed_form(&psi).unwrap();
        for (a, b) in chi.iter().zip(&closed) {
            assert!((a - b).abs() < 1e-14);
        }
        let hm = harmonic_mean(&psi).unwrap();
        assert!((hm - 4.0 / 3.0).abs() < 1e-14);
        let flux = homogenize_nn(&psi).unwrap();
        assert!((flux - hm).abs() < 1e-14);
    }

    #[test]
    fn first_integral_on_random_cell() {
        // psi (1 + D_Y chi) is constant in Y and equals the harmonic mean.
        let psi = [0.7_f64, 2.3, 1.1, 3.0, 0.9];
        let chi = solve_cell_nn(&psi).unwrap();
        let hm = harmonic_mean(&psi).unwrap();
        for j in 0..psi.len() {
            let flux = psi[j] * (1.0 + cyc_diff(&chi, j, 1));
            assert!((flux - hm).abs() < 1e-12, "site {j}: {flux} vs {hm}");
        }
        let closed = chi_closed_form(&psi).unwrap();
        for (a, b) in chi.iter().zip(&closed) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_coefficients_have_trivial_cell() {
        let psi = vec![vec![2.0_f64; 4], vec![0.5; 4], vec![0.125; 4]];
        let chi = solve_cell_finite_range(&psi).unwrap();
        for &c in &chi {
            assert!(c.abs() < 1e-14);
        }
        // psi^0 = sum_r k_r for constant coefficients.
        assert!((homogenize_finite_range(&psi, &chi) - 2.625).abs() < 1e-14);
    }

    #[test]
    fn finite_range_reduces_to_nn() {
        let psi = vec![vec![1.0_f64, 2.0, 0.5]];
        let chi = solve_cell_finite_range(&psi).unwrap();
        let nn = solve_cell_nn(&[1.0_f64, 2.0, 0.5]).unwrap();
        for (a, b) in chi.iter().zip(&nn) {
            assert!((a - b).abs() < 1e-14);
        }
        let hm = harmonic_mean(&[1.0, 2.0, 0.5]).unwrap();
        assert!((homogenize_finite_range(&psi, &chi) - hm).abs() < 1e-13);
    }

    #[test]
    fn quadratic_material_cell_is_linear_in_strain() {
        // For harmonic bonds with rest length r, chi(z) = z * chi_lin and
        // the homogenized flux is psi^0 z.
        let bonds = BondTable::<f64>::quadratic_chain(3, &[1.0, 2.0]).unwrap();
        let psi: Vec<Vec<f64>> = (1..=3)
            .map(|r| {
                (0..2)
                    .map(|j| {
                        let k = if j == 0 { 1.0 } else { 2.0 };
                        (r * r) as f64 * k * 3.0_f64.powi(1 - r as i32)
                    })
                    .collect()
            })
            .collect();
        let chi_lin = solve_cell_finite_range(&psi).unwrap();
        let psi0 = homogenize_finite_range(&psi, &chi_lin);
        for &z in &[0.0, 0.13, -0.2] {
            let chi = solve_cell_nonlinear(&bonds, z, None, 1e-13, 50).unwrap();
            for (c, cl) in chi.iter().zip(&chi_lin) {
                assert!((c - z * cl).abs() < 1e-12, "z = {z}");
            }
            let sigma = cell_flux(&bonds, z, &chi).unwrap();
            assert!((sigma - psi0 * z).abs() < 1e-12, "z = {z}");
            let (modulus, _) = cell_tangent(&bonds, z, &chi).unwrap();
            assert!((modulus - psi0).abs() < 1e-12, "z = {z}");
        }
    }

    #[test]
    fn nonlinear_flux_derivative_matches_modulus() {
        let bonds = BondTable::<f64>::lennard_jones_chain(2, &[1.0, 9.0 / 8.0]).unwrap();
        let hf = HomogenizedFlux::new(bonds.clone(), 1e-13);
        let z = 0.03;
        let h = 1e-6;
        let fd = (hf.flux(z + h).unwrap() - hf.flux(z - h).unwrap()) / (2.0 * h);
        let modulus = hf.modulus(z).unwrap();
        assert!((fd - modulus).abs() < 1e-5 * (1.0 + modulus.abs()), "{fd} vs {modulus}");
        // Memoized lookups are stable.
        assert_eq!(hf.flux(z).unwrap(), hf.flux(z).unwrap());
    }

    #[test]
    fn corrector_combines_scales() {
        let grid = PeriodicGrid1D::<f64>::unit_domain(4).unwrap();
        let u0 = LatticeFn1D::from_values(grid, vec![0.0, 0.1, 0.0, -0.1]).unwrap();
        let chi = TwoScaleFn::from_fn(4, 2, |_i, j| if j == 1 { -0.25 } else { 0.25 });
        let uc = corrector(&u0, &chi).unwrap();
        let du = u0.diff(1).unwrap();
        for i in 1..=4_i64 {
            let expected = u0.value(i) + 0.25 * chi.value(i, i) * du.value(i);
            assert!((uc.value(i) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn model_bounds_hold_on_smooth_two_scale_coefficient() {
        let n = 32;
        let p = 4;
        let psi = TwoScaleFn::from_fn(n, p, |i, j| {
            2.0 + (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin()
                + 0.5 * (2.0 * std::f64::consts::PI * j as f64 / p as f64).cos()
        });
        let eps = 1.0 / n as f64;
        let b = model_bounds(&psi, eps).unwrap();
        assert!(b.chi_sup.value <= b.chi_sup.bound);
        assert!(b.psi0_slope.value <= b.psi0_slope.bound);
        assert!(b.dx_chi_sup.value <= b.dx_chi_sup.bound);
    }
}
