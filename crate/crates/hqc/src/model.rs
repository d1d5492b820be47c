//! Atomistic chain models with finite-range pair interactions.
//!
//! A model lives on an `N`-periodic lattice with spacing `epsilon` and domain
//! length `N * epsilon = 1`. Sites interact through pair potentials
//! `phi_{i,i+r}` for ranges `r = 1..=R`; the potentials depend on the site
//! only through its residue class modulo the material period `p`. Potentials
//! take the deformed bond length in lattice units, i.e. the bond `(i, i+r)`
//! is evaluated at `r (1 + D_r u_i)`.
//!
//! The internal energy is `<sum_r Phi_r(D_r u)>` with
//! `(Phi_r(z))_i = phi_{i,i+r}(r + r z_i)`, the external energy is `-<f, u>`,
//! and equilibria are zero-mean critical points computed by a damped Newton
//! iteration on the periodic lattice.

use std::sync::Arc;

use crate::error::{HqcError, Result};
use crate::grid::{LatticeFn1D, NormKind, PeriodicGrid1D};
use crate::scalar::Scalar;
use crate::solver::{self, CyclicBandedMatrix};

/// A pair potential of the scalar (deformed, lattice-unit) bond length.
pub trait PairPotential<S>: Send + Sync {
    fn eval(&self, z: S) -> S;
    fn deriv(&self, z: S) -> S;
    fn deriv2(&self, z: S) -> S;
    /// Whether `z` lies in the admissible domain of the potential.
    fn valid(&self, z: S) -> bool {
        let _ = z;
        true
    }
}

/// Harmonic bond `phi(z) = (k/2) (z - a)^2` with rest length `a`.
#[derive(Debug, Clone, Copy)]
pub struct Quadratic<S> {
    pub stiffness: S,
    pub rest_length: S,
}

impl<S: Scalar> PairPotential<S> for Quadratic<S> {
    fn eval(&self, z: S) -> S {
        let d = z - self.rest_length;
        S::of(0.5) * self.stiffness * d * d
    }
    fn deriv(&self, z: S) -> S {
        self.stiffness * (z - self.rest_length)
    }
    fn deriv2(&self, _z: S) -> S {
        self.stiffness
    }
}

/// Lennard-Jones bond `phi(z) = (z/l)^{-12} - 2 (z/l)^{-6}`, with minimum
/// `phi(l) = -1`. The potential is only admissible for `z > 0.3 l`, which
/// keeps iterates away from the singularity at `z = 0`.
#[derive(Debug, Clone, Copy)]
pub struct LennardJones<S> {
    pub length: S,
}

impl<S: Scalar> PairPotential<S> for LennardJones<S> {
    fn eval(&self, z: S) -> S {
        let s = self.length / z;
        let s6 = s * s * s * s * s * s;
        s6 * s6 - S::of(2.0) * s6
    }
    fn deriv(&self, z: S) -> S {
        let s = self.length / z;
        let s6 = s * s * s * s * s * s;
        S::of(12.0) * (s6 - s6 * s6) / z
    }
    fn deriv2(&self, z: S) -> S {
        let s = self.length / z;
        let s6 = s * s * s * s * s * s;
        (S::of(156.0) * s6 * s6 - S::of(84.0) * s6) / (z * z)
    }
    fn valid(&self, z: S) -> bool {
        z > S::of(0.3) * self.length
    }
}

/// A `p`-periodic table of pair potentials, one per (site residue class,
/// interaction range) pair.
#[derive(Clone)]
pub struct BondTable<S> {
    period: usize,
    range: usize,
    bonds: Vec<Arc<dyn PairPotential<S>>>,
}

impl<S: Scalar> BondTable<S> {
    /// `bonds[(j-1) * range + (r-1)]` is the potential of the bond starting
    /// at a site of residue class `j` with range `r`.
    pub fn new(period: usize, range: usize, bonds: Vec<Arc<dyn PairPotential<S>>>) -> Result<Self> {
        if period == 0 || range == 0 {
            return Err(HqcError::InvalidArgument("bond table needs period, range >= 1".into()));
        }
        if bonds.len() != period * range {
            return Err(HqcError::InvalidArgument(format!(
                "bond table needs {} potentials, got {}",
                period * range,
                bonds.len()
            )));
        }
        Ok(Self { period, range, bonds })
    }

    /// Quadratic material: the bond `(i, i+r)` has potential
    /// `(1/2) k_i 3^{1-r} (z - r)^2`, where `k_i` is the per-residue
    /// stiffness (`stiffness[(i-1) mod p]`).
    pub fn quadratic_chain(range: usize, stiffness: &[S]) -> Result<Self> {
        let period = stiffness.len();
        let mut bonds: Vec<Arc<dyn PairPotential<S>>> = Vec::with_capacity(period * range);
        for &k in stiffness {
            for r in 1..=range {
                let weight = S::of(3.0).powi(1 - r as i32);
                bonds.push(Arc::new(Quadratic {
                    stiffness: k * weight,
                    rest_length: S::from_usize(r).unwrap(),
                }));
            }
        }
        Self::new(period, range, bonds)
    }

    /// Lennard-Jones material: the bond `(i, i+r)` has potential
    /// `(z/l_i)^{-12} - 2 (z/l_i)^{-6}` with per-residue length
    /// `lengths[(i-1) mod p]`.
    pub fn lennard_jones_chain(range: usize, lengths: &[S]) -> Result<Self> {
        let period = lengths.len();
        let mut bonds: Vec<Arc<dyn PairPotential<S>>> = Vec::with_capacity(period * range);
        for &l in lengths {
            for _r in 1..=range {
                bonds.push(Arc::new(LennardJones { length: l }));
            }
        }
        Self::new(period, range, bonds)
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn range(&self) -> usize {
        self.range
    }

    /// Potential of the bond starting at site `i` (1-based, periodic in the
    /// residue class) with range `r`.
    #[inline]
    pub fn at(&self, i: i64, r: usize) -> &dyn PairPotential<S> {
        debug_assert!(r >= 1 && r <= self.range);
        let j = (i - 1).rem_euclid(self.period as i64) as usize;
        self.bonds[j * self.range + (r - 1)].as_ref()
    }

    /// The same material viewed on a larger period, which the current
    /// period must divide. Used to match a sampling window of `period`
    /// consecutive atoms.
    pub fn tiled(&self, period: usize) -> Result<Self> {
        if period == 0 || period % self.period != 0 {
            return Err(HqcError::InvalidArgument(format!(
                "period {period} is not a multiple of the material period {}",
                self.period
            )));
        }
        let mut bonds = Vec::with_capacity(period * self.range);
        for j in 0..period {
            for r in 1..=self.range {
                bonds.push(self.bonds[(j % self.period) * self.range + (r - 1)].clone());
            }
        }
        Ok(Self { period, range: self.range, bonds })
    }

    /// The same table with residues rotated so that local index 1 refers to
    /// the residue class of site `start`. Used to view a sampling window of
    /// `p` consecutive atoms as a unit cell.
    pub fn rotated(&self, start: i64) -> Self {
        let mut bonds = Vec::with_capacity(self.bonds.len());
        for j in 0..self.period as i64 {
            for r in 1..=self.range {
                let src = (start + j - 1).rem_euclid(self.period as i64) as usize;
                bonds.push(self.bonds[src * self.range + (r - 1)].clone());
            }
        }
        Self { period: self.period, range: self.range, bonds }
    }
}

/// Progress report of a Newton solve.
#[derive(Debug, Clone, Copy)]
pub struct NewtonReport {
    pub iterations: usize,
    pub residual_norm: f64,
    pub last_step: f64,
}

/// A periodic atomistic chain: lattice, bond table, and a zero-mean dead
/// load `f`.
pub struct AtomisticModel<S> {
    grid: PeriodicGrid1D<S>,
    bonds: BondTable<S>,
    external: LatticeFn1D<S>,
}

impl<S: Scalar> AtomisticModel<S> {
    pub fn new(grid: PeriodicGrid1D<S>, bonds: BondTable<S>, f: LatticeFn1D<S>) -> Result<Self> {
        if grid.n() % bonds.period() != 0 {
            return Err(HqcError::GridMismatch(format!(
                "material period {} must divide lattice period {}",
                bonds.period(),
                grid.n()
            )));
        }
        if f.grid() != grid {
            return Err(HqcError::GridMismatch("load not on the model grid".into()));
        }
        // Dead loads must have zero mean for periodic equilibria to exist.
        let f = f.project_zero_mean().into_fn();
        Ok(Self { grid, bonds, external: f })
    }

    pub fn grid(&self) -> PeriodicGrid1D<S> {
        self.grid
    }

    pub fn bonds(&self) -> &BondTable<S> {
        &self.bonds
    }

    pub fn range(&self) -> usize {
        self.bonds.range()
    }

    pub fn period(&self) -> usize {
        self.bonds.period()
    }

    pub fn load(&self) -> &LatticeFn1D<S> {
        &self.external
    }

    /// Deformed length (in lattice units) of the bond `(i, i+r)`:
    /// `r + r D_r u_i = r + (u_{i+r} - u_i) / epsilon`.
    #[inline]
    fn bond_length(&self, u: &LatticeFn1D<S>, i: i64, r: usize) -> S {
        let rs = S::from_usize(r).unwrap();
        rs + (u.value(i + r as i64) - u.value(i)) / self.grid.delta()
    }

    fn check_domain(&self, i: i64, r: usize, z: S) -> Result<()> {
        if !self.bonds.at(i, r).valid(z) {
            return Err(HqcError::DomainViolation {
                site: self.grid.wrap(i) + 1,
                offset: r as i64,
                z: z.to_f64().unwrap(),
            });
        }
        Ok(())
    }

    /// Total energy `<sum_r Phi_r(D_r u)> - <f, u>`.
    pub fn energy(&self, u: &LatticeFn1D<S>) -> Result<S> {
        let n = self.grid.n();
        let mut acc = S::zero();
        for i in 1..=n as i64 {
            for r in 1..=self.range() {
                let z = self.bond_length(u, i, r);
                self.check_domain(i, r, z)?;
                acc += self.bonds.at(i, r).eval(z);
            }
        }
        Ok(acc / S::from_usize(n).unwrap() - self.external.inner(u)?)
    }

    /// Bond fluxes `(Phi_r'(D_r u))_i = r phi_{i,i+r}'(r + r D_r u_i)` for a
    /// single range `r`.
    pub fn flux(&self, u: &LatticeFn1D<S>, r: usize) -> Result<LatticeFn1D<S>> {
        let n = self.grid.n();
        let rs = S::from_usize(r).unwrap();
        let mut vals = Vec::with_capacity(n);
        for i in 1..=n as i64 {
            let z = self.bond_length(u, i, r);
            self.check_domain(i, r, z)?;
            vals.push(rs * self.bonds.at(i, r).deriv(z));
        }
        LatticeFn1D::from_values(self.grid, vals)
    }

    /// First-variation representative `g` with `<g, v> = Pi'(u; v)`:
    /// `g = -sum_r T^{-r} D_r Phi_r'(D_r u) - f`. Always has zero mean.
    pub fn residual(&self, u: &LatticeFn1D<S>) -> Result<LatticeFn1D<S>> {
        let n = self.grid.n();
        let mut g: Vec<S> = self.external.values().iter().map(|&v| -v).collect();
        for r in 1..=self.range() {
            let a = self.flux(u, r)?;
            let h = S::from_usize(r).unwrap() * self.grid.delta();
            for i in 1..=n as i64 {
                g[(i - 1) as usize] -= (a.value(i) - a.value(i - r as i64)) / h;
            }
        }
        LatticeFn1D::from_values(self.grid, g)
    }

    /// Second-variation operator at `u`, as a cyclic banded matrix `B` with
    /// `<B w, v> = Pi''(u; w, v)`. The bond `(i, i+r)` contributes the
    /// coefficient `phi_{i,i+r}''(r + r D_r u_i) / epsilon^2`.
    pub fn tangent(&self, u: &LatticeFn1D<S>) -> Result<CyclicBandedMatrix<S>> {
        let n = self.grid.n();
        let eps2 = self.grid.delta() * self.grid.delta();
        let mut a = CyclicBandedMatrix::zeros(n, self.range().min(n - 1))?;
        for i in 1..=n as i64 {
            for r in 1..=self.range() {
                let z = self.bond_length(u, i, r);
                self.check_domain(i, r, z)?;
                a.add_bond(i, r, self.bonds.at(i, r).deriv2(z) / eps2);
            }
        }
        Ok(a)
    }

    /// Zero-mean equilibrium by damped Newton iteration: solve the tangent
    /// system, then halve the step (up to 30 times) until the energy
    /// satisfies an Armijo decrease. Converged when the residual max-norm
    /// drops below `tol`.
    pub fn solve_full(
        &self,
        u0: Option<&LatticeFn1D<S>>,
        tol: S,
        max_iter: usize,
    ) -> Result<(LatticeFn1D<S>, NewtonReport)> {
        let mut u = match u0 {
            Some(v) => v.project_zero_mean().into_fn(),
            None => LatticeFn1D::zeros(self.grid),
        };
        let mut last_step = f64::INFINITY;
        for it in 0..max_iter {
            let g = self.residual(&u)?;
            let gnorm = g.norm(NormKind::Linf)?;
            let a = self.tangent(&u)?;
            // The residual cannot be driven below the rounding floor of the
            // stiffness scale, which grows like `N^2`; accept once we reach
            // it even if `tol` is tighter.
            let floor = S::of(32.0 * f64::EPSILON * (self.grid.n() as f64).sqrt())
                * a.norm_inf()
                * u.norm(NormKind::Linf)?;
            if gnorm <= tol.max(floor) {
                return Ok((
                    u,
                    NewtonReport {
                        iterations: it,
                        residual_norm: gnorm.to_f64().unwrap(),
                        last_step,
                    },
                ));
            }
            let rhs: Vec<S> = g.values().iter().map(|&v| -v).collect();
            let delta = solver::solve_constrained_direct(&a, &rhs)?;
            let delta = LatticeFn1D::from_values(self.grid, delta)?;
            let slope = g.inner(&delta)?;
            let e0 = self.energy(&u)?;
            // Rounding slack: near the minimum the predicted decrease drops
            // below the accuracy of the energy itself (which sums terms with
            // cancellation, so its noise is well above one ulp).
            let slack = S::of(f64::EPSILON.powf(2.0 / 3.0)) * (S::one() + e0.abs());
            let mut t = S::one();
            let mut accepted = None;
            for _ in 0..=30 {
                let trial = u.axpy(t, &delta)?;
                match self.energy(&trial) {
                    Ok(e) if e <= e0 + S::of(1e-4) * t * slope + slack => {
                        accepted = Some((trial, t));
                        break;
                    }
                    _ => t *= S::of(0.5),
                }
            }
            let Some((trial, t)) = accepted else {
                return Err(HqcError::NoConvergence {
                    iterations: it,
                    residual: gnorm.to_f64().unwrap(),
                });
            };
            last_step = (t * delta.norm(NormKind::Linf)?).to_f64().unwrap();
            u = trial;
        }
        let g = self.residual(&u)?;
        Err(HqcError::NoConvergence {
            iterations: max_iter,
            residual: g.norm(NormKind::Linf)?.to_f64().unwrap(),
        })
    }
}

/// Linearization of the equilibrium equations about a state `ubar`: the
/// displacement `u` near `ubar` satisfies
/// `sum_r <psi_r D_r u, D_r v> = <f_eff, v>` with
/// `psi_r = Phi_r''(D_r ubar)`,
/// `xi_r = Phi_r'(D_r ubar) - Phi_r''(D_r ubar) D_r ubar` and
/// `f_eff = f - sum_r D_r T^{-r} xi_r`.
pub struct Linearization<S> {
    pub psi: Vec<LatticeFn1D<S>>,
    pub xi: Vec<LatticeFn1D<S>>,
    pub f_eff: LatticeFn1D<S>,
}

impl<S: Scalar> AtomisticModel<S> {
    pub fn linearize(&self, ubar: &LatticeFn1D<S>) -> Result<Linearization<S>> {
        let n = self.grid.n();
        let mut psi = Vec::with_capacity(self.range());
        let mut xi = Vec::with_capacity(self.range());
        let mut f_eff = self.external.values().to_vec();
        for r in 1..=self.range() {
            let rs = S::from_usize(r).unwrap();
            let dv = ubar.diff(r as i64)?;
            let mut psi_r = Vec::with_capacity(n);
            let mut xi_r = Vec::with_capacity(n);
            for i in 1..=n as i64 {
                let z = self.bond_length(ubar, i, r);
                self.check_domain(i, r, z)?;
                let p = self.bonds.at(i, r);
                let d2 = rs * rs * p.deriv2(z);
                psi_r.push(d2);
                xi_r.push(rs * p.deriv(z) - d2 * dv.value(i));
            }
            let xi_fn = LatticeFn1D::from_values(self.grid, xi_r)?;
            // f_eff -= D_r T^{-r} xi_r, i.e. (xi_i - xi_{i-r}) / (r eps).
            let h = rs * self.grid.delta();
            for i in 1..=n as i64 {
                f_eff[(i - 1) as usize] -= (xi_fn.value(i) - xi_fn.value(i - r as i64)) / h;
            }
            psi.push(LatticeFn1D::from_values(self.grid, psi_r)?);
            xi.push(xi_fn);
        }
        Ok(Linearization { psi, xi, f_eff: LatticeFn1D::from_values(self.grid, f_eff)? })
    }
}

/// Solve the linear nearest-neighbour problem `<psi D u, D v> = <f, v>` for
/// the zero-mean solution.
pub fn solve_linear_nn<S: Scalar>(
    psi: &LatticeFn1D<S>,
    f: &LatticeFn1D<S>,
) -> Result<LatticeFn1D<S>> {
    if psi.grid() != f.grid() {
        return Err(HqcError::GridMismatch("psi and f on different grids".into()));
    }
    let n = psi.grid().n();
    let ns = S::from_usize(n).unwrap();
    let a = solver::nn_stiffness(psi.values(), psi.grid().delta(), ns);
    let mean = f.average();
    let b: Vec<S> = f.values().iter().map(|&v| (v - mean) / ns).collect();
    let x = solver::solve_constrained_direct(&a, &b)?;
    LatticeFn1D::from_values(psi.grid(), x)
}
