//! The homogenized quasicontinuum (HQC) method on periodic chains.
//!
//! The macroscopic mesh selects node sites `i_1 = 1 < i_2 < ... < i_K` of the
//! fine lattice; macroscopic functions are piecewise affine between nodes.
//! Each element carries a sampling window of `p` consecutive atoms near its
//! midpoint. The HQC energy replaces the full lattice sum by per-element
//! window averages of a reconstructed displacement: the reconstruction
//! `R_k(u^H) = u^H + w_k` relaxes a zero-mean `p`-periodic microfunction
//! `w_k` at fixed macroscopic strain, which is exactly the unit-cell problem
//! of [`crate::cell`] at strain `D u^H|_k`.
//!
//! Solvers provided here:
//! * [`solve_hqc`]: macroscopic Newton iteration with per-element
//!   microproblems (atomistic, collocated linear, or naive variants).
//! * [`qc_on_psi0`]: the P1 Galerkin discretization of a given pointwise
//!   homogenized coefficient, used as the reference for modeling errors and
//!   for the collocation equivalence.
//! * [`interpolate_nodal`]: nodal interpolation onto the mesh.

use crate::cell;
use crate::error::{HqcError, Result};
use crate::grid::{LatticeFn1D, PeriodicGrid1D, TwoScaleFn};
use crate::model::{AtomisticModel, BondTable, NewtonReport};
use crate::scalar::Scalar;
use crate::solver::{self, CyclicBandedMatrix};

/// A macroscopic mesh over the periodic fine lattice: 1-based node sites,
/// strictly increasing, starting at site 1. Element `k` spans the sites
/// `[i_{k+1}, i_{k+2})` (periodically for the last element).
#[derive(Debug, Clone, PartialEq)]
pub struct MacroMesh<S> {
    grid: PeriodicGrid1D<S>,
    nodes: Vec<usize>,
}

impl<S: Scalar> MacroMesh<S> {
    pub fn from_nodes(grid: PeriodicGrid1D<S>, nodes: Vec<usize>) -> Result<Self> {
        if nodes.is_empty() || nodes[0] != 1 {
            return Err(HqcError::InvalidArgument("mesh must start at site 1".into()));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) || *nodes.last().unwrap() > grid.n() {
            return Err(HqcError::InvalidArgument(
                "mesh nodes must be strictly increasing lattice sites".into(),
            ));
        }
        Ok(Self { grid, nodes })
    }

    /// Uniform mesh with `k` elements; requires `k | n`.
    pub fn uniform(grid: PeriodicGrid1D<S>, k: usize) -> Result<Self> {
        if k == 0 || grid.n() % k != 0 {
            return Err(HqcError::InvalidArgument(format!(
                "element count {k} must divide lattice period {}",
                grid.n()
            )));
        }
        let m = grid.n() / k;
        Self::from_nodes(grid, (0..k).map(|j| 1 + j * m).collect())
    }

    pub fn grid(&self) -> PeriodicGrid1D<S> {
        self.grid
    }

    pub fn num_elements(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    /// Number of lattice sites in element `k` (0-based).
    pub fn element_sites(&self, k: usize) -> usize {
        if k + 1 < self.nodes.len() {
            self.nodes[k + 1] - self.nodes[k]
        } else {
            self.grid.n() + 1 - self.nodes[k]
        }
    }

    /// Element length `H_k = eps * (i_{k+2} - i_{k+1})`.
    pub fn h(&self, k: usize) -> S {
        S::from_usize(self.element_sites(k)).unwrap() * self.grid.delta()
    }

    pub fn h_max(&self) -> S {
        (0..self.num_elements()).fold(S::zero(), |a, k| a.max(self.h(k)))
    }

    /// Element containing lattice site `i` (1-based, in `1..=n`).
    pub fn element_of(&self, i: usize) -> usize {
        match self.nodes.binary_search(&i) {
            Ok(k) => k,
            Err(k) => k - 1,
        }
    }

    /// Lattice average of the hat function of node `l`.
    fn hat_average(&self, l: usize) -> S {
        let k_right = l;
        let k_left = (l + self.num_elements() - 1) % self.num_elements();
        let mr = self.element_sites(k_right) as f64;
        let ml = self.element_sites(k_left) as f64;
        // On the right element the hat decays from 1: sum (1 - t/m) = (m+1)/2;
        // on the left it grows to 1 (excluding the node itself): (m-1)/2.
        S::of(((mr + 1.0) / 2.0 + (ml - 1.0) / 2.0) / self.grid.n() as f64)
    }
}

/// Sampling window of `p` consecutive atoms inside an element, with its
/// collocation atom (left of center for even `p`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingDomain {
    pub start: usize,
    pub p: usize,
    pub collocation: usize,
}

impl SamplingDomain {
    /// Centered window of `p` atoms in element `k`.
    pub fn centered<S: Scalar>(mesh: &MacroMesh<S>, k: usize, p: usize) -> Result<Self> {
        let m = mesh.element_sites(k);
        if p == 0 || p > m {
            return Err(HqcError::InvalidArgument(format!(
                "window of {p} atoms does not fit in element with {m} sites"
            )));
        }
        let start = mesh.nodes()[k] + (m - p) / 2;
        Ok(Self { start, p, collocation: start + (p - 1) / 2 })
    }
}

/// Macroscopic (piecewise affine) function: nodal values on a mesh.
#[derive(Debug, Clone)]
pub struct MacroFn<S> {
    mesh: MacroMesh<S>,
    nodal: Vec<S>,
}

impl<S: Scalar> MacroFn<S> {
    pub fn new(mesh: MacroMesh<S>, nodal: Vec<S>) -> Result<Self> {
        if nodal.len() != mesh.num_elements() {
            return Err(HqcError::GridMismatch("nodal values do not match mesh".into()));
        }
        Ok(Self { mesh, nodal })
    }

    pub fn mesh(&self) -> &MacroMesh<S> {
        &self.mesh
    }

    pub fn nodal(&self) -> &[S] {
        &self.nodal
    }

    /// Strain (piecewise constant derivative) on element `k`.
    pub fn slope(&self, k: usize) -> S {
        let kk = (k + 1) % self.nodal.len();
        (self.nodal[kk] - self.nodal[k]) / self.mesh.h(k)
    }

    /// The induced fine-lattice function.
    pub fn to_lattice(&self) -> LatticeFn1D<S> {
        let grid = self.mesh.grid();
        let eps = grid.delta();
        let mut vals = Vec::with_capacity(grid.n());
        for k in 0..self.mesh.num_elements() {
            let base = self.nodal[k];
            let slope = self.slope(k);
            let i0 = self.mesh.nodes()[k];
            for i in 0..self.mesh.element_sites(k) {
                vals.push(base + slope * eps * S::from_usize(i).unwrap());
            }
            debug_assert_eq!(vals.len(), i0 - 1 + self.mesh.element_sites(k));
        }
        LatticeFn1D::from_values(grid, vals).expect("element sites partition the lattice")
    }

    /// Shift nodal values so the induced lattice function has zero mean.
    pub fn recenter(&mut self) {
        let mean = self.to_lattice().average();
        for v in &mut self.nodal {
            *v -= mean;
        }
    }
}

/// Nodal interpolation `I_H u`: match `u` at the nodes, then shift to zero
/// lattice mean.
pub fn interpolate_nodal<S: Scalar>(u: &LatticeFn1D<S>, mesh: &MacroMesh<S>) -> Result<MacroFn<S>> {
    if u.grid() != mesh.grid() {
        return Err(HqcError::GridMismatch("interpolation mesh on different grid".into()));
    }
    let nodal = mesh.nodes().iter().map(|&i| u.value(i as i64)).collect();
    let mut f = MacroFn::new(mesh.clone(), nodal)?;
    f.recenter();
    Ok(f)
}

/// Microproblem variants of the HQC method.
pub enum MicroKind<'a, S> {
    /// Full nonlinear finite-range microproblem of an atomistic material.
    Atomistic(&'a AtomisticModel<S>),
    /// Linear nearest-neighbour coefficient `psi(X, Y)`, collocated at the
    /// window's collocation atom.
    CollocatedNn(&'a TwoScaleFn<S>),
    /// No reconstruction (`R_k = identity`): the naive quasicontinuum.
    NaiveAtomistic(&'a AtomisticModel<S>),
}

/// Result of one element microproblem at a given macroscopic strain.
pub struct MicroSolution<S> {
    /// Zero-mean periodic corrector `chi` (fast-variable scaling; the
    /// displacement correction is `eps * chi`).
    pub chi: Vec<S>,
    /// Element flux `sum_r <Phi_r'(z + D_{Y,r} chi)>_Y`.
    pub flux: S,
    /// Element tangent modulus.
    pub modulus: S,
    /// Corrector sensitivity `d chi / d z`.
    pub chi_prime: Vec<S>,
}

/// Solve the microproblem of one sampling window at strain `z`.
pub fn micro_solve<S: Scalar>(
    micro: &MicroKind<'_, S>,
    window: &SamplingDomain,
    z: S,
    warm: Option<&[S]>,
    tol: S,
) -> Result<MicroSolution<S>> {
    match micro {
        MicroKind::Atomistic(model) => {
            let bonds = model.bonds().rotated(window.start as i64).tiled(window.p)?;
            let chi = cell::solve_cell_nonlinear(&bonds, z, warm, tol, 100)?;
            let flux = cell::cell_flux(&bonds, z, &chi)?;
            let (modulus, chi_prime) = cell::cell_tangent(&bonds, z, &chi)?;
            Ok(MicroSolution { chi, flux, modulus, chi_prime })
        }
        MicroKind::NaiveAtomistic(model) => {
            let bonds = model.bonds().rotated(window.start as i64).tiled(window.p)?;
            let chi = vec![S::zero(); window.p];
            let flux = cell::cell_flux(&bonds, z, &chi)?;
            let (modulus, _) = {
                // Tangent of the naive energy: plain window average of the
                // bond curvatures, no corrector sensitivity.
                let psi = curvature_rows(&bonds, z, &chi)?;
                let zeros = vec![S::zero(); window.p];
                (cell::homogenize_finite_range(&psi, &zeros), ())
            };
            Ok(MicroSolution { chi: chi.clone(), flux, modulus, chi_prime: chi })
        }
        MicroKind::CollocatedNn(psi) => {
            let psi_loc: Vec<S> = (0..window.p)
                .map(|j| psi.value(window.collocation as i64, (window.start + j) as i64))
                .collect();
            let chi = cell::solve_cell_nn(&psi_loc)?;
            let psi0 = cell::homogenize_finite_range(&[psi_loc], &chi);
            Ok(MicroSolution {
                flux: psi0 * z,
                modulus: psi0,
                chi_prime: chi.clone(),
                chi: chi.iter().map(|&c| c * z).collect(),
            })
        }
    }
}

fn curvature_rows<S: Scalar>(bonds: &BondTable<S>, z: S, chi: &[S]) -> Result<Vec<Vec<S>>> {
    let p = bonds.period();
    let mut psi = vec![vec![S::zero(); p]; bonds.range()];
    for j in 0..p {
        for r in 1..=bonds.range() {
            let rs = S::from_usize(r).unwrap();
            let arg = rs * (S::one() + z) + (chi[(j + r) % p] - chi[j]);
            psi[r - 1][j] = rs * rs * bonds.at(j as i64 + 1, r).deriv2(arg);
        }
    }
    Ok(psi)
}

/// Load assembly mode for the macroscopic right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadMode {
    /// `F(v^H) = <f, v^H>_X` over the whole lattice (default).
    Exact,
    /// `F(v^H) = sum_k H_k <f, v^H>_{S_k}` over the sampling windows.
    Sampled,
}

/// Solution of an HQC solve: macroscopic function plus the per-element
/// micro correctors on their windows.
pub struct HqcSolution<S> {
    pub macro_fn: MacroFn<S>,
    pub windows: Vec<SamplingDomain>,
    /// Displacement corrections `w_k = eps * chi_k`, one per element,
    /// indexed by window-local site.
    pub micro: Vec<Vec<S>>,
    pub report: NewtonReport,
}

impl<S: Scalar> HqcSolution<S> {
    /// Reconstructed fine-lattice displacement: on element `k`,
    /// `u^{H,c}(X_i) = u^H(X_i) + w_k((i - start_k) mod p)`.
    pub fn reconstruct(&self) -> LatticeFn1D<S> {
        let mesh = self.macro_fn.mesh();
        let grid = mesh.grid();
        let base = self.macro_fn.to_lattice();
        let mut vals = base.into_values();
        for k in 0..mesh.num_elements() {
            let w = &self.micro[k];
            let p = self.windows[k].p as i64;
            let start = self.windows[k].start as i64;
            let i0 = mesh.nodes()[k];
            for off in 0..mesh.element_sites(k) {
                let i = (i0 + off) as i64;
                let j = (i - start).rem_euclid(p) as usize;
                vals[i as usize - 1] += w[j];
            }
        }
        LatticeFn1D::from_values(grid, vals).expect("site count preserved")
    }
}

fn hat_value<S: Scalar>(mesh: &MacroMesh<S>, k: usize, off: usize) -> S {
    // Barycentric coordinate of site `nodes[k] + off` toward node k+1.
    S::from_usize(off).unwrap() / S::from_usize(mesh.element_sites(k)).unwrap()
}

/// Assemble the macroscopic load vector `F_l = F(w_l)`.
fn load_vector<S: Scalar>(
    mesh: &MacroMesh<S>,
    windows: &[SamplingDomain],
    f: &LatticeFn1D<S>,
    mode: LoadMode,
) -> Vec<S> {
    let kk = mesh.num_elements();
    let mut b = vec![S::zero(); kk];
    match mode {
        LoadMode::Exact => {
            let n = S::from_usize(mesh.grid().n()).unwrap();
            for k in 0..kk {
                let i0 = mesh.nodes()[k];
                for off in 0..mesh.element_sites(k) {
                    let t = hat_value(mesh, k, off);
                    let fv = f.value((i0 + off) as i64) / n;
                    b[k] += (S::one() - t) * fv;
                    b[(k + 1) % kk] += t * fv;
                }
            }
        }
        LoadMode::Sampled => {
            for k in 0..kk {
                let w = &windows[k];
                let weight = mesh.h(k) / S::from_usize(w.p).unwrap();
                let i0 = mesh.nodes()[k];
                for j in 0..w.p {
                    let off = w.start + j - i0;
                    let t = hat_value(mesh, k, off);
                    let fv = weight * f.value((w.start + j) as i64);
                    b[k] += (S::one() - t) * fv;
                    b[(k + 1) % kk] += t * fv;
                }
            }
        }
    }
    b
}

/// HQC energy (for the Newton line search): per-element window averages of
/// the bond energies of the reconstructed displacement, minus the load.
fn hqc_energy<S: Scalar>(
    micro: &MicroKind<'_, S>,
    mesh: &MacroMesh<S>,
    windows: &[SamplingDomain],
    nodal: &[S],
    load: &[S],
    tol: S,
) -> Result<S> {
    let mut e = S::zero();
    let u = MacroFn::new(mesh.clone(), nodal.to_vec())?;
    for (k, w) in windows.iter().enumerate() {
        let z = u.slope(k);
        let internal = match micro {
            MicroKind::Atomistic(model) => {
                let bonds = model.bonds().rotated(w.start as i64).tiled(w.p)?;
                let chi = cell::solve_cell_nonlinear(&bonds, z, None, tol, 100)?;
                cell::cell_energy_per_cell(&bonds, z, &chi)?
            }
            MicroKind::NaiveAtomistic(model) => {
                let bonds = model.bonds().rotated(w.start as i64).tiled(w.p)?;
                cell::cell_energy_per_cell(&bonds, z, &vec![S::zero(); w.p])?
            }
            MicroKind::CollocatedNn(psi) => {
                let psi_loc: Vec<S> = (0..w.p)
                    .map(|j| psi.value(w.collocation as i64, (w.start + j) as i64))
                    .collect();
                let chi = cell::solve_cell_nn(&psi_loc)?;
                let psi0 = cell::homogenize_finite_range(&[psi_loc], &chi);
                S::of(0.5) * psi0 * z * z
            }
        };
        e += mesh.h(k) * internal;
    }
    for (fl, ul) in load.iter().zip(nodal) {
        e -= *fl * *ul;
    }
    Ok(e)
}

/// Solve the HQC equilibrium: find the zero-mean macroscopic `u^H` with
/// `(E^HQC)'(u^H; w_l) = F(w_l)` for all nodal basis functions.
pub fn solve_hqc<S: Scalar>(
    micro: MicroKind<'_, S>,
    mesh: &MacroMesh<S>,
    f: &LatticeFn1D<S>,
    p: usize,
    mode: LoadMode,
    tol: S,
) -> Result<HqcSolution<S>> {
    let kk = mesh.num_elements();
    if kk < 2 {
        return Err(HqcError::InvalidArgument("HQC mesh needs at least two elements".into()));
    }
    let windows: Vec<SamplingDomain> =
        (0..kk).map(|k| SamplingDomain::centered(mesh, k, p)).collect::<Result<_>>()?;
    let load = load_vector(mesh, &windows, f, mode);
    let hats: Vec<S> = (0..kk).map(|l| mesh.hat_average(l)).collect();
    let hat_sum = hats.iter().fold(S::zero(), |a, &v| a + v);

    let nonlinear = matches!(micro, MicroKind::Atomistic(_) | MicroKind::NaiveAtomistic(_));
    let mut nodal = vec![S::zero(); kk];
    let mut warm: Vec<Option<Vec<S>>> = vec![None; kk];
    let mut last_step = f64::INFINITY;
    let max_iter = 100;
    for it in 0..max_iter {
        // Element state at the current iterate.
        let u = MacroFn::new(mesh.clone(), nodal.clone())?;
        let mut flux = Vec::with_capacity(kk);
        let mut modulus = Vec::with_capacity(kk);
        let mut chis = Vec::with_capacity(kk);
        for k in 0..kk {
            let sol = micro_solve(&micro, &windows[k], u.slope(k), warm[k].as_deref(), tol)?;
            flux.push(sol.flux);
            modulus.push(sol.modulus);
            warm[k] = Some(sol.chi.clone());
            chis.push(sol.chi);
        }
        // Residual g_l = sigma_{l-1} - sigma_l - F_l, projected consistent
        // with the zero-mean constraint (the projection only matters for
        // sampled loads, whose nodal sum need not vanish).
        let mut g: Vec<S> = (0..kk)
            .map(|l| flux[(l + kk - 1) % kk] - flux[l] - load[l])
            .collect();
        let g_sum = g.iter().fold(S::zero(), |a, &v| a + v);
        let lambda = g_sum / hat_sum;
        for (gl, hl) in g.iter_mut().zip(&hats) {
            *gl -= lambda * *hl;
        }
        let gnorm = g.iter().fold(S::zero(), |a, &v| a.max(v.abs()));
        // The element fluxes are only resolved to an absolute accuracy of
        // order `tol` times their sensitivity to the micro corrector (the
        // modulus), so the residual is measured against that scale.
        let fscale = flux
            .iter()
            .chain(modulus.iter())
            .fold(S::one(), |a, &v| a.max(v.abs()));
        if gnorm <= tol * fscale {
            let eps = mesh.grid().delta();
            let micro_disp: Vec<Vec<S>> =
                chis.into_iter().map(|c| c.into_iter().map(|v| eps * v).collect()).collect();
            let mut macro_fn = MacroFn::new(mesh.clone(), nodal)?;
            macro_fn.recenter();
            return Ok(HqcSolution {
                macro_fn,
                windows,
                micro: micro_disp,
                report: NewtonReport {
                    iterations: it,
                    residual_norm: gnorm.to_f64().unwrap(),
                    last_step,
                },
            });
        }
        // Tangent: cyclic tridiagonal with element coefficients a_k / H_k.
        let mut a = CyclicBandedMatrix::zeros(kk, 1)?;
        for k in 0..kk {
            a.add_bond(k as i64 + 1, 1, modulus[k] / mesh.h(k));
        }
        let rhs: Vec<S> = g.iter().map(|&v| -v).collect();
        let delta = solver::solve_constrained_direct(&a, &rhs)?;
        if nonlinear {
            // Armijo step halving on the HQC energy.
            let slope = g.iter().zip(&delta).fold(S::zero(), |acc, (&gi, &di)| acc + gi * di);
            let e0 = hqc_energy(&micro, mesh, &windows, &nodal, &load, tol)?;
            // Rounding slack: near the minimum the predicted decrease drops
            // below the accuracy of the energy itself (which sums terms with
            // cancellation, so its noise is well above one ulp).
            let slack = S::of(f64::EPSILON.powf(2.0 / 3.0)) * (S::one() + e0.abs());
            let mut t = S::one();
            let mut accepted = false;
            for _ in 0..=30 {
                let trial: Vec<S> =
                    nodal.iter().zip(&delta).map(|(&ul, &dl)| ul + t * dl).collect();
                match hqc_energy(&micro, mesh, &windows, &trial, &load, tol) {
                    Ok(e) if e <= e0 + S::of(1e-4) * t * slope + slack => {
                        nodal = trial;
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
            last_step = (t * delta.iter().fold(S::zero(), |acc, &v| acc.max(v.abs())))
                .to_f64()
                .unwrap();
        } else {
            for (ul, dl) in nodal.iter_mut().zip(&delta) {
                *ul += *dl;
            }
            last_step =
                delta.iter().fold(S::zero(), |acc, &v| acc.max(v.abs())).to_f64().unwrap();
        }
    }
    Err(HqcError::NoConvergence { iterations: max_iter, residual: f64::NAN })
}

/// P1 Galerkin solve of `<psi0 D u^H, D v^H>_X = <f, v^H>_X` on the mesh,
/// with the pointwise coefficient `psi0` summed exactly over the lattice.
pub fn qc_on_psi0<S: Scalar>(
    psi0: &LatticeFn1D<S>,
    f: &LatticeFn1D<S>,
    mesh: &MacroMesh<S>,
) -> Result<MacroFn<S>> {
    if psi0.grid() != mesh.grid() || f.grid() != mesh.grid() {
        return Err(HqcError::GridMismatch("coefficient or load on different grid".into()));
    }
    let kk = mesh.num_elements();
    if kk < 2 {
        return Err(HqcError::InvalidArgument("QC mesh needs at least two elements".into()));
    }
    let n = S::from_usize(mesh.grid().n()).unwrap();
    let mut a = CyclicBandedMatrix::zeros(kk, 1)?;
    for k in 0..kk {
        let i0 = mesh.nodes()[k];
        let mut s = S::zero();
        for off in 0..mesh.element_sites(k) {
            s += psi0.value((i0 + off) as i64);
        }
        let h = mesh.h(k);
        a.add_bond(k as i64 + 1, 1, s / (n * h * h));
    }
    let b = load_vector(mesh, &[], f, LoadMode::Exact);
    let x = solver::solve_constrained_direct(&a, &b)?;
    let mut mf = MacroFn::new(mesh.clone(), x)?;
    mf.recenter();
    Ok(mf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::NormKind;
    use crate::model;

    fn unit_grid(n: usize) -> PeriodicGrid1D<f64> {
        PeriodicGrid1D::unit_domain(n).unwrap()
    }

    fn sine_load(grid: PeriodicGrid1D<f64>, amp: f64) -> LatticeFn1D<f64> {
        let n = grid.n() as f64;
        LatticeFn1D::from_fn(grid, |i| {
            amp * (1.0 + 2.0 * std::f64::consts::PI * i as f64 / n).sin()
        })
    }

    #[test]
    fn mesh_geometry() {
        let grid = unit_grid(12);
        let mesh = MacroMesh::uniform(grid, 3).unwrap();
        assert_eq!(mesh.nodes(), &[1, 5, 9]);
        assert_eq!(mesh.element_sites(2), 4);
        assert!((mesh.h(0) - 4.0 / 12.0).abs() < 1e-15);
        assert_eq!(mesh.element_of(1), 0);
        assert_eq!(mesh.element_of(4), 0);
        assert_eq!(mesh.element_of(5), 1);
        assert_eq!(mesh.element_of(12), 2);
        // Hat averages sum to <1>_X = 1.
        let s: f64 = (0..3).map(|l| mesh.hat_average(l)).sum();
        assert!((s - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sampling_window_centered_with_left_tie_break() {
        let grid = unit_grid(16);
        let mesh = MacroMesh::uniform(grid, 2).unwrap();
        // Element 0 has sites 1..=8; a 4-atom window sits at 3..=6 and the
        // collocation atom is site 4 (left of center).
        let w = SamplingDomain::centered(&mesh, 0, 4).unwrap();
        assert_eq!((w.start, w.collocation), (3, 4));
        let w = SamplingDomain::centered(&mesh, 0, 3).unwrap();
        assert_eq!((w.start, w.collocation), (3, 4));
        assert!(SamplingDomain::centered(&mesh, 0, 9).is_err());
    }

    #[test]
    fn macro_fn_piecewise_affine() {
        let grid = unit_grid(8);
        let mesh = MacroMesh::uniform(grid, 2).unwrap();
        let u = MacroFn::new(mesh, vec![0.0, 1.0]).unwrap();
        let lat = u.to_lattice();
        // Slopes +- 2 on elements of length 1/2, nodes at sites 1 and 5.
        assert!((u.slope(0) - 2.0).abs() < 1e-14);
        assert!((u.slope(1) + 2.0).abs() < 1e-14);
        let expect = [0.0, 0.25, 0.5, 0.75, 1.0, 0.75, 0.5, 0.25];
        for (a, b) in lat.values().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn nodal_interpolation_reproduces_piecewise_affine() {
        let grid = unit_grid(16);
        let mesh = MacroMesh::uniform(grid, 4).unwrap();
        let mut u = MacroFn::new(mesh.clone(), vec![0.3, -0.1, 0.4, 0.0]).unwrap();
        u.recenter();
        let lat = u.to_lattice();
        let v = interpolate_nodal(&lat, &mesh).unwrap();
        for (a, b) in v.to_lattice().values().iter().zip(lat.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn collocated_hqc_equals_qc_on_collocated_psi0() {
        // The collocated HQC solution coincides with the P1 solve of the
        // elementwise-constant homogenized coefficient.
        let grid = unit_grid(64);
        let n = grid.n();
        let psi = TwoScaleFn::from_fn(n, 2, |i, j| {
            2.0 + (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos() * 0.5
                + if j == 1 { 0.0 } else { 1.0 }
        });
        let f = sine_load(grid, 1.0);
        let mesh = MacroMesh::uniform(grid, 8).unwrap();
        let sol =
            solve_hqc(MicroKind::CollocatedNn(&psi), &mesh, &f, 2, LoadMode::Exact, 1e-12)
                .unwrap();
        // Build the collocated coefficient field and solve the P1 problem.
        let mut coll_vals = vec![0.0; n];
        for k in 0..mesh.num_elements() {
            let w = SamplingDomain::centered(&mesh, k, 2).unwrap();
            let psi_loc: Vec<f64> =
                (0..2).map(|j| psi.value(w.collocation as i64, (w.start + j) as i64)).collect();
            let psi0 = cell::harmonic_mean(&psi_loc).unwrap();
            let i0 = mesh.nodes()[k];
            for off in 0..mesh.element_sites(k) {
                coll_vals[i0 - 1 + off] = psi0;
            }
        }
        let coll = LatticeFn1D::from_values(grid, coll_vals).unwrap();
        let qc = qc_on_psi0(&coll, &f, &mesh).unwrap();
        for (a, b) in sol.macro_fn.nodal().iter().zip(qc.nodal()) {
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
    }

    #[test]
    fn homogeneous_material_hqc_is_exact_p1() {
        // Constant stiffness: no microstructure, so HQC == naive == P1 with
        // the arithmetic coefficient, and reconstruction adds nothing.
        let grid = unit_grid(64);
        let bonds = model::BondTable::quadratic_chain(1, &[2.0, 2.0]).unwrap();
        let f = sine_load(grid, 1.0);
        let m = model::AtomisticModel::new(grid, bonds, f.clone()).unwrap();
        let mesh = MacroMesh::uniform(grid, 8).unwrap();
        let hqc =
            solve_hqc(MicroKind::Atomistic(&m), &mesh, &f, 2, LoadMode::Exact, 1e-12).unwrap();
        let naive =
            solve_hqc(MicroKind::NaiveAtomistic(&m), &mesh, &f, 2, LoadMode::Exact, 1e-12)
                .unwrap();
        for (a, b) in hqc.macro_fn.nodal().iter().zip(naive.macro_fn.nodal()) {
            assert!((a - b).abs() < 1e-12);
        }
        let psi0 = LatticeFn1D::from_fn(grid, |_| 2.0);
        let qc = qc_on_psi0(&psi0, &f, &mesh).unwrap();
        for (a, b) in hqc.macro_fn.nodal().iter().zip(qc.nodal()) {
            assert!((a - b).abs() < 1e-12);
        }
        let rec = hqc.reconstruct();
        for (a, b) in rec.values().iter().zip(hqc.macro_fn.to_lattice().values()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn quadratic_two_phase_hqc_converges_to_atomistic() {
        // Two-phase nearest-neighbour chain: the reconstructed HQC solution
        // approaches the full atomistic solution in H1 as the mesh refines.
        let grid = unit_grid(256);
        let bonds = model::BondTable::quadratic_chain(1, &[1.0, 2.0]).unwrap();
        let f = sine_load(grid, 1.0);
        let m = model::AtomisticModel::new(grid, bonds, f.clone()).unwrap();
        let (u, _) = m.solve_full(None, 1e-10, 20).unwrap();
        let mut errs = Vec::new();
        for k in [4usize, 8, 16] {
            let mesh = MacroMesh::uniform(grid, k).unwrap();
            let sol =
                solve_hqc(MicroKind::Atomistic(&m), &mesh, &f, 2, LoadMode::Exact, 1e-12)
                    .unwrap();
            let rec = sol.reconstruct();
            let e = rec.sub(&u).unwrap().norm(NormKind::H1).unwrap();
            errs.push(e);
        }
        assert!(errs[1] < 0.6 * errs[0], "{errs:?}");
        assert!(errs[2] < 0.6 * errs[1], "{errs:?}");
    }

    #[test]
    fn sampled_load_close_to_exact() {
        let grid = unit_grid(128);
        let bonds = model::BondTable::quadratic_chain(1, &[1.0, 2.0]).unwrap();
        let f = sine_load(grid, 1.0);
        let m = model::AtomisticModel::new(grid, bonds, f.clone()).unwrap();
        let mesh = MacroMesh::uniform(grid, 16).unwrap();
        let exact =
            solve_hqc(MicroKind::Atomistic(&m), &mesh, &f, 2, LoadMode::Exact, 1e-12).unwrap();
        let sampled =
            solve_hqc(MicroKind::Atomistic(&m), &mesh, &f, 2, LoadMode::Sampled, 1e-12).unwrap();
        let d = sampled
            .macro_fn
            .to_lattice()
            .sub(&exact.macro_fn.to_lattice())
            .unwrap()
            .norm(NormKind::Linf)
            .unwrap();
        let scale = exact.macro_fn.to_lattice().norm(NormKind::Linf).unwrap();
        assert!(d < 0.1 * scale, "sampled deviates too much: {d} vs {scale}");
    }
}
