//! 1D chain experiments: linear and Lennard-Jones convergence sweeps and
//! the period study.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{default_mesh, Table, WhichChain};
use crate::cell::HomogenizedFlux;
use crate::error::Result;
use crate::grid::{LatticeFn1D, NormKind, PeriodicGrid1D};
use crate::hqc::{self, LoadMode, MacroMesh, MicroKind};
use crate::model::{AtomisticModel, BondTable, LennardJones, PairPotential, Quadratic};

/// Configuration of a 1D convergence sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Chain1dConfig {
    /// Number of atoms.
    pub n: usize,
    /// Numbers of macroscopic elements to sweep (`H = 1 / k`).
    pub mesh: Vec<usize>,
    /// Sampling window size (atoms per microproblem).
    pub p: usize,
    /// Newton / solver tolerance.
    pub tol: f64,
    /// Macroscopic load assembly.
    pub load_mode: LoadMode,
    /// Amplitude of the sine load `A sin(1 + 2 pi X)`.
    pub amplitude: f64,
}

impl Default for Chain1dConfig {
    fn default() -> Self {
        Self::linear()
    }
}

impl Chain1dConfig {
    /// Defaults of the linear study: `N = 2^14`, unit load amplitude.
    pub fn linear() -> Self {
        Self {
            n: 1 << 14,
            mesh: default_mesh(),
            p: 2,
            tol: 1e-10,
            load_mode: LoadMode::Exact,
            amplitude: 1.0,
        }
    }

    /// Defaults of the nonlinear study: `N = 2^12`, load amplitude 50.
    pub fn nonlinear() -> Self {
        Self { n: 1 << 12, amplitude: 50.0, ..Self::linear() }
    }
}

/// Two-phase harmonic chain: `phi_{i,i+r}(z) = (1/2) k_i 3^{1-r} (z - r)^2`
/// with `k_i = 1` for even `i` and `k_i = 2` for odd `i`, range 3.
pub fn quadratic_chain_1d() -> BondTable<f64> {
    BondTable::quadratic_chain(3, &[2.0, 1.0]).expect("static table")
}

/// Two-phase Lennard-Jones chain: `phi(z) = (z/l_i)^{-12} - 2 (z/l_i)^{-6}`
/// with `l_i = 1` for even `i` and `l_i = 9/8` for odd `i`, range 3.
pub fn lj_chain() -> BondTable<f64> {
    BondTable::lennard_jones_chain(3, &[9.0 / 8.0, 1.0]).expect("static table")
}

/// The reference load `f_i = A sin(1 + 2 pi X_i)`.
pub fn sine_load(grid: PeriodicGrid1D<f64>, amplitude: f64) -> LatticeFn1D<f64> {
    LatticeFn1D::from_fn(grid, |i| {
        amplitude * (1.0 + 2.0 * std::f64::consts::PI * grid.x(i as i64)).sin()
    })
}

/// `Av(u)_i = (u_i + u_{i+1}) / 2`, the bond-midpoint average used when
/// comparing the naive quasicontinuum against the oscillating solution.
pub fn bond_average(u: &LatticeFn1D<f64>) -> LatticeFn1D<f64> {
    u.axpy(1.0, &u.translate(1)).expect("same grid").map(|v| 0.5 * v)
}

/// Run one chain sweep. Columns:
///
/// * `h`: mesh size,
/// * `err_uh_l2`, `err_uh_h1`: error of the homogenized solution `u^H`,
/// * `err_rec_h1`: error of the reconstructed solution `u^{H,c}`,
/// * `err_naive_l2`, `err_naive_h1`, `err_naive_av_l2`, `err_naive_av_h1`:
///   error of the naive QC solution against `u` and against `Av(u)`,
/// * `e_mod`: largest deviation of the element moduli from the exact
///   homogenized modulus at the element strain.
pub fn run_chain(bonds: &BondTable<f64>, cfg: &Chain1dConfig) -> Result<Table> {
    let grid = PeriodicGrid1D::unit_domain(cfg.n)?;
    let f = sine_load(grid, cfg.amplitude);
    let model = AtomisticModel::new(grid, bonds.clone(), f.clone())?;
    let (u, _) = model.solve_full(None, cfg.tol, 50)?;
    let av_u = bond_average(&u);
    let exact_modulus = HomogenizedFlux::new(bonds.clone(), cfg.tol);
    let eps = grid.delta();

    let mut table = Table::new(&[
        "h",
        "err_uh_l2",
        "err_uh_h1",
        "err_rec_h1",
        "err_naive_l2",
        "err_naive_h1",
        "err_naive_av_l2",
        "err_naive_av_h1",
        "e_mod",
    ]);
    for &k in &cfg.mesh {
        let mesh = MacroMesh::uniform(grid, k)?;
        let micro = MicroKind::Atomistic(&model);
        let sol = hqc::solve_hqc(micro, &mesh, &f, cfg.p, cfg.load_mode, cfg.tol)?;
        let uh = sol.macro_fn.to_lattice();
        let rec = sol.reconstruct();
        let naive = hqc::solve_hqc(
            MicroKind::NaiveAtomistic(&model),
            &mesh,
            &f,
            cfg.p,
            cfg.load_mode,
            cfg.tol,
        )?;
        let un = naive.macro_fn.to_lattice();

        let mut e_mod = 0.0f64;
        for el in 0..mesh.num_elements() {
            let z = sol.macro_fn.slope(el);
            let chi: Vec<f64> = sol.micro[el].iter().map(|w| w / eps).collect();
            let ms = hqc::micro_solve(
                &MicroKind::Atomistic(&model),
                &sol.windows[el],
                z,
                Some(&chi),
                cfg.tol,
            )?;
            e_mod = e_mod.max((ms.modulus - exact_modulus.modulus(z)?).abs());
        }

        table.push(vec![
            mesh.h_max(),
            uh.sub(&u)?.norm(NormKind::Lq(2.0))?,
            uh.sub(&u)?.norm(NormKind::H1)?,
            rec.sub(&u)?.norm(NormKind::H1)?,
            un.sub(&u)?.norm(NormKind::Lq(2.0))?,
            un.sub(&u)?.norm(NormKind::H1)?,
            un.sub(&av_u)?.norm(NormKind::Lq(2.0))?,
            un.sub(&av_u)?.norm(NormKind::H1)?,
            e_mod,
        ]);
    }
    Ok(table)
}

/// Linear chain convergence sweep.
pub fn run_linear_1d(cfg: &Chain1dConfig) -> Result<Table> {
    run_chain(&quadratic_chain_1d(), cfg)
}

/// Lennard-Jones chain convergence sweep.
pub fn run_nonlinear_1d(cfg: &Chain1dConfig) -> Result<Table> {
    run_chain(&lj_chain(), cfg)
}

/// Configuration of the period study.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PStudyConfig {
    pub chain: WhichChain,
    pub n: usize,
    pub mesh: Vec<usize>,
    /// Fast periods to sweep; each gets a freshly drawn random material.
    pub ps: Vec<usize>,
    pub seed: u64,
    pub tol: f64,
}

impl Default for PStudyConfig {
    fn default() -> Self {
        Self::linear()
    }
}

impl PStudyConfig {
    pub fn linear() -> Self {
        Self {
            chain: WhichChain::Linear,
            n: 1 << 14,
            mesh: default_mesh(),
            ps: vec![2, 4, 8, 16],
            seed: 2016,
            tol: 1e-10,
        }
    }

    pub fn nonlinear() -> Self {
        Self { chain: WhichChain::Nonlinear, n: 1 << 12, ..Self::linear() }
    }
}

/// Random two-phase material of fast period `p` and range 3: harmonic
/// stiffnesses drawn from `[1, 2]`, Lennard-Jones lengths from `[1, 11/10]`,
/// independently per residue and bond range.
pub fn random_chain(
    chain: WhichChain,
    p: usize,
    rng: &mut impl Rng,
) -> Result<BondTable<f64>> {
    let range = 3;
    let mut bonds: Vec<Arc<dyn PairPotential<f64>>> = Vec::with_capacity(p * range);
    for _j in 0..p {
        for r in 1..=range {
            match chain {
                WhichChain::Linear => {
                    let k: f64 = rng.gen_range(1.0..=2.0);
                    bonds.push(Arc::new(Quadratic {
                        stiffness: k * 3f64.powi(1 - r as i32),
                        rest_length: r as f64,
                    }));
                }
                WhichChain::Nonlinear => {
                    let l: f64 = rng.gen_range(1.0..=1.1);
                    bonds.push(Arc::new(LennardJones { length: l }));
                }
            }
        }
    }
    BondTable::new(p, range, bonds)
}

/// Period study: for each `p`, draw a random material, sweep the meshes and
/// record the reconstructed `H^1` error. Columns `p`, `h`, `err_rec_h1`.
pub fn run_p_study(cfg: &PStudyConfig) -> Result<Table> {
    let grid = PeriodicGrid1D::unit_domain(cfg.n)?;
    let amplitude = match cfg.chain {
        WhichChain::Linear => 1.0,
        WhichChain::Nonlinear => 50.0,
    };
    let f = sine_load(grid, amplitude);
    let mut table = Table::new(&["p", "h", "err_rec_h1"]);
    for &p in &cfg.ps {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(p as u64));
        let bonds = random_chain(cfg.chain, p, &mut rng)?;
        let model = AtomisticModel::new(grid, bonds, f.clone())?;
        let (u, _) = model.solve_full(None, cfg.tol, 50)?;
        for &k in &cfg.mesh {
            let mesh = MacroMesh::uniform(grid, k)?;
            let sol = hqc::solve_hqc(
                MicroKind::Atomistic(&model),
                &mesh,
                &f,
                p,
                LoadMode::Exact,
                cfg.tol,
            )?;
            let err = sol.reconstruct().sub(&u)?.norm(NormKind::H1)?;
            table.push(vec![p as f64, mesh.h_max(), err]);
        }
    }
    Ok(table)
}

/// Per-period constants `C_8(p) = max_H |u^{H,c} - u|_{H^1} / H` of a
/// period-study table, and their spread `max / min`.
pub fn p_study_spread(table: &Table) -> Result<(Vec<(usize, f64)>, f64)> {
    let ps = table.column("p")?;
    let hs = table.column("h")?;
    let errs = table.column("err_rec_h1")?;
    let mut c8: Vec<(usize, f64)> = Vec::new();
    for ((&p, &h), &e) in ps.iter().zip(&hs).zip(&errs) {
        let p = p as usize;
        let v = e / h;
        match c8.iter_mut().find(|(q, _)| *q == p) {
            Some((_, c)) => *c = c.max(v),
            None => c8.push((p, v)),
        }
    }
    let max = c8.iter().map(|&(_, c)| c).fold(f64::NEG_INFINITY, f64::max);
    let min = c8.iter().map(|&(_, c)| c).fold(f64::INFINITY, f64::min);
    Ok((c8, max / min))
}
