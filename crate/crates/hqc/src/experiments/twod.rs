//! 2D lattice experiments: convergence of the HQC method on the two
//! reference materials.

use serde::{Deserialize, Serialize};

use super::Table;
use crate::error::{HqcError, Result};
use crate::hqc::LoadMode;
use crate::lattice2d::{
    self, standard_offsets, BondField2D, Grid2D, TriMesh2D, VectorFn2D,
};

/// Configuration of a 2D convergence sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoDConfig {
    /// Atoms per axis (`N_1 = N_2 = n`).
    pub n: usize,
    /// Numbers of macroscopic nodes per axis to sweep (`H = 1 / t`).
    pub mesh: Vec<usize>,
    /// Sampling rectangle size per axis.
    pub p: usize,
    /// Relative tolerance of the conjugate-gradient solves.
    pub tol: f64,
    pub load_mode: LoadMode,
}

impl Default for TwoDConfig {
    fn default() -> Self {
        Self {
            n: 1 << 8,
            mesh: vec![4, 8, 16, 32, 64],
            p: 2,
            tol: 1e-10,
            load_mode: LoadMode::Exact,
        }
    }
}

/// Bond coefficients of the two reference materials, both with fast period
/// `(2, 2)`.
///
/// * Case 1: checkerboard nearest neighbours (`k_1 = 1` where `i_1 + i_2`
///   is even, `k_2 = 2` otherwise), constant diagonals `k_3 = 1/4`.
/// * Case 2: all four offsets vary with the parities of `(i_1, i_2)`.
pub fn case_bonds(case: u8) -> Result<BondField2D<f64>> {
    match case {
        1 => BondField2D::from_fn(2, 2, standard_offsets(), |o, j1, j2| match o {
            0 | 2 => {
                if (j1 + j2) % 2 == 0 {
                    1.0
                } else {
                    2.0
                }
            }
            _ => 0.25,
        }),
        2 => BondField2D::from_fn(2, 2, standard_offsets(), |o, j1, j2| {
            // Coefficient by offset and parity (even-even, even-odd,
            // odd-even, odd-odd) of the bond's starting site.
            const TABLE: [[f64; 4]; 4] = [
                [1.3, 1.6, 1.8, 1.2], // (1, 0)
                [0.3, 0.8, 0.6, 0.4], // (1, 1)
                [1.5, 1.7, 1.5, 2.0], // (0, 1)
                [0.4, 0.9, 0.4, 0.1], // (-1, 1)
            ];
            let par = 2 * (j1 % 2) + (j2 % 2); // 0: even-even, ..., 3: odd-odd
            TABLE[o][par]
        }),
        _ => Err(HqcError::InvalidArgument(format!("unknown 2D case {case}"))),
    }
}

/// The reference 2D load,
/// `f_i = 10 e^{-cos^2(pi i_1 / N_1) - cos^2(pi i_2 / N_2)}
/// (sin(2 pi i_1 / N_1), sin(2 pi i_2 / N_2))`, mean-subtracted.
pub fn load_2d(grid: Grid2D<f64>) -> VectorFn2D<f64> {
    let (n1, n2) = (grid.n1() as f64, grid.n2() as f64);
    let pi = std::f64::consts::PI;
    VectorFn2D::from_fn(grid, |i1, i2| {
        let a = pi * i1 as f64 / n1;
        let b = pi * i2 as f64 / n2;
        let amp = 10.0 * (-a.cos().powi(2) - b.cos().powi(2)).exp();
        [amp * (2.0 * a).sin(), amp * (2.0 * b).sin()]
    })
    .project_zero_mean()
}

/// Run one 2D sweep. Columns `h`, `err_uh_l2`, `err_uh_h1`, `err_rec_h1`.
pub fn run_2d(case: u8, cfg: &TwoDConfig) -> Result<Table> {
    let grid = Grid2D::unit_domain(cfg.n, cfg.n)?;
    let bonds = case_bonds(case)?;
    let f = load_2d(grid);
    let (u, _) = lattice2d::solve_full_2d(grid, &bonds, &f, cfg.tol * 1e-2)?;
    let mut table = Table::new(&["h", "err_uh_l2", "err_uh_h1", "err_rec_h1"]);
    for &t in &cfg.mesh {
        let mesh = TriMesh2D::uniform(grid, t, t)?;
        let sol =
            lattice2d::solve_hqc_2d(&bonds, &mesh, &f, (cfg.p, cfg.p), cfg.load_mode, cfg.tol)?;
        let uh = sol.to_lattice();
        let rec = sol.reconstruct();
        table.push(vec![
            1.0 / t as f64,
            uh.sub(&u)?.norm_l2(),
            uh.sub(&u)?.norm_h1(),
            rec.sub(&u)?.norm_h1(),
        ]);
    }
    Ok(table)
}

/// Deformed configuration of a 2D displacement, as a table with one row per
/// atom: reference coordinates, displacement, and deformed position
/// (displacements magnified by `scale`).
pub fn deformed_configuration(u: &VectorFn2D<f64>, scale: f64) -> Table {
    let grid = u.grid();
    let d = grid.delta();
    let mut table = Table::new(&["i1", "i2", "x1", "x2", "u1", "u2", "y1", "y2"]);
    for i2 in 1..=grid.n2() {
        for i1 in 1..=grid.n1() {
            let x1 = i1 as f64 * d;
            let x2 = i2 as f64 * d;
            let v = u.value(i1 as i64, i2 as i64);
            table.push(vec![
                i1 as f64,
                i2 as f64,
                x1,
                x2,
                v[0],
                v[1],
                x1 + scale * v[0],
                x2 + scale * v[1],
            ]);
        }
    }
    table
}
