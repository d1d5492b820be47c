//! Property-based checks of the discrete inequalities and of the
//! derivative consistency of the models.
//!
//! Each suite draws at least 100 random instances. Inequalities are
//! asserted with a small relative slack for rounding.

use proptest::prelude::*;

use hqc::cell;
use hqc::grid::{LatticeFn1D, NormKind, PeriodicGrid1D, TwoScaleFn};
use hqc::hqc::{interpolate_nodal, MacroMesh};
use hqc::model::{AtomisticModel, BondTable};

type Grid = PeriodicGrid1D<f64>;
type Fn1 = LatticeFn1D<f64>;

fn unit_grid(n: usize) -> Grid {
    Grid::unit_domain(n).unwrap()
}

fn zero_mean(grid: Grid, vals: &[f64]) -> Fn1 {
    Fn1::from_values(grid, vals.to_vec()).unwrap().project_zero_mean().into_fn()
}

const SLACK: f64 = 1e-9;

/// `bound * (1 + SLACK) + tiny`, the tolerance for asserting `value <= bound`.
fn le(value: f64, bound: f64) -> bool {
    value <= bound * (1.0 + SLACK) + 1e-14
}

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    /// Zero-sum sequences: `sum |g|^2 <= (L^2/6) sum_{i<L} |g_{i+1} - g_i|^2`.
    #[test]
    fn poincare_zero_sum((l, vals) in (2usize..40).prop_flat_map(|l| (Just(l), values(l)))) {
        let mean = vals.iter().sum::<f64>() / l as f64;
        let g: Vec<f64> = vals.iter().map(|v| v - mean).collect();
        let lhs: f64 = g.iter().map(|v| v * v).sum();
        let rhs: f64 = (0..l - 1).map(|i| (g[i + 1] - g[i]).powi(2)).sum();
        prop_assert!(le(lhs, (l * l) as f64 / 6.0 * rhs));
    }

    /// Periodic zero-mean sequences: representation
    /// `g_i = sum_k ((L + 1 - 2k) / (2L)) (g_{i-k+1} - g_{i-k})` and the
    /// sharper Poincare constant `L^2 / 12`.
    #[test]
    fn representation_and_periodic_poincare(
        (l, vals) in (2usize..40).prop_flat_map(|l| (Just(l), values(l)))
    ) {
        let mean = vals.iter().sum::<f64>() / l as f64;
        let g: Vec<f64> = vals.iter().map(|v| v - mean).collect();
        let at = |i: i64| g[(i - 1).rem_euclid(l as i64) as usize];
        for i in 1..=l as i64 {
            let mut rhs = 0.0;
            for k in 1..=l as i64 {
                rhs += (l as f64 + 1.0 - 2.0 * k as f64) / (2.0 * l as f64)
                    * (at(i - k + 1) - at(i - k));
            }
            prop_assert!((rhs - at(i)).abs() < 1e-10);
        }
        let lhs: f64 = g.iter().map(|v| v * v).sum();
        let rhs: f64 = (1..=l as i64).map(|i| (at(i + 1) - at(i)).powi(2)).sum();
        prop_assert!(le(lhs, (l * l) as f64 / 12.0 * rhs));
    }

    /// On the unit domain: `||u||_L2 <= |u|_H1 / (2 sqrt(3))` for zero-mean
    /// `u`, and the dual bound `|u|_{H^-1} <= ||u||_L2 / (2 sqrt(3))`.
    #[test]
    fn poincare_and_dual_norm(
        (n, vals) in (2usize..64).prop_flat_map(|n| (Just(n), values(n)))
    ) {
        let u = zero_mean(unit_grid(n), &vals);
        let l2 = u.norm(NormKind::Lq(2.0)).unwrap();
        let h1 = u.norm(NormKind::H1).unwrap();
        let hm1 = u.norm(NormKind::Hm1).unwrap();
        let c = 1.0 / (2.0 * 3.0f64.sqrt());
        prop_assert!(le(l2, c * h1));
        prop_assert!(le(hm1, c * l2));
    }

    /// Inverse inequality `eps |u|_{W^{1,q}} <= 2 ||u||_{Lq}` for
    /// `q = 1, 2, inf`.
    #[test]
    fn inverse_poincare(
        (n, vals) in (2usize..64).prop_flat_map(|n| (Just(n), values(n)))
    ) {
        let grid = unit_grid(n);
        let u = Fn1::from_values(grid, vals).unwrap();
        let eps = grid.delta();
        for q in [1.0, 2.0, f64::INFINITY] {
            let (w1q, lq) = if q.is_finite() {
                (u.norm(NormKind::W1q(q)).unwrap(), u.norm(NormKind::Lq(q)).unwrap())
            } else {
                (u.norm(NormKind::W1q(f64::INFINITY)).unwrap(), u.norm(NormKind::Linf).unwrap())
            };
            prop_assert!(le(eps * w1q, 2.0 * lq));
        }
    }

    /// Summation by parts: `<u, D_r v> = -<T^{-r} D_r u, v>`.
    #[test]
    fn adjointness(
        (n, us, vs, r) in (4usize..48)
            .prop_flat_map(|n| (Just(n), values(n), values(n), 1i64..4))
    ) {
        let grid = unit_grid(n);
        let u = Fn1::from_values(grid, us).unwrap();
        let v = Fn1::from_values(grid, vs).unwrap();
        let lhs = u.inner(&v.diff(r).unwrap()).unwrap();
        let rhs = -u.diff(r).unwrap().translate(-r).inner(&v).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
    }

    /// Cell-problem bounds: corrector sup, homogenized-coefficient slope,
    /// and corrector-derivative sup for smooth two-scale coefficients.
    #[test]
    fn cell_problem_bounds(
        (n, p, a, b, phase) in (2usize..8, 2usize..6, 0.1..0.9f64, 0.1..0.9f64, 0.0..6.28f64)
    ) {
        let n = 4 * n; // slow resolution
        let psi = TwoScaleFn::from_fn(n, p, |i, j| {
            let x = i as f64 / n as f64;
            let y = j as f64 / p as f64;
            2.0 + a * (2.0 * std::f64::consts::PI * x + phase).sin()
                + b * (2.0 * std::f64::consts::PI * y).cos()
        });
        let eps = 1.0 / n as f64;
        let bounds = cell::model_bounds(&psi, eps).unwrap();
        prop_assert!(le(bounds.chi_sup.value, bounds.chi_sup.bound));
        prop_assert!(le(bounds.psi0_slope.value, bounds.psi0_slope.bound));
        prop_assert!(le(bounds.dx_chi_sup.value, bounds.dx_chi_sup.bound));
    }

    /// Average of the two-scale corrector solution:
    /// `|<u^c> - <u^0>| <= eps^2 (p/2) ||D(chi Du^0)||_L1`.
    #[test]
    fn corrector_average_bound(
        (m, p, amp, b) in (3usize..8, 2usize..5, 0.2..1.0f64, 0.1..0.8f64)
    ) {
        let p = 2 * (p / 2).max(1); // even fast period
        let n = 16 * m * p;
        let grid = unit_grid(n);
        let psi = TwoScaleFn::from_fn(n, p, |_i, j| {
            2.0 + b * (2.0 * std::f64::consts::PI * j as f64 / p as f64).cos()
        });
        let chi = cell::chi_table(&psi).unwrap();
        let u0 = zero_mean(
            grid,
            &(1..=n)
                .map(|i| amp * (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin())
                .collect::<Vec<_>>(),
        );
        let uc = cell::corrector(&u0, &chi).unwrap();
        let lhs = uc.average().abs();
        let du0 = u0.diff(1).unwrap();
        let g = Fn1::from_fn(grid, |i| chi.value(i as i64, i as i64) * du0.value(i as i64));
        let eps = grid.delta();
        let rhs = eps * eps * (p as f64 / 2.0)
            * g.diff(1).unwrap().norm(NormKind::Lq(1.0)).unwrap();
        prop_assert!(le(lhs, rhs));
    }

    /// Nodal interpolation error: `|v - I_H v|_H1 <= (H / (2 sqrt 3)) |v|_H2`.
    #[test]
    fn interpolation_error_bound(
        (k, vals) in (1usize..6, values(128))
    ) {
        let n = 128;
        let grid = unit_grid(n);
        let v = zero_mean(grid, &vals);
        let mesh = MacroMesh::uniform(grid, 1 << k).unwrap();
        let ih = interpolate_nodal(&v, &mesh).unwrap().to_lattice();
        let err = v.sub(&ih).unwrap().norm(NormKind::H1).unwrap();
        let h = mesh.h_max();
        let h2 = v.norm(NormKind::H2).unwrap();
        prop_assert!(le(err, h / (2.0 * 3.0f64.sqrt()) * h2));
    }

    /// The residual is the (scaled) gradient of the energy and the tangent
    /// is the Jacobian of the residual, on random displacements of the
    /// Lennard-Jones chain.
    #[test]
    fn energy_derivative_consistency(
        (scale, vals) in (0.001..0.02f64, values(8))
    ) {
        let n = 8;
        let grid = unit_grid(n);
        let bonds = BondTable::lennard_jones_chain(2, &[1.0, 1.1]).unwrap();
        let f = Fn1::zeros(grid);
        let model = AtomisticModel::new(grid, bonds, f).unwrap();
        let u = Fn1::from_values(grid, vals.iter().map(|v| scale * v).collect()).unwrap();
        let g = model.residual(&u).unwrap();
        let a = model.tangent(&u).unwrap();
        let h = 1e-7;
        for j in 1..=n as i64 {
            let mut ej = vec![0.0; n];
            ej[j as usize - 1] = 1.0;
            let ej = Fn1::from_values(grid, ej).unwrap();
            let ep = model.energy(&u.axpy(h, &ej).unwrap()).unwrap();
            let em = model.energy(&u.axpy(-h, &ej).unwrap()).unwrap();
            let fd = (ep - em) / (2.0 * h) * n as f64;
            prop_assert!((fd - g.value(j)).abs() < 2e-4 * (1.0 + g.value(j).abs()),
                "site {j}: fd {fd} vs residual {}", g.value(j));
            // One column of the tangent by finite differences of g.
            let gp = model.residual(&u.axpy(h, &ej).unwrap()).unwrap();
            let gm = model.residual(&u.axpy(-h, &ej).unwrap()).unwrap();
            let col = a.apply(ej.values());
            for i in 0..n {
                let fd2 = (gp.values()[i] - gm.values()[i]) / (2.0 * h);
                prop_assert!((fd2 - col[i]).abs() < 5e-2 * (1.0 + col[i].abs()),
                    "entry ({i}, {j}): fd {fd2} vs tangent {}", col[i]);
            }
        }
    }
}
