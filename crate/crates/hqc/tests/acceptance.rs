//! End-to-end acceptance checks: one test per headline claim of the
//! toolkit, each printing a single pass/fail line with its runtime.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hqc::cell;
use hqc::experiments::{
    p_study_spread, plateau_level, run_2d, run_linear_1d, run_nonlinear_1d, run_p_study,
    Chain1dConfig, PStudyConfig, TwoDConfig,
};
use hqc::grid::{LatticeFn1D, NormKind, PeriodicGrid1D, TwoScaleFn};
use hqc::hqc::{
    interpolate_nodal, qc_on_psi0, solve_hqc, LoadMode, MacroMesh, MicroKind, SamplingDomain,
};
use hqc::lattice2d::{homogenize_2d, solve_cell_2d, standard_offsets, BondField2D};
use hqc::model::{AtomisticModel, BondTable};

fn report(criterion: &str, started: Instant, budget: Duration) {
    let elapsed = started.elapsed();
    println!("criterion {criterion}: PASS in {elapsed:.2?}");
    assert!(elapsed <= budget, "{criterion}: {elapsed:.2?} exceeds budget {budget:?}");
}

/// 1D analytic homogenization: psi = [1, 2] has psi0 = 4/3 by both the
/// harmonic-mean and the corrector formula, and chi = [-1/6, 1/6].
#[test]
fn criterion_01_analytic_homogenization_1d() {
    let t0 = Instant::now();
    let psi = [1.0_f64, 2.0];
    let chi = cell::solve_cell_nn(&psi).unwrap();
    assert!((chi[0] + 1.0 / 6.0).abs() <= 1e-12);
    assert!((chi[1] - 1.0 / 6.0).abs() <= 1e-12);
    let hm = cell::harmonic_mean(&psi).unwrap();
    assert!((hm - 4.0 / 3.0).abs() <= 1e-12, "harmonic mean {hm}");
    let via_corrector = cell::homogenize_nn(&psi).unwrap();
    assert!((via_corrector - 4.0 / 3.0).abs() <= 1e-12, "corrector formula {via_corrector}");
    report("1 (1D analytic homogenization)", t0, Duration::from_millis(1));
}

/// 2D analytic homogenization: the checkerboard with k1 = 1, k2 = 2,
/// k3 = 1/4 has psi0_11 = psi0_22 = 23/3, psi0_12 = psi0_21 = -1/3 and a
/// corrector of amplitude -1/12 with the (-1)^{j1+j2} sign pattern.
#[test]
fn criterion_02_analytic_homogenization_2d() {
    let t0 = Instant::now();
    let bonds = BondField2D::<f64>::from_fn(2, 2, standard_offsets(), |o, j1, j2| match o {
        0 | 2 => {
            if (j1 + j2) % 2 == 0 {
                1.0
            } else {
                2.0
            }
        }
        _ => 0.25,
    })
    .unwrap();
    let [z1, z2] = solve_cell_2d(&bonds).unwrap();
    for j2 in 1usize..=2 {
        for j1 in 1usize..=2 {
            let sign = if (j1 + j2) % 2 == 0 { 1.0 } else { -1.0 };
            let want = -sign / 12.0;
            let idx = (j2 - 1) * 2 + (j1 - 1);
            assert!((z1[idx] - want).abs() <= 1e-12, "zeta1[{j1},{j2}] = {}", z1[idx]);
            assert!((z2[idx] - want).abs() <= 1e-12, "zeta2[{j1},{j2}] = {}", z2[idx]);
        }
    }
    let (t, _) = homogenize_2d(&bonds).unwrap();
    assert!((t.psi0[0][0] - 23.0 / 3.0).abs() <= 1e-12, "{}", t.psi0[0][0]);
    assert!((t.psi0[1][1] - 23.0 / 3.0).abs() <= 1e-12);
    assert!((t.psi0[0][1] + 1.0 / 3.0).abs() <= 1e-12, "{}", t.psi0[0][1]);
    assert!((t.psi0[1][0] + 1.0 / 3.0).abs() <= 1e-12);
    report("2 (2D analytic homogenization)", t0, Duration::from_millis(10));
}

/// Collocated HQC equals the P1 solve of the elementwise collocated
/// homogenized coefficient, entrywise to 1e-12, on 20 random instances.
#[test]
fn criterion_03_collocated_hqc_equivalence() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..20 {
        let n = *[32usize, 64, 128].iter().nth(rng.gen_range(0..3)).unwrap();
        let k = *[4usize, 8, 16].iter().nth(rng.gen_range(0..3)).unwrap();
        let grid = PeriodicGrid1D::<f64>::unit_domain(n).unwrap();
        let vals: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(0.5..3.0)).collect();
        let psi = TwoScaleFn::from_values(n, 2, vals).unwrap();
        let famp: f64 = rng.gen_range(0.5..2.0);
        let f = LatticeFn1D::from_fn(grid, |i| {
            famp * (1.0 + 2.0 * std::f64::consts::PI * i as f64 / n as f64).sin()
        });
        let mesh = MacroMesh::uniform(grid, k).unwrap();
        let sol =
            solve_hqc(MicroKind::CollocatedNn(&psi), &mesh, &f, 2, LoadMode::Exact, 1e-13)
                .unwrap();
        let mut coll_vals = vec![0.0; n];
        for el in 0..mesh.num_elements() {
            let w = SamplingDomain::centered(&mesh, el, 2).unwrap();
            let psi_loc: Vec<f64> =
                (0..2).map(|j| psi.value(w.collocation as i64, (w.start + j) as i64)).collect();
            let psi0 = cell::harmonic_mean(&psi_loc).unwrap();
            let i0 = mesh.nodes()[el];
            for off in 0..mesh.element_sites(el) {
                coll_vals[i0 - 1 + off] = psi0;
            }
        }
        let coll = LatticeFn1D::from_values(grid, coll_vals).unwrap();
        let qc = qc_on_psi0(&coll, &f, &mesh).unwrap();
        for (a, b) in sol.macro_fn.nodal().iter().zip(qc.nodal()) {
            assert!((a - b).abs() <= 1e-12, "case {case}: {a} vs {b}");
        }
    }
    report("3 (collocated HQC = QC on psi0)", t0, Duration::from_secs(1));
}

/// Linear chain study at N = 2^14: second-order L2 convergence of u^H,
/// first-order H1 convergence of the reconstruction, a non-convergent H1
/// error of u^H alone, and exact element moduli.
#[test]
fn criterion_04_linear_chain_convergence() {
    let t0 = Instant::now();
    let table = run_linear_1d(&Chain1dConfig::linear()).unwrap();
    let s_l2 = table.slope("err_uh_l2").unwrap();
    assert!((1.85..=2.15).contains(&s_l2), "L2 slope {s_l2}");
    let s_rec = table.slope("err_rec_h1").unwrap();
    assert!((0.9..=1.1).contains(&s_rec), "reconstructed H1 slope {s_rec}");
    let h1 = table.column("err_uh_h1").unwrap();
    let ratio = h1.last().unwrap() / h1[0];
    assert!(ratio >= 0.5, "u^H H1 error converged unexpectedly: ratio {ratio}");
    let e_mod = table.column("e_mod").unwrap();
    assert!(e_mod.iter().all(|&e| e <= 1e-12), "e_mod {e_mod:?}");
    report("4 (linear 1D convergence, N = 2^14)", t0, Duration::from_secs(120));
}

/// The L2 plateau level scales like O(eps) = O(1/N): a factor in [3, 5] per
/// 4x increase of N.
#[test]
fn criterion_05_plateau_scaling() {
    let t0 = Instant::now();
    let mesh: Vec<usize> = (1..=9).map(|j| 1usize << j).collect();
    let mut levels = Vec::new();
    for exp in [10u32, 12, 14] {
        let cfg = Chain1dConfig { n: 1 << exp, mesh: mesh.clone(), ..Chain1dConfig::linear() };
        let table = run_linear_1d(&cfg).unwrap();
        levels.push(plateau_level(&table.column("err_uh_l2").unwrap()));
    }
    for w in levels.windows(2) {
        let factor = w[0] / w[1];
        assert!((3.0..=5.0).contains(&factor), "plateau factor {factor}, levels {levels:?}");
    }
    report("5 (O(eps) plateau scaling)", t0, Duration::from_secs(180));
}

/// The naive quasicontinuum saturates: at the finest mesh all four of its
/// error combinations stay above 10x the HQC error in the same norm.
#[test]
fn criterion_06_naive_qc_failure() {
    let t0 = Instant::now();
    let mesh: Vec<usize> = (1..=9).map(|j| 1usize << j).collect();
    let cfg = Chain1dConfig { mesh, ..Chain1dConfig::linear() };
    let table = run_linear_1d(&cfg).unwrap();
    let last = |name: &str| *table.column(name).unwrap().last().unwrap();
    let hqc_l2 = last("err_uh_l2");
    let hqc_h1 = last("err_rec_h1");
    for (naive, hqc_err) in [
        ("err_naive_l2", hqc_l2),
        ("err_naive_av_l2", hqc_l2),
        ("err_naive_h1", hqc_h1),
        ("err_naive_av_h1", hqc_h1),
    ] {
        let e = last(naive);
        assert!(e > 10.0 * hqc_err, "{naive} = {e} not above 10 x {hqc_err}");
    }
    report("6 (naive QC saturation)", t0, Duration::from_secs(60));
}

/// Lennard-Jones chain at N = 2^12: the same convergence orders as the
/// linear study.
#[test]
fn criterion_07_nonlinear_chain_convergence() {
    let t0 = Instant::now();
    let table = run_nonlinear_1d(&Chain1dConfig::nonlinear()).unwrap();
    let s_l2 = table.slope("err_uh_l2").unwrap();
    assert!((1.85..=2.15).contains(&s_l2), "L2 slope {s_l2}");
    let s_rec = table.slope("err_rec_h1").unwrap();
    assert!((0.9..=1.1).contains(&s_rec), "reconstructed H1 slope {s_rec}");
    report("7 (Lennard-Jones 1D convergence, N = 2^12)", t0, Duration::from_secs(300));
}

/// Period study: the constant C8 = max_H |u^{H,c} - u|_{H1} / H essentially
/// does not depend on the microstructure period p (spread <= 1.5).
#[test]
fn criterion_08_period_study() {
    let t0 = Instant::now();
    for cfg in [PStudyConfig::linear(), PStudyConfig::nonlinear()] {
        let table = run_p_study(&cfg).unwrap();
        let (c8, spread) = p_study_spread(&table).unwrap();
        assert!(spread <= 1.5, "{:?}: spread {spread}, C8 {c8:?}", cfg.chain);
    }
    report("8 (period study, C8 spread)", t0, Duration::from_secs(600));
}

/// 2D convergence on both reference materials at N = (2^8, 2^8).
#[test]
fn criterion_09_two_dimensional_convergence() {
    let t0 = Instant::now();
    for case in [1u8, 2] {
        let table = run_2d(case, &TwoDConfig::default()).unwrap();
        let s_l2 = table.slope("err_uh_l2").unwrap();
        assert!((1.8..=2.2).contains(&s_l2), "case {case}: L2 slope {s_l2}");
        let s_rec = table.slope("err_rec_h1").unwrap();
        assert!((0.85..=1.15).contains(&s_rec), "case {case}: H1 slope {s_rec}");
    }
    report("9 (2D convergence, both cases)", t0, Duration::from_secs(900));
}

/// The inequality and derivative-consistency suites, 100+ random instances
/// each (the dedicated property-test target draws even more).
#[test]
fn criterion_10_property_suites() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let le = |value: f64, bound: f64| value <= bound * (1.0 + 1e-9) + 1e-14;

    for _ in 0..100 {
        // Zero-sum and periodic Poincare inequalities for random sequences.
        let l = rng.gen_range(2usize..40);
        let raw: Vec<f64> = (0..l).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mean = raw.iter().sum::<f64>() / l as f64;
        let g: Vec<f64> = raw.iter().map(|v| v - mean).collect();
        let sum_sq: f64 = g.iter().map(|v| v * v).sum();
        let inc: f64 = (0..l - 1).map(|i| (g[i + 1] - g[i]).powi(2)).sum();
        assert!(le(sum_sq, (l * l) as f64 / 6.0 * inc));
        let inc_per: f64 = (0..l).map(|i| (g[(i + 1) % l] - g[i]).powi(2)).sum();
        assert!(le(sum_sq, (l * l) as f64 / 12.0 * inc_per));

        // Lattice-function Poincare, dual norm, and inverse inequalities.
        let n = rng.gen_range(2usize..64);
        let grid = PeriodicGrid1D::<f64>::unit_domain(n).unwrap();
        let vals: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u = LatticeFn1D::from_values(grid, vals).unwrap().project_zero_mean().into_fn();
        let c = 1.0 / (2.0 * 3.0f64.sqrt());
        let l2 = u.norm(NormKind::Lq(2.0)).unwrap();
        assert!(le(l2, c * u.norm(NormKind::H1).unwrap()));
        assert!(le(u.norm(NormKind::Hm1).unwrap(), c * l2));
        assert!(le(
            grid.delta() * u.norm(NormKind::W1q(2.0)).unwrap(),
            2.0 * u.norm(NormKind::Lq(2.0)).unwrap()
        ));

        // Summation by parts.
        let r = rng.gen_range(1i64..4);
        let vs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = LatticeFn1D::from_values(grid, vs).unwrap();
        let lhs = u.inner(&v.diff(r).unwrap()).unwrap();
        let rhs = -u.diff(r).unwrap().translate(-r).inner(&v).unwrap();
        assert!((lhs - rhs).abs() < 1e-10);

        // A-priori bounds on the two-scale cell solution.
        let ns = 4 * rng.gen_range(2usize..8);
        let p = rng.gen_range(2usize..6);
        let (a, b) = (rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9));
        let psi = TwoScaleFn::from_fn(ns, p, |i, j| {
            2.0 + a * (2.0 * std::f64::consts::PI * i as f64 / ns as f64).sin()
                + b * (2.0 * std::f64::consts::PI * j as f64 / p as f64).cos()
        });
        let bounds = cell::model_bounds(&psi, 1.0 / ns as f64).unwrap();
        assert!(le(bounds.chi_sup.value, bounds.chi_sup.bound));
        assert!(le(bounds.psi0_slope.value, bounds.psi0_slope.bound));
        assert!(le(bounds.dx_chi_sup.value, bounds.dx_chi_sup.bound));

        // Interpolation error bound.
        let mesh = MacroMesh::uniform(grid_128(), 1 << rng.gen_range(1usize..6)).unwrap();
        let vals: Vec<f64> = (0..128).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = LatticeFn1D::from_values(grid_128(), vals)
            .unwrap()
            .project_zero_mean()
            .into_fn();
        let ih = interpolate_nodal(&v, &mesh).unwrap().to_lattice();
        let err = v.sub(&ih).unwrap().norm(NormKind::H1).unwrap();
        assert!(le(err, mesh.h_max() * c * v.norm(NormKind::H2).unwrap()));
    }

    // Corrector-average bound.
    for _ in 0..100 {
        let p = 2 * rng.gen_range(1usize..3);
        let n = 16 * rng.gen_range(3usize..8) * p;
        let grid = PeriodicGrid1D::<f64>::unit_domain(n).unwrap();
        let b: f64 = rng.gen_range(0.1..0.8);
        let amp: f64 = rng.gen_range(0.2..1.0);
        let psi = TwoScaleFn::from_fn(n, p, |_i, j| {
            2.0 + b * (2.0 * std::f64::consts::PI * j as f64 / p as f64).cos()
        });
        let chi = cell::chi_table(&psi).unwrap();
        let u0 = LatticeFn1D::from_fn(grid, |i| {
            amp * (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin()
        })
        .project_zero_mean()
        .into_fn();
        let uc = cell::corrector(&u0, &chi).unwrap();
        let du0 = u0.diff(1).unwrap();
        let g = LatticeFn1D::from_fn(grid, |i| chi.value(i as i64, i as i64) * du0.value(i as i64));
        let eps = grid.delta();
        let bound = eps * eps * (p as f64 / 2.0)
            * g.diff(1).unwrap().norm(NormKind::Lq(1.0)).unwrap();
        assert!(le(uc.average().abs(), bound));
    }

    // Finite-difference consistency of the residual and the tangent.
    for _ in 0..100 {
        let n = 8;
        let grid = PeriodicGrid1D::<f64>::unit_domain(n).unwrap();
        let bonds = BondTable::lennard_jones_chain(2, &[1.0, 1.1]).unwrap();
        let model = AtomisticModel::new(grid, bonds, LatticeFn1D::zeros(grid)).unwrap();
        let scale: f64 = rng.gen_range(0.001..0.02);
        let vals: Vec<f64> = (0..n).map(|_| scale * rng.gen_range(-1.0f64..1.0)).collect();
        let u = LatticeFn1D::from_values(grid, vals).unwrap();
        let g = model.residual(&u).unwrap();
        let a = model.tangent(&u).unwrap();
        let h = 1e-7;
        for j in 1..=n as i64 {
            let mut e = vec![0.0; n];
            e[j as usize - 1] = 1.0;
            let ej = LatticeFn1D::from_values(grid, e).unwrap();
            let ep = model.energy(&u.axpy(h, &ej).unwrap()).unwrap();
            let em = model.energy(&u.axpy(-h, &ej).unwrap()).unwrap();
            let fd = (ep - em) / (2.0 * h) * n as f64;
            assert!((fd - g.value(j)).abs() < 2e-4 * (1.0 + g.value(j).abs()));
            let gp = model.residual(&u.axpy(h, &ej).unwrap()).unwrap();
            let gm = model.residual(&u.axpy(-h, &ej).unwrap()).unwrap();
            let col = a.apply(ej.values());
            for i in 0..n {
                let fd2 = (gp.values()[i] - gm.values()[i]) / (2.0 * h);
                assert!((fd2 - col[i]).abs() < 5e-2 * (1.0 + col[i].abs()));
            }
        }
    }
    report("10 (property suites)", t0, Duration::from_secs(60));
}

fn grid_128() -> PeriodicGrid1D<f64> {
    PeriodicGrid1D::unit_domain(128).unwrap()
}
