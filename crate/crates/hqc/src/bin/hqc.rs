//! Command-line interface: full solves, cell problems, homogenization, and
//! the convergence experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hqc::cell::{self, HomogenizedFlux};
use hqc::experiments::{
    self, case_bonds, lj_chain, load_2d, p_study_spread, quadratic_chain_1d, run_2d,
    run_linear_1d, run_nonlinear_1d, run_p_study, Chain1dConfig, PStudyConfig, Table,
    TwoDConfig,
};
use hqc::grid::{LatticeFn1D, NormKind, PeriodicGrid1D};
use hqc::hqc::{solve_hqc, LoadMode, MacroMesh, MicroKind};
use hqc::model::{AtomisticModel, BondTable};
use hqc::Result;

#[derive(Parser)]
#[command(
    name = "hqc",
    version,
    about = "Lattice statics and discrete homogenization for periodic atomistic chains and 2D lattices"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChainArg {
    /// Two-phase harmonic chain (range 3).
    Linear,
    /// Two-phase Lennard-Jones chain (range 3).
    Nonlinear,
}

impl ChainArg {
    fn bonds(self) -> BondTable<f64> {
        match self {
            ChainArg::Linear => quadratic_chain_1d(),
            ChainArg::Nonlinear => lj_chain(),
        }
    }

    fn default_amplitude(self) -> f64 {
        match self {
            ChainArg::Linear => 1.0,
            ChainArg::Nonlinear => 50.0,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LoadModeArg {
    Exact,
    Sampled,
}

impl From<LoadModeArg> for LoadMode {
    fn from(v: LoadModeArg) -> Self {
        match v {
            LoadModeArg::Exact => LoadMode::Exact,
            LoadModeArg::Sampled => LoadMode::Sampled,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the full atomistic chain under the reference sine load.
    SolveFull {
        /// Number of atoms.
        #[arg(long, default_value_t = 1 << 10)]
        n: usize,
        #[arg(long, value_enum, default_value_t = ChainArg::Linear)]
        chain: ChainArg,
        /// Load amplitude; defaults to the chain's reference value.
        #[arg(long)]
        amplitude: Option<f64>,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Directory for `solution.csv`; prints a summary either way.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the HQC problem on one or more macroscopic meshes.
    SolveHqc {
        #[arg(long, default_value_t = 1 << 10)]
        n: usize,
        #[arg(long, value_enum, default_value_t = ChainArg::Linear)]
        chain: ChainArg,
        #[arg(long)]
        amplitude: Option<f64>,
        /// Comma-separated numbers of macroscopic elements.
        #[arg(long, value_delimiter = ',', default_value = "32")]
        mesh_list: Vec<usize>,
        /// Sampling window size (atoms per microproblem).
        #[arg(long, default_value_t = 2)]
        p: usize,
        #[arg(long, value_enum, default_value_t = LoadModeArg::Exact)]
        load_mode: LoadModeArg,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Directory for per-mesh `hqc-<k>.csv` nodal solutions.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve a linear nearest-neighbour unit-cell problem.
    Cell {
        /// Comma-separated periodic bond coefficients `psi(Y_j)`.
        #[arg(long, value_delimiter = ',')]
        psi: Vec<f64>,
    },
    /// Homogenized flux and modulus of a chain material at a given strain.
    Homogenize {
        #[arg(long, value_enum, default_value_t = ChainArg::Linear)]
        chain: ChainArg,
        /// Macroscopic strain.
        #[arg(long, default_value_t = 0.0)]
        z: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Run a convergence experiment and write its CSV results.
    Exp {
        #[command(subcommand)]
        which: ExpCmd,
    },
    /// Refit convergence slopes of the CSV tables in a run directory.
    Report {
        /// Directory holding experiment CSV output.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Flags shared by the experiment subcommands; unset flags fall back to the
/// config file (if given) and then to the experiment defaults.
#[derive(Args)]
struct ExpOpts {
    /// TOML configuration file; explicit flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of atoms (per axis in 2D).
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated mesh sizes (elements in 1D, nodes per axis in 2D).
    #[arg(long, value_delimiter = ',')]
    mesh_list: Option<Vec<usize>>,
    /// Sampling window size per axis.
    #[arg(long)]
    p: Option<usize>,
    /// RNG seed (period study only).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_enum)]
    load_mode: Option<LoadModeArg>,
    /// Output directory for the CSV results and the resolved config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ExpCmd {
    /// 1D linear chain convergence sweep.
    Linear1d(ExpOpts),
    /// 1D Lennard-Jones chain convergence sweep.
    Nonlinear1d(ExpOpts),
    /// Period study with random materials.
    Pstudy {
        #[command(flatten)]
        opts: ExpOpts,
        #[arg(long, value_enum, default_value_t = ChainArg::Linear)]
        chain: ChainArg,
        /// Comma-separated fast periods to sweep.
        #[arg(long, value_delimiter = ',')]
        ps: Option<Vec<usize>>,
    },
    /// 2D checkerboard material.
    #[command(name = "case2d-1")]
    Case2d1(ExpOpts),
    /// 2D material with varying coefficients on all four offsets.
    #[command(name = "case2d-2")]
    Case2d2(ExpOpts),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::SolveFull { n, chain, amplitude, tol, out } => {
            let grid = PeriodicGrid1D::unit_domain(n)?;
            let amplitude = amplitude.unwrap_or(chain.default_amplitude());
            let f = experiments::oned::sine_load(grid, amplitude);
            let model = AtomisticModel::new(grid, chain.bonds(), f)?;
            let (u, report) = model.solve_full(None, tol, 50)?;
            println!(
                "solved N = {n} in {} Newton iterations, residual {:.3e}",
                report.iterations, report.residual_norm
            );
            println!(
                "|u|_H1 = {:.6e}, |u|_inf = {:.6e}",
                u.norm(NormKind::H1)?,
                u.norm(NormKind::Linf)?
            );
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                let table = chain_solution_table(&u);
                let path = dir.join("solution.csv");
                table.write_csv(&path)?;
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Cmd::SolveHqc { n, chain, amplitude, mesh_list, p, load_mode, tol, out } => {
            let grid = PeriodicGrid1D::unit_domain(n)?;
            let amplitude = amplitude.unwrap_or(chain.default_amplitude());
            let f = experiments::oned::sine_load(grid, amplitude);
            let model = AtomisticModel::new(grid, chain.bonds(), f.clone())?;
            let (u, _) = model.solve_full(None, tol, 50)?;
            for k in mesh_list {
                let mesh = MacroMesh::uniform(grid, k)?;
                let sol = solve_hqc(
                    MicroKind::Atomistic(&model),
                    &mesh,
                    &f,
                    p,
                    load_mode.into(),
                    tol,
                )?;
                let rec = sol.reconstruct();
                println!(
                    "k = {k:>4}: |u^H - u|_L2 = {:.6e}, |u^Hc - u|_H1 = {:.6e}",
                    sol.macro_fn.to_lattice().sub(&u)?.norm(NormKind::Lq(2.0))?,
                    rec.sub(&u)?.norm(NormKind::H1)?
                );
                if let Some(dir) = &out {
                    std::fs::create_dir_all(dir)?;
                    let mut table = Table::new(&["node_site", "x", "u"]);
                    for (l, &site) in mesh.nodes().iter().enumerate() {
                        table.push(vec![
                            site as f64,
                            grid.x(site as i64),
                            sol.macro_fn.nodal()[l],
                        ]);
                    }
                    let path = dir.join(format!("hqc-{k}.csv"));
                    table.write_csv(&path)?;
                    println!("wrote {}", path.display());
                }
            }
            Ok(())
        }
        Cmd::Cell { psi } => {
            let chi = cell::solve_cell_nn(&psi)?;
            let psi0 = cell::homogenize_nn(&psi)?;
            println!("psi0 = {psi0:.12e}");
            for (j, c) in chi.iter().enumerate() {
                println!("chi[{}] = {c:.12e}", j + 1);
            }
            Ok(())
        }
        Cmd::Homogenize { chain, z, tol } => {
            let h = HomogenizedFlux::new(chain.bonds(), tol);
            println!("flux(z)    = {:.12e}", h.flux(z)?);
            println!("modulus(z) = {:.12e}", h.modulus(z)?);
            let chi = h.corrector(z)?;
            for (j, c) in chi.iter().enumerate() {
                println!("chi[{}] = {c:.12e}", j + 1);
            }
            Ok(())
        }
        Cmd::Exp { which } => run_experiment(which),
        Cmd::Report { out } => report(&out),
    }
}

fn chain_solution_table(u: &LatticeFn1D<f64>) -> Table {
    let grid = u.grid();
    let mut table = Table::new(&["i", "x", "u", "strain"]);
    let strain = u.diff(1).expect("nearest-neighbour difference");
    for i in 1..=grid.n() {
        table.push(vec![
            i as f64,
            grid.x(i as i64),
            u.value(i as i64),
            strain.value(i as i64),
        ]);
    }
    table
}

fn apply_chain_opts(cfg: &mut Chain1dConfig, o: &ExpOpts) {
    if let Some(n) = o.n {
        cfg.n = n;
    }
    if let Some(m) = &o.mesh_list {
        cfg.mesh = m.clone();
    }
    if let Some(p) = o.p {
        cfg.p = p;
    }
    if let Some(t) = o.tol {
        cfg.tol = t;
    }
    if let Some(lm) = o.load_mode {
        cfg.load_mode = lm.into();
    }
}

fn print_chain_table(table: &Table) -> Result<()> {
    print!("{table}");
    for col in ["err_uh_l2", "err_rec_h1"] {
        println!("slope({col}) = {:.3}", table.slope(col)?);
    }
    Ok(())
}

fn run_experiment(which: ExpCmd) -> Result<()> {
    match which {
        ExpCmd::Linear1d(o) => {
            let mut cfg: Chain1dConfig = match &o.config {
                Some(path) => experiments::load_config(path)?,
                None => Chain1dConfig::linear(),
            };
            apply_chain_opts(&mut cfg, &o);
            let table = run_linear_1d(&cfg)?;
            print_chain_table(&table)?;
            if let Some(dir) = o.out {
                experiments::write_run(&dir, &cfg, &[("linear1d", &table)])?;
                println!("wrote {}", dir.display());
            }
            Ok(())
        }
        ExpCmd::Nonlinear1d(o) => {
            let mut cfg: Chain1dConfig = match &o.config {
                Some(path) => experiments::load_config(path)?,
                None => Chain1dConfig::nonlinear(),
            };
            apply_chain_opts(&mut cfg, &o);
            let table = run_nonlinear_1d(&cfg)?;
            print_chain_table(&table)?;
            if let Some(dir) = o.out {
                experiments::write_run(&dir, &cfg, &[("nonlinear1d", &table)])?;
                println!("wrote {}", dir.display());
            }
            Ok(())
        }
        ExpCmd::Pstudy { opts: o, chain, ps } => {
            let mut cfg: PStudyConfig = match &o.config {
                Some(path) => experiments::load_config(path)?,
                None => match chain {
                    ChainArg::Linear => PStudyConfig::linear(),
                    ChainArg::Nonlinear => PStudyConfig::nonlinear(),
                },
            };
            if let Some(n) = o.n {
                cfg.n = n;
            }
            if let Some(m) = &o.mesh_list {
                cfg.mesh = m.clone();
            }
            if let Some(s) = o.seed {
                cfg.seed = s;
            }
            if let Some(t) = o.tol {
                cfg.tol = t;
            }
            if let Some(ps) = ps {
                cfg.ps = ps;
            }
            let table = run_p_study(&cfg)?;
            print!("{table}");
            let (c8, spread) = p_study_spread(&table)?;
            for (p, c) in &c8 {
                println!("C8(p = {p}) = {c:.4}");
            }
            println!("spread max/min = {spread:.4}");
            if let Some(dir) = o.out {
                experiments::write_run(&dir, &cfg, &[("pstudy", &table)])?;
                println!("wrote {}", dir.display());
            }
            Ok(())
        }
        ExpCmd::Case2d1(o) => run_case_2d(1, o),
        ExpCmd::Case2d2(o) => run_case_2d(2, o),
    }
}

fn run_case_2d(case: u8, o: ExpOpts) -> Result<()> {
    let mut cfg: TwoDConfig = match &o.config {
        Some(path) => experiments::load_config(path)?,
        None => TwoDConfig::default(),
    };
    if let Some(n) = o.n {
        cfg.n = n;
    }
    if let Some(m) = &o.mesh_list {
        cfg.mesh = m.clone();
    }
    if let Some(p) = o.p {
        cfg.p = p;
    }
    if let Some(t) = o.tol {
        cfg.tol = t;
    }
    if let Some(lm) = o.load_mode {
        cfg.load_mode = lm.into();
    }
    let table = run_2d(case, &cfg)?;
    print!("{table}");
    for col in ["err_uh_l2", "err_rec_h1"] {
        println!("slope({col}) = {:.3}", table.slope(col)?);
    }
    if let Some(dir) = o.out {
        let name = format!("case2d-{case}");
        experiments::write_run(&dir, &cfg, &[(name.as_str(), &table)])?;
        // Also export the deformed full solution on a small lattice for
        // visualization.
        let grid = hqc::lattice2d::Grid2D::unit_domain(64, 64)?;
        let f = load_2d(grid);
        let (u, _) = hqc::lattice2d::solve_full_2d(grid, &case_bonds(case)?, &f, cfg.tol)?;
        experiments::twod::deformed_configuration(&u, 1.0)
            .write_csv(&dir.join(format!("{name}-deformed.csv")))?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn report(dir: &std::path::Path) -> Result<()> {
    let mut found = false;
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.filter_map(|e| e.ok()).collect();
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if path.extension().and_then(|s| s.to_str()) != Some("csv") {
            continue;
        }
        let table = match Table::read_csv(&path) {
            Ok(t) => t,
            Err(_) => continue,
        };
        let headers = table.headers().to_vec();
        if headers.iter().any(|h| h == "p") && headers.iter().any(|h| h == "err_rec_h1") {
            let (c8, spread) = p_study_spread(&table)?;
            println!("{}:", path.display());
            for (p, c) in &c8 {
                println!("  C8(p = {p}) = {c:.4}");
            }
            println!("  spread max/min = {spread:.4}");
            found = true;
        } else if headers.iter().any(|h| h == "h") {
            println!("{}:", path.display());
            for col in headers.iter().filter(|h| h.as_str() != "h") {
                match table.slope(col) {
                    Ok(s) => println!("  slope({col}) = {s:.3}"),
                    Err(_) => println!("  slope({col}) = n/a"),
                }
            }
            found = true;
        }
    }
    if !found {
        println!("no convergence tables found in {}", dir.display());
    }
    Ok(())
}
