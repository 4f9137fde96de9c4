//! Command implementations behind the CLI: each takes a parsed config
//! and an output directory, runs the corresponding computation, and
//! writes deterministic artifacts plus the resolved config and a SHA-256
//! manifest. The three convergence harnesses live here too so tests can
//! drive them directly.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use thiserror::Error;

use crate::config::{Config, ConfigError, ConvergenceKind, EigOrdering};
use crate::eigen::{eig_arnoldi, eig_dense, ArnoldiOptions, EigenError, EigenSet, DENSE_EIG_CAP};
use crate::evolution::{run, EvolutionConfig, EvolutionError, Scheme};
use crate::expr::{Expr, ExprError};
use crate::geometry::{
    integrate_flow, manifold_sheets, FlowField, GeometryError, PhasePoint,
};
use crate::grid::{idft, linear_fit, sobolev_norm, Grid, GridError, SpectralField};
use crate::io::{self, IoError, OutputDir};
use crate::operators::{OperatorError, OperatorSpec};
use crate::tracker::{
    mode_red_report, sort_magnitude_phase, sort_realpart_threshold, sweep, symmetry_pairs,
    SweepPlan, TrackerError,
};

/// Failure classes with the CLI exit-code contract: configuration
/// problems exit 2, numerical failures 3, I/O failures 4.
#[derive(Debug, Error)]
pub enum CommandError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) => 2,
            CommandError::Numerical(_) => 3,
            CommandError::Io(_) => 4,
        }
    }
}

impl From<ConfigError> for CommandError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io(inner) => CommandError::Io(inner.to_string()),
            other => CommandError::Config(other.to_string()),
        }
    }
}

impl From<IoError> for CommandError {
    fn from(e: IoError) -> Self {
        CommandError::Io(e.to_string())
    }
}

impl From<GridError> for CommandError {
    fn from(e: GridError) -> Self {
        match e {
            GridError::FitUndefined => CommandError::Numerical(e.to_string()),
            other => CommandError::Config(other.to_string()),
        }
    }
}

impl From<ExprError> for CommandError {
    fn from(e: ExprError) -> Self {
        CommandError::Config(e.to_string())
    }
}

impl From<OperatorError> for CommandError {
    fn from(e: OperatorError) -> Self {
        CommandError::Config(e.to_string())
    }
}

impl From<EvolutionError> for CommandError {
    fn from(e: EvolutionError) -> Self {
        match e {
            EvolutionError::NonFinite(_) => CommandError::Numerical(e.to_string()),
            EvolutionError::Operator(inner) => inner.into(),
            EvolutionError::Expr(inner) => inner.into(),
            EvolutionError::Grid(inner) => inner.into(),
            other => CommandError::Config(other.to_string()),
        }
    }
}

impl From<EigenError> for CommandError {
    fn from(e: EigenError) -> Self {
        match e {
            EigenError::NotConverged { .. } | EigenError::Linalg(_) => {
                CommandError::Numerical(e.to_string())
            }
            EigenError::Operator(inner) => inner.into(),
            other => CommandError::Config(other.to_string()),
        }
    }
}

impl From<TrackerError> for CommandError {
    fn from(e: TrackerError) -> Self {
        match e {
            TrackerError::SweepBroken(_, _) => CommandError::Numerical(e.to_string()),
            TrackerError::Eigen(inner) => inner.into(),
            TrackerError::Operator(inner) => inner.into(),
            TrackerError::Grid(inner) => inner.into(),
            other => CommandError::Config(other.to_string()),
        }
    }
}

impl From<GeometryError> for CommandError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::ZeroXi { .. } | GeometryError::NonFinite(_) => {
                CommandError::Numerical(e.to_string())
            }
            GeometryError::Expr(inner) => inner.into(),
            other => CommandError::Config(other.to_string()),
        }
    }
}

fn operator_from_config(cfg: &Config) -> Result<OperatorSpec, CommandError> {
    let grid = Grid::new(cfg.require_n()?)?;
    Ok(OperatorSpec::new(
        grid,
        cfg.require_r()?,
        cfg.require_beta()?.clone(),
        cfg.omega0,
        cfg.nu,
    )?)
}

fn finish(mut out: OutputDir, cfg: &Config) -> Result<(), CommandError> {
    out.write_text("config_resolved.txt", &cfg.resolved_text())?;
    out.finish()?;
    Ok(())
}

fn plots_script(lines: &[&str]) -> String {
    let mut s = String::from(
        "# Plotting commands referencing the CSV artifacts in this directory.\n\
         # Run with gnuplot; nothing here is executed by the simulator.\n\
         set datafile separator ','\n",
    );
    for l in lines {
        s.push_str(l);
        s.push('\n');
    }
    s
}

// ---------------------------------------------------------------------
// evolve
// ---------------------------------------------------------------------

pub fn cmd_evolve(cfg: &Config, out_dir: &Path) -> Result<(), CommandError> {
    let spec = operator_from_config(cfg)?;
    let t_final = cfg
        .evolution
        .t_final
        .ok_or(ConfigError::Missing("evolution.T"))?;
    let ecfg = EvolutionConfig {
        spec,
        forcing: cfg.require_forcing()?.clone(),
        dt: cfg.evolution.dt,
        t_final,
        scheme: cfg.evolution.scheme,
        snapshot_times: if cfg.evolution.snapshot_times.is_empty() {
            vec![t_final]
        } else {
            cfg.evolution.snapshot_times.clone()
        },
        red_indices: cfg.evolution.red_s_list.clone(),
        red_fit_window: None,
    };
    let output = run(&ecfg)?;

    let mut out = OutputDir::create(out_dir)?;
    out.write_text("energy.csv", &io::energy_csv(&output.energy_series))?;
    if let Some(fit) = output.growth_fit {
        let text = format!(
            "slope,intercept,r_squared\n{},{},{}\n",
            io::fmt_float(fit.slope),
            io::fmt_float(fit.intercept),
            io::fmt_float(fit.r_squared)
        );
        out.write_text("growth_fit.csv", &text)?;
    }
    for (i, (t, field)) in output.snapshots.iter().enumerate() {
        out.write_bytes(
            &format!("snapshot_{i}.bin"),
            &io::spectral_to_bytes(field),
        )?;
        let curves: Vec<_> = output
            .red_series
            .iter()
            .filter_map(|(_, per_time)| {
                per_time
                    .iter()
                    .find(|(tt, _)| tt == t)
                    .map(|(_, c)| c.clone())
            })
            .collect();
        if !curves.is_empty() {
            out.write_text(&format!("red_{i}.csv"), &io::red_csv(&curves))?;
        }
    }
    if cfg.emit_plots_script {
        out.write_text(
            "plots.txt",
            &plots_script(&["plot 'energy.csv' using 1:2 with lines title 'energy'"]),
        )?;
    }
    finish(out, cfg)
}

// ---------------------------------------------------------------------
// eig / sweep
// ---------------------------------------------------------------------

fn arnoldi_options(cfg: &Config) -> ArnoldiOptions {
    ArnoldiOptions {
        tol: cfg.eig.tol,
        ..ArnoldiOptions::default()
    }
}

fn apply_ordering(cfg: &Config, set: &mut EigenSet) {
    let mut lambdas: Vec<Complex64> = set.pairs.iter().map(|p| p.lambda).collect();
    match cfg.eig.ordering {
        EigOrdering::MagnitudePhase => sort_magnitude_phase(&mut lambdas),
        EigOrdering::RealPartThreshold => sort_realpart_threshold(&mut lambdas, cfg.eig.tau),
    }
    let mut used = vec![false; set.pairs.len()];
    let mut ordered = Vec::with_capacity(set.pairs.len());
    for l in lambdas {
        let idx = set
            .pairs
            .iter()
            .enumerate()
            .find(|(i, p)| !used[*i] && (p.lambda - l).norm() == 0.0)
            .map(|(i, _)| i)
            .expect("ordering preserves the multiset");
        used[idx] = true;
        ordered.push(set.pairs[idx].clone());
    }
    set.pairs = ordered;
}

fn solve_eigenset(
    cfg: &Config,
    spec: &OperatorSpec,
    m: usize,
) -> Result<EigenSet, CommandError> {
    match eig_arnoldi(spec, m, &arnoldi_options(cfg)) {
        Ok(set) => Ok(set),
        // A singular shifted matrix (e.g. an exact eigenvalue at the
        // shift) breaks the LU solve; fall back to the dense path when
        // the grid admits it.
        Err(EigenError::Linalg(_)) if spec.grid().n() <= DENSE_EIG_CAP => {
            Ok(eig_dense(spec, m)?)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn cmd_eig(cfg: &Config, out_dir: &Path) -> Result<(), CommandError> {
    let spec = operator_from_config(cfg)?;
    let m = cfg.eig.m.ok_or(ConfigError::Missing("eig.m"))?;
    let mut set = solve_eigenset(cfg, &spec, m)?;
    apply_ordering(cfg, &mut set);

    let mut out = OutputDir::create(out_dir)?;
    out.write_text("eigenvalues.csv", &io::eigensets_csv(std::slice::from_ref(&set)))?;
    for (j, pair) in set.pairs.iter().enumerate() {
        out.write_bytes(
            &format!("mode_{:e}_{j}.bin", set.nu),
            &io::spectral_to_bytes(&pair.vector),
        )?;
    }
    if cfg.emit_plots_script {
        out.write_text(
            "plots.txt",
            &plots_script(&["plot 'eigenvalues.csv' using 3:4 with points title 'spectrum'"]),
        )?;
    }
    finish(out, cfg)
}

pub fn cmd_sweep(cfg: &Config, out_dir: &Path) -> Result<(), CommandError> {
    let spec = operator_from_config(cfg)?;
    let m = cfg.eig.m.ok_or(ConfigError::Missing("eig.m"))?;
    if cfg.eig.nu_list.is_empty() {
        return Err(ConfigError::Missing("eig.nu_list").into());
    }
    let plan = SweepPlan {
        nus: cfg.eig.nu_list.clone(),
        m,
        opts: arnoldi_options(cfg),
    };
    let result = sweep(&spec, &plan)?;

    let mut out = OutputDir::create(out_dir)?;
    out.write_text("eigenvalues.csv", &io::eigensets_csv(&result.sets))?;
    out.write_text(
        "trajectories.csv",
        &io::trajectories_csv(&result.trajectories),
    )?;
    if let Some(last) = result.sets.last() {
        let lambdas: Vec<Complex64> = last.pairs.iter().map(|p| p.lambda).collect();
        out.write_text(
            "symmetry.csv",
            &io::symmetry_csv(&symmetry_pairs(&lambdas, 1e-6)),
        )?;
        for (j, pair) in last.pairs.iter().enumerate() {
            out.write_bytes(
                &format!("mode_{:e}_{j}.bin", last.nu),
                &io::spectral_to_bytes(&pair.vector),
            )?;
        }
        if !cfg.evolution.red_s_list.is_empty() {
            let n = spec.grid().n() as f64;
            let report = mode_red_report(last, &cfg.evolution.red_s_list, (8.0, n / 2.0));
            let mut text = String::from("j,s,R,E\n");
            for (j, (_, curves)) in report.iter().enumerate() {
                for curve in curves {
                    for (r, e) in curve.radii.iter().zip(&curve.values) {
                        let _ = writeln!(
                            text,
                            "{j},{},{r},{}",
                            io::fmt_float(curve.s),
                            io::fmt_float(*e)
                        );
                    }
                }
            }
            out.write_text("mode_red.csv", &text)?;
        }
    }
    if cfg.emit_plots_script {
        out.write_text(
            "plots.txt",
            &plots_script(&["plot 'trajectories.csv' using 3:4 with linespoints title 'trajectories'"]),
        )?;
    }
    finish(out, cfg)
}

// ---------------------------------------------------------------------
// manifold / flow
// ---------------------------------------------------------------------

pub fn cmd_manifold(cfg: &Config, out_dir: &Path) -> Result<(), CommandError> {
    let r = cfg.require_r()?;
    let beta = cfg.require_beta()?;
    let manifold = manifold_sheets(r, beta, cfg.manifold_resolution)?;

    let mut out = OutputDir::create(out_dir)?;
    out.write_text("manifold.csv", &io::manifold_csv(&manifold))?;
    out.write_text(
        "coverage.txt",
        &format!("coverage = {}\n", io::fmt_float(manifold.coverage())),
    )?;
    if cfg.emit_plots_script {
        out.write_text(
            "plots.txt",
            &plots_script(&["splot 'manifold.csv' using 1:2:3 with points title 'sheet 1'"]),
        )?;
    }
    finish(out, cfg)
}

pub fn cmd_flow(cfg: &Config, out_dir: &Path) -> Result<(), CommandError> {
    let spec = operator_from_config(cfg)?;
    let init = cfg
        .flow
        .initial
        .ok_or(ConfigError::Missing("flow.initial"))?;
    let t_final = cfg.flow.t_final.ok_or(ConfigError::Missing("flow.T"))?;
    let field = FlowField::new(&spec, cfg.flow.variant);
    let start = PhasePoint {
        x1: init[0],
        x2: init[1],
        xi1: init[2],
        xi2: init[3],
    };
    let path = integrate_flow(&field, start, cfg.flow.dt, t_final, 1)?;

    let mut out = OutputDir::create(out_dir)?;
    out.write_text("flow.csv", &io::flow_csv(&path))?;
    if cfg.emit_plots_script {
        out.write_text(
            "plots.txt",
            &plots_script(&["plot 'flow.csv' using 2:3 with lines title 'base trajectory'"]),
        )?;
    }
    finish(out, cfg)
}

// ---------------------------------------------------------------------
// Convergence harnesses
// ---------------------------------------------------------------------

/// Shared problem description for the evolution harnesses.
#[derive(Clone)]
pub struct EvolveSetup {
    pub n: usize,
    pub r: f64,
    pub beta: Expr,
    pub omega0: f64,
    pub forcing: Expr,
    pub t_final: f64,
}

/// Runs from zero data and returns the solution at the final time.
pub fn evolve_final(
    setup: &EvolveSetup,
    n: usize,
    scheme: Scheme,
    dt: f64,
) -> Result<SpectralField, CommandError> {
    let grid = Grid::new(n)?;
    let cfg = EvolutionConfig {
        spec: OperatorSpec::new(grid, setup.r, setup.beta.clone(), setup.omega0, 0.0)?,
        forcing: setup.forcing.clone(),
        dt,
        t_final: setup.t_final,
        scheme,
        snapshot_times: vec![setup.t_final],
        red_indices: vec![],
        red_fit_window: None,
    };
    let mut output = run(&cfg)?;
    Ok(output.snapshots.remove(output.snapshots.len() - 1).1)
}

fn l2_difference(a: &SpectralField, b: &SpectralField) -> f64 {
    let mut diff = SpectralField::zeros(a.grid);
    for s in 0..a.coeffs.len() {
        diff.coeffs[s] = a.coeffs[s] - b.coeffs[s];
    }
    sobolev_norm(&diff, 0.0)
}

pub struct TimeConvergence {
    /// `(scheme, dt, error at T)` rows.
    pub rows: Vec<(Scheme, f64, f64)>,
    /// Fitted order per scheme: slope of `log2(error)` vs `log2(dt)`.
    pub orders: Vec<(Scheme, f64)>,
}

/// Time harness: errors at `T` against a refined reference computed by
/// the same code with `ref_dt`.
pub fn time_convergence(
    setup: &EvolveSetup,
    dts: &[f64],
    ref_dt: f64,
) -> Result<TimeConvergence, CommandError> {
    let reference = evolve_final(setup, setup.n, Scheme::Etdrk4, ref_dt)?;
    let mut rows = Vec::new();
    let mut orders = Vec::new();
    for scheme in [Scheme::Rk4, Scheme::Etdrk4] {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &dt in dts {
            let u = evolve_final(setup, setup.n, scheme, dt)?;
            let err = l2_difference(&u, &reference);
            rows.push((scheme, dt, err));
            if err > 0.0 {
                xs.push(dt.log2());
                ys.push(err.log2());
            }
        }
        let fit = linear_fit(&xs, &ys).ok_or_else(|| {
            CommandError::Numerical("time-convergence order fit undefined".into())
        })?;
        orders.push((scheme, fit.slope));
    }
    Ok(TimeConvergence { rows, orders })
}

/// Space harness: physical-space error on `[-pi/4, pi/4]^2` against an
/// `N = ref_n` reference, compared on shared nodes by exact index
/// subsetting (`n` must divide `ref_n`).
pub fn space_convergence(
    setup: &EvolveSetup,
    ns: &[usize],
    ref_n: usize,
    dt: f64,
) -> Result<Vec<(usize, f64)>, CommandError> {
    let reference = idft(&evolve_final(setup, ref_n, Scheme::Etdrk4, dt)?);
    let ref_grid = reference.grid;
    let mut rows = Vec::new();
    for &n in ns {
        if ref_n % n != 0 {
            return Err(CommandError::Config(format!(
                "space harness: N = {n} does not divide the reference N = {ref_n}"
            )));
        }
        let stride = (ref_n / n) as i64;
        let u = idft(&evolve_final(setup, n, Scheme::Etdrk4, dt)?);
        let grid = u.grid;
        let mut acc = 0.0;
        let mut count = 0usize;
        for (j1, j2) in grid.indices() {
            let (x1, x2) = grid.node(j1, j2);
            if x1.abs() <= PI / 4.0 && x2.abs() <= PI / 4.0 {
                let d = u.at(j1, j2) - reference.values[ref_grid.slot(j1 * stride, j2 * stride)];
                acc += d.norm_sqr();
                count += 1;
            }
        }
        let h = grid.h();
        let _ = count;
        rows.push((n, (h * h * acc).sqrt()));
    }
    Ok(rows)
}

/// Eigenvalue harness: per-eigenvalue distance from an `N = ref_n`
/// reference spectrum (nearest matching from the reference into each
/// computed set).
pub fn eig_convergence(
    r: f64,
    beta: &Expr,
    omega0: f64,
    nu: f64,
    m: usize,
    ns: &[usize],
    ref_n: usize,
    opts: &ArnoldiOptions,
) -> Result<Vec<(usize, Vec<f64>)>, CommandError> {
    let solve = |n: usize| -> Result<Vec<Complex64>, CommandError> {
        let grid = Grid::new(n)?;
        let spec = OperatorSpec::new(grid, r, beta.clone(), omega0, nu)?;
        let set = eig_arnoldi(&spec, m, opts)?;
        let mut lambdas: Vec<Complex64> = set.pairs.iter().map(|p| p.lambda).collect();
        sort_magnitude_phase(&mut lambdas);
        Ok(lambdas)
    };
    let reference = solve(ref_n)?;
    let mut rows = Vec::new();
    for &n in ns {
        let lambdas = solve(n)?;
        let errors = reference
            .iter()
            .map(|lr| {
                lambdas
                    .iter()
                    .map(|l| (l - lr).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        rows.push((n, errors));
    }
    Ok(rows)
}

pub fn cmd_convergence(cfg: &Config, out_dir: &Path) -> Result<(), CommandError> {
    let kind = cfg
        .convergence
        .ok_or(ConfigError::Missing("convergence.kind"))?;
    let mut out = OutputDir::create(out_dir)?;
    match kind {
        ConvergenceKind::Time => {
            let setup = EvolveSetup {
                n: cfg.require_n()?,
                r: cfg.require_r()?,
                beta: cfg.require_beta()?.clone(),
                omega0: cfg.omega0,
                forcing: cfg.require_forcing()?.clone(),
                t_final: cfg
                    .evolution
                    .t_final
                    .ok_or(ConfigError::Missing("evolution.T"))?,
            };
            let dts: Vec<f64> = (0..=8).map(|p| 0.5f64.powi(p)).collect();
            let ref_dt = 0.5f64.powi(10) * 1e-2;
            let result = time_convergence(&setup, &dts, ref_dt)?;
            let mut text = String::from("scheme,dt,error\n");
            for (scheme, dt, err) in &result.rows {
                let name = scheme_name(*scheme);
                let _ = writeln!(text, "{name},{},{}", io::fmt_float(*dt), io::fmt_float(*err));
            }
            out.write_text("time_convergence.csv", &text)?;
            let mut text = String::from("scheme,fitted_order\n");
            for (scheme, order) in &result.orders {
                let _ = writeln!(text, "{},{}", scheme_name(*scheme), io::fmt_float(*order));
            }
            out.write_text("fitted_order.csv", &text)?;
        }
        ConvergenceKind::Space => {
            let setup = EvolveSetup {
                n: cfg.require_n()?,
                r: cfg.require_r()?,
                beta: cfg.require_beta()?.clone(),
                omega0: cfg.omega0,
                forcing: cfg.require_forcing()?.clone(),
                t_final: cfg
                    .evolution
                    .t_final
                    .ok_or(ConfigError::Missing("evolution.T"))?,
            };
            let rows = space_convergence(&setup, &[8, 16, 32, 64], 1 << 10, cfg.evolution.dt)?;
            let mut text = String::from("N,error\n");
            for (n, err) in &rows {
                let _ = writeln!(text, "{n},{}", io::fmt_float(*err));
            }
            out.write_text("space_convergence.csv", &text)?;
        }
        ConvergenceKind::Eig => {
            let m = cfg.eig.m.unwrap_or(12);
            let rows = eig_convergence(
                cfg.require_r()?,
                cfg.require_beta()?,
                cfg.omega0,
                cfg.nu,
                m,
                &[16, 32, 64],
                80,
                &arnoldi_options(cfg),
            )?;
            let mut text = String::from("N,j,error\n");
            for (n, errors) in &rows {
                for (j, err) in errors.iter().enumerate() {
                    let _ = writeln!(text, "{n},{j},{}", io::fmt_float(*err));
                }
            }
            out.write_text("eig_convergence.csv", &text)?;
        }
    }
    finish(out, cfg)
}

fn scheme_name(scheme: Scheme) -> &'static str {
    match scheme {
        Scheme::Rk4 => "rk4",
        Scheme::Etdrk4 => "etdrk4",
    }
}

/// Dispatch by subcommand name (used by the binary and by tests).
pub fn run_command(name: &str, cfg: &Config, out_dir: &Path) -> Result<(), CommandError> {
    match name {
        "evolve" => cmd_evolve(cfg, out_dir),
        "eig" => cmd_eig(cfg, out_dir),
        "sweep" => cmd_sweep(cfg, out_dir),
        "manifold" => cmd_manifold(cfg, out_dir),
        "flow" => cmd_flow(cfg, out_dir),
        "convergence" => cmd_convergence(cfg, out_dir),
        other => Err(CommandError::Config(format!("unknown command '{other}'"))),
    }
}
