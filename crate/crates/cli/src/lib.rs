//! Command-line front end of the hybrid Kuramoto workbench.
//!
//! Exit codes: 0 success, 1 audit or oracle failure, 2 configuration error,
//! 3 runtime fault.

pub mod config;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use hybrid_kuramoto::classifier::{classify, detect_fss, detect_opss, equivalence_audit, SuiteConfig};
use hybrid_kuramoto::diagnostics::{phase_diameter, DiagnosticsReport};
use hybrid_kuramoto::equilibria::{
    brute_force_equilibria, compare_with_oracle, default_oracle_grid, enumerate_equilibria, EquilibriumSet,
    OracleComparison,
};
use hybrid_kuramoto::integrator::{integrate, Trajectory};
use hybrid_kuramoto::limit_system::{poincare_sweep, write_poincare_csv, LimitParams, PoincareConfig};
use hybrid_kuramoto::model::{frequencies, normalize_frame, Ensemble};
use hybrid_kuramoto::Error;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{load_json, load_run_config, parse_grid, RunConfig};

/// Largest ensemble for which `classify` also enumerates equilibria.
const CLASSIFY_ENUMERATION_LIMIT: usize = 12;

#[derive(Debug)]
pub enum CliError {
    /// Audit or oracle mismatch (exit 1).
    Failed(String),
    /// Bad configuration or refused request (exit 2).
    Config(String),
    /// Integration or I/O fault (exit 3).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Failed(m) => write!(f, "check failed: {m}"),
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime fault: {m}"),
        }
    }
}

fn from_core(e: Error) -> CliError {
    match e {
        Error::Parameter(_) | Error::Refused(_) => CliError::Config(e.to_string()),
        Error::Integration { .. } => CliError::Runtime(e.to_string()),
    }
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "hkuramoto", version, about = "Hybrid first/second-order Kuramoto workbench")]
pub struct Cli {
    /// Output directory (overrides `outputs.dir`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for batch commands.
    #[arg(long, global = true, value_name = "K")]
    pub threads: Option<usize>,
    /// Seed for all randomness (overrides `integrator.seed`).
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a run config; writes trajectory.csv, diagnostics.json, plot_data.csv.
    Simulate {
        /// Run config (JSON).
        config: PathBuf,
    },
    /// Enumerate equilibrium classes; writes equilibria.json.
    Equilibria {
        /// Run config (JSON); only the ensemble is used.
        config: PathBuf,
        /// Also run the grid/Newton oracle (N ≤ 4) and compare.
        #[arg(long)]
        brute_force: bool,
        /// Oracle grid points per axis.
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Classify a trajectory CSV; writes classification.json.
    Classify {
        /// Trajectory CSV as written by `simulate`.
        trajectory: PathBuf,
        /// Run config the trajectory came from.
        config: PathBuf,
    },
    /// Run an equivalence audit suite; writes audit.json.
    Audit {
        /// Suite config (JSON).
        suite: PathBuf,
    },
    /// Return-map sweep of the limit system; writes poincare.csv.
    Poincare {
        /// Inertia.
        #[arg(long)]
        m: f64,
        /// Damping.
        #[arg(long)]
        d: f64,
        /// Natural frequency in the normalized frame.
        #[arg(long)]
        omega: f64,
        /// Effective coupling λR*.
        #[arg(long = "lamR")]
        lam_r: f64,
        /// Mean phase Θ*.
        #[arg(long = "Theta", default_value_t = 0.0, allow_hyphen_values = true)]
        theta_star: f64,
        /// `start:stop:count` or a comma-separated list.
        #[arg(long = "v0-grid")]
        v0_grid: String,
        /// RK4 step.
        #[arg(long, default_value_t = 1e-5)]
        dt: f64,
        /// Give up on an orbit after this time.
        #[arg(long = "t-max", default_value_t = 200.0)]
        t_max: f64,
    },
    /// Tail-mean order parameter across couplings; writes sweep.csv.
    Sweep {
        /// Run config (JSON); its coupling is replaced by each grid value.
        config: PathBuf,
        /// `start:stop:count` or a comma-separated list.
        #[arg(long = "lambda-grid")]
        lambda_grid: String,
    },
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(k) = cli.threads {
        pool = pool.num_threads(k);
    }
    let pool = pool.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Simulate { config } => cmd_simulate(cli, config),
        Command::Equilibria {
            config,
            brute_force,
            grid,
        } => cmd_equilibria(cli, config, *brute_force, *grid),
        Command::Classify { trajectory, config } => cmd_classify(cli, trajectory, config),
        Command::Audit { suite } => cmd_audit(cli, suite),
        Command::Poincare {
            m,
            d,
            omega,
            lam_r,
            theta_star,
            v0_grid,
            dt,
            t_max,
        } => {
            let params = LimitParams::new(*m, *d, *omega, *lam_r, *theta_star).map_err(from_core)?;
            let grid = parse_grid(v0_grid).map_err(CliError::Config)?;
            cmd_poincare(cli, &params, &grid, &PoincareConfig { dt: *dt, t_max: *t_max })
        }
        Command::Sweep { config, lambda_grid } => {
            let grid = parse_grid(lambda_grid).map_err(CliError::Config)?;
            cmd_sweep(cli, config, &grid)
        }
    })
}

fn out_dir(cli: &Cli, cfg: Option<&RunConfig>) -> Result<PathBuf, CliError> {
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.and_then(|c| c.outputs.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(io(&dir))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(io(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Runtime(e.to_string()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(io(path))
}

/// Co-rotating frame of the configured ensemble and its drift rate.
fn normalized(cfg: &RunConfig) -> Result<(Ensemble, f64), CliError> {
    let n = normalize_frame(&cfg.ensemble).map_err(from_core)?;
    Ok((n.ensemble, n.drift))
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    ensemble: &'a Ensemble,
    frame_drift: f64,
    seed: u64,
    steps: usize,
    samples: usize,
    fault: Option<String>,
    diagnostics: DiagnosticsReport,
}

pub fn cmd_simulate(cli: &Cli, config: &Path) -> Result<(), CliError> {
    let cfg = load_run_config(config)?;
    let dir = out_dir(cli, Some(&cfg))?;
    let seed = cli.seed.unwrap_or(cfg.integrator.seed);
    let (ens, drift) = normalized(&cfg)?;
    let initial = cfg.initial_state(&ens, seed)?;
    let mut icfg = cfg.integrator.clone();
    icfg.seed = seed;
    let (traj, fault) = match integrate(&ens, &initial, &icfg) {
        Ok(t) => (t, None),
        Err(f) => (*f.partial, Some(f.error.to_string())),
    };
    if cfg.outputs.emit_trajectory {
        let path = dir.join("trajectory.csv");
        let mut w = create(&path)?;
        traj.write_csv(&mut w).and_then(|_| w.flush()).map_err(io(&path))?;
    }
    if cfg.outputs.emit_plots {
        write_plot_data(&dir.join("plot_data.csv"), &traj)?;
    }
    let summary = SimulateSummary {
        ensemble: &ens,
        frame_drift: drift,
        seed,
        steps: traj.meta.steps,
        samples: traj.samples.len(),
        fault: fault.clone(),
        diagnostics: DiagnosticsReport::from_trajectory(&traj),
    };
    write_json(&dir.join("diagnostics.json"), &summary)?;
    println!(
        "simulated N={} to t={} ({} samples): R={:.6} max|E residual|={:.3e} M drift={:.3e}",
        ens.len(),
        traj.last().state.t,
        traj.samples.len(),
        summary.diagnostics.r_final,
        summary.diagnostics.max_energy_residual,
        summary.diagnostics.momentum_drift
    );
    match fault {
        Some(msg) => Err(CliError::Runtime(msg)),
        None => Ok(()),
    }
}

/// `t,R,Theta,diameter,freq_1..freq_N`.
fn write_plot_data(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let mut w = create(path)?;
    let n = traj.ensemble.len();
    let mut header = String::from("t,R,Theta,diameter");
    for j in 1..=n {
        header.push_str(&format!(",freq_{j}"));
    }
    writeln!(w, "{header}").map_err(io(path))?;
    for s in &traj.samples {
        let freq = frequencies(&traj.ensemble, &s.state).map_err(from_core)?;
        let mut line = format!(
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            s.state.t,
            s.order.r,
            s.order.theta,
            phase_diameter(&s.state.theta)
        );
        for f in freq {
            line.push_str(&format!(",{f:.16e}"));
        }
        writeln!(w, "{line}").map_err(io(path))?;
    }
    w.flush().map_err(io(path))
}

#[derive(Serialize)]
struct EquilibriaReport<'a> {
    #[serde(flatten)]
    set: &'a EquilibriumSet,
    frame_drift: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<OracleSection>,
}

#[derive(Serialize)]
struct OracleSection {
    grid_per_axis: usize,
    configurations: Vec<Vec<f64>>,
    comparison: OracleComparison,
}

pub fn cmd_equilibria(cli: &Cli, config: &Path, brute_force: bool, grid: Option<usize>) -> Result<(), CliError> {
    let cfg = load_run_config(config)?;
    let dir = out_dir(cli, Some(&cfg))?;
    let (ens, drift) = normalized(&cfg)?;
    let set = enumerate_equilibria(&ens).map_err(from_core)?;
    let oracle = if brute_force {
        let g = grid.unwrap_or_else(|| default_oracle_grid(ens.len()));
        let configurations = brute_force_equilibria(&ens, g).map_err(from_core)?;
        let comparison = compare_with_oracle(&set, &configurations, 1e-6);
        Some(OracleSection {
            grid_per_axis: g,
            configurations,
            comparison,
        })
    } else {
        None
    };
    println!("{:>4} {:>20} {:>14}  sigma / Delta", "#", "r", "residual");
    for (i, c) in set.classes.iter().enumerate() {
        let sigma: String = c.sigma.iter().map(|s| if *s > 0 { '+' } else { '-' }).collect();
        let delta: Vec<String> = c.delta.iter().map(|d| format!("{d:+.6}")).collect();
        println!("{i:>4} {:>20.16} {:>14.3e}  {sigma} [{}]", c.r, c.residual, delta.join(", "));
    }
    if set.classes.is_empty() {
        println!("no equilibria{}", set.note.as_deref().map(|n| format!(" ({n})")).unwrap_or_default());
    }
    if set.degenerate_family {
        println!("degenerate r = 0 family present (not listed)");
    }
    let failed = oracle.as_ref().is_some_and(|o| !o.comparison.agree);
    if let Some(o) = &oracle {
        println!(
            "oracle: {} configurations, {} classes, max Delta error {:.3e}, agree = {}",
            o.comparison.oracle, o.comparison.enumerated, o.comparison.max_delta_error, o.comparison.agree
        );
    }
    write_json(
        &dir.join("equilibria.json"),
        &EquilibriaReport {
            set: &set,
            frame_drift: drift,
            oracle,
        },
    )?;
    if failed {
        return Err(CliError::Failed("enumerator and oracle disagree".into()));
    }
    Ok(())
}

pub fn cmd_classify(cli: &Cli, trajectory: &Path, config: &Path) -> Result<(), CliError> {
    let cfg = load_run_config(config)?;
    let dir = out_dir(cli, Some(&cfg))?;
    let (ens, _) = normalized(&cfg)?;
    let file = File::open(trajectory).map_err(io(trajectory))?;
    let traj = Trajectory::read_csv(ens.clone(), BufReader::new(file))
        .map_err(|e| CliError::Config(format!("{}: {e}", trajectory.display())))?;
    let set = (ens.len() <= CLASSIFY_ENUMERATION_LIMIT)
        .then(|| enumerate_equilibria(&ens).ok())
        .flatten();
    let report = classify(&traj, &cfg.tolerances, set.as_ref());
    let v = &report.verdicts;
    println!(
        "PSS={} FPLS={} PLS={} FSS={} OPSS={}{}",
        v.pss,
        v.fpls,
        v.pls,
        v.fss,
        v.opss,
        if report.flagged() { "  [flagged]" } else { "" }
    );
    write_json(&dir.join("classification.json"), &report)
}

pub fn cmd_audit(cli: &Cli, suite: &Path) -> Result<(), CliError> {
    let suite_cfg: SuiteConfig = load_json(suite)?;
    let dir = out_dir(cli, None)?;
    let seed = cli.seed.unwrap_or(suite_cfg.integrator.seed);
    let report = equivalence_audit(&suite_cfg, seed).map_err(from_core)?;
    for flag in &report.flags {
        if let Some(traj) = &flag.trajectory {
            let path = dir.join(format!("flagged_case_{}.csv", flag.case));
            let mut w = create(&path)?;
            traj.write_csv(&mut w).and_then(|_| w.flush()).map_err(io(&path))?;
        }
    }
    write_json(&dir.join("audit.json"), &report)?;
    println!(
        "audit: {} cases, {} inconclusive, {} flags",
        report.cases.len(),
        report.inconclusive_cases,
        report.flags.len()
    );
    for f in &report.flags {
        println!("  case {}: {}", f.case, f.reason);
    }
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("{} disagreement flags", report.flags.len())))
    }
}

pub fn cmd_poincare(cli: &Cli, params: &LimitParams, grid: &[f64], pcfg: &PoincareConfig) -> Result<(), CliError> {
    let dir = out_dir(cli, None)?;
    let results = poincare_sweep(params, grid, pcfg).map_err(from_core)?;
    let path = dir.join("poincare.csv");
    let mut w = create(&path)?;
    write_poincare_csv(&results, &mut w).and_then(|_| w.flush()).map_err(io(&path))?;
    let crossed = results.iter().filter(|r| r.crossed).count();
    let worst = results
        .iter()
        .filter(|r| r.crossed)
        .map(|r| r.energy_residual.abs())
        .fold(0.0, f64::max);
    println!(
        "poincare: {} of {} orbits returned, max |energy residual| {:.3e}",
        crossed,
        results.len(),
        worst
    );
    Ok(())
}

pub fn cmd_sweep(cli: &Cli, config: &Path, lambdas: &[f64]) -> Result<(), CliError> {
    let cfg = load_run_config(config)?;
    let dir = out_dir(cli, Some(&cfg))?;
    let seed = cli.seed.unwrap_or(cfg.integrator.seed);
    let (base, _) = normalized(&cfg)?;
    let initial = cfg.initial_state(&base, seed)?;
    let rows: Vec<Result<(f64, f64, String), CliError>> = lambdas
        .par_iter()
        .map(|&lambda| {
            let ens = base.with_coupling(lambda).map_err(from_core)?;
            let traj = integrate(&ens, &initial, &cfg.integrator)
                .map_err(|f| CliError::Runtime(format!("lambda = {lambda}: {}", f.error)))?;
            let r_tail = detect_opss(&traj, &cfg.tolerances).r_star;
            Ok((lambda, r_tail, detect_fss(&traj, &cfg.tolerances).verdict.to_string()))
        })
        .collect();
    let path = dir.join("sweep.csv");
    let mut w = create(&path)?;
    writeln!(w, "lambda,R_tail,FSS_verdict").map_err(io(&path))?;
    for row in rows {
        let (lambda, r, v) = row?;
        writeln!(w, "{lambda:.16e},{r:.16e},{v}").map_err(io(&path))?;
        println!("lambda={lambda:.6} R_tail={r:.6} FSS={v}");
    }
    w.flush().map_err(io(&path))
}
