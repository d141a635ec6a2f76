//! Command-line front end. Every run is driven by a TOML config file; see
//! `hopfid --help` for the keys.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::adjoint::Problem;
use crate::config::{Config, ProblemName};
use crate::error::{Error, Result};
use crate::gridfn::{Grid, GridFunction};
use crate::model::{norm, synthesize_measurements, DescriptorModel, Measurements};
use crate::optimize::{cg_identify, evaluate_j3, IdentificationOutcome, Termination};
use crate::pod::{load_matrix, load_snapshot_dir, pod, PodResult, SnapshotEnsemble};
use crate::sobolev::{bin_a3_measurements, smooth_g3};
use crate::validate::{kappa_sweep, plateau, tightest_window, write_sweep_csv};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

const CONFIG_KEYS: &str = "\
Config file (TOML, every key optional; `hopfid print-config` shows defaults):
  out_dir                    output directory, relative to the config file
  measurements               measurements CSV (default <out_dir>/measurements.csv)
  [model]  family (landau | mean_field), sigma1, omega1, alpha_delta,
           r_circle, gamma (landau), beta_delta, gamma_delta (mean_field), n_nodes
  [synth]  t_final, n_t, xi0, second_harmonic, noise_std, seed
  [ode]    rel_tol, abs_tol, validation_rel_tol, validation_abs_tol,
           r_min_fraction, quad_points
  [identify] ell_grad, ell_g3, slope_g, cg_restart, conv_tol, min_iters,
           max_iters, initial_step_fraction, bracket_growth,
           bracket_expansions, line_search_tol
  [init]   g1_peak, g2_base, g1_file, g2_file
  [validate] problem (p1 | p2), epsilons, n_t, control_scale, control_shift,
           g_prime_coeff, g_prime_power

Exit codes: 0 success, 1 usage or input error, 2 no convergence,
3 numerical failure.";

#[derive(Debug, Parser)]
#[command(
    name = "hopfid",
    version,
    about = "Identify descriptor-form oscillator models from amplitude and phase data"
)]
#[command(after_long_help = CONFIG_KEYS)]
struct Cli {
    /// Config file; defaults are used when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the ground-truth model and write measurements and true g files.
    Synth,
    /// Reconstruct g1 (p1), g2 (p2, needs g1_hat.csv) or g3 (p3).
    Identify {
        #[arg(long, value_enum)]
        problem: IdentifyProblem,
    },
    /// Tabulate κ over ε and N_T.
    ValidateGrad {
        #[arg(long, value_enum)]
        problem: Option<GradProblem>,
        /// Output file (default <out_dir>/kappa_sweep.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Snapshot POD.
    Pod(PodArgs),
    /// Simulate a model and dump its trajectory.
    Simulate {
        #[arg(long)]
        g1: Option<PathBuf>,
        #[arg(long)]
        g2: Option<PathBuf>,
        #[arg(long)]
        g3: Option<PathBuf>,
        /// Number of output samples (default synth.n_t).
        #[arg(long)]
        n_out: Option<usize>,
        /// Output file (default <out_dir>/trajectory.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the effective configuration as TOML.
    PrintConfig,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum IdentifyProblem {
    P1,
    P2,
    P3,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GradProblem {
    P1,
    P2,
}

/// Snapshot input is either a directory of `x,y,u,v` CSV files or a binary
/// matrix: magic `PODM`, `u32` LE rows and columns, then row-major `f64` LE
/// values with one row per snapshot. The weights file is a CSV with header
/// `w` and one weight per cell (CSV input) or per column (matrix input).
#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["snapshots", "matrix"]))]
struct PodArgs {
    #[arg(long)]
    snapshots: Option<PathBuf>,
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long)]
    weights: PathBuf,
    /// Output directory (default <out_dir>/pod).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure carrying the exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Integration { .. }
            | Error::DegenerateState { .. }
            | Error::DegenerateDirection(_)
            | Error::NotSymmetric(_) => EXIT_NUMERICAL,
            _ => EXIT_INPUT,
        };
        Failure {
            code,
            msg: e.to_string(),
        }
    }
}

fn input_error(msg: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_INPUT,
        msg: msg.into(),
    }
}

type CmdResult = std::result::Result<i32, Failure>;

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            f.code
        }
    }
}

fn dispatch(cli: Cli) -> CmdResult {
    let cfg = match &cli.config {
        Some(p) => {
            if !p.exists() {
                return Err(input_error(format!("config file {} does not exist", p.display())));
            }
            Config::load(p)?
        }
        None => Config::default(),
    };
    match cli.command {
        Command::Synth => cmd_synth(&cfg),
        Command::Identify { problem } => match problem {
            IdentifyProblem::P1 => cmd_identify(&cfg, Problem::P1),
            IdentifyProblem::P2 => cmd_identify(&cfg, Problem::P2),
            IdentifyProblem::P3 => cmd_identify_g3(&cfg),
        },
        Command::ValidateGrad { problem, out } => {
            let problem = match problem {
                Some(GradProblem::P1) => Problem::P1,
                Some(GradProblem::P2) => Problem::P2,
                None => match cfg.validate.problem {
                    ProblemName::P1 => Problem::P1,
                    ProblemName::P2 => Problem::P2,
                },
            };
            let out = out.unwrap_or_else(|| cfg.out("kappa_sweep.csv"));
            cmd_validate_grad(&cfg, problem, &out)
        }
        Command::Pod(args) => cmd_pod(&cfg, &args),
        Command::Simulate { g1, g2, g3, n_out, out } => {
            let out = out.unwrap_or_else(|| cfg.out("trajectory.csv"));
            cmd_simulate(&cfg, [g1, g2, g3], n_out.unwrap_or(cfg.synth.n_t), &out)
        }
        Command::PrintConfig => {
            print!("{}", cfg.to_toml_string());
            Ok(EXIT_OK)
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => ensure_dir(p),
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_synth(cfg: &Config) -> CmdResult {
    let truth = cfg.truth()?;
    let meas = synthesize_measurements(
        &truth,
        cfg.synth.xi0,
        cfg.synth.t_final,
        cfg.synth.n_t,
        &cfg.contamination(),
        &cfg.solver().tol,
    )?;
    ensure_dir(&cfg.out_dir)?;
    let path = cfg.measurements_path();
    ensure_parent(&path)?;
    meas.write_csv(&path)?;
    truth.g1.write_csv(&cfg.out("g1_true.csv"), "g1")?;
    truth.g2.write_csv(&cfg.out("g2_true.csv"), "g2")?;
    truth.g3.write_csv(&cfg.out("g3_true.csv"), "g3")?;
    println!("wrote {} samples to {}", meas.len(), path.display());
    Ok(EXIT_OK)
}

fn load_measurements(cfg: &Config) -> std::result::Result<Measurements, Failure> {
    let path = cfg.measurements_path();
    if !path.exists() {
        return Err(input_error(format!(
            "measurements file {} not found; run `hopfid synth` or set `measurements` in the config",
            path.display()
        )));
    }
    Ok(Measurements::read_csv(&path)?)
}

fn load_g1_hat(cfg: &Config, grid: Grid) -> std::result::Result<GridFunction, Failure> {
    let path = cfg.out("g1_hat.csv");
    if !path.exists() {
        return Err(input_error(format!(
            "{} not found; run `hopfid identify --problem p1` first",
            path.display()
        )));
    }
    let g1 = GridFunction::read_csv(&path)?;
    check_grid(&g1, grid, &path)?;
    Ok(g1)
}

fn check_grid(g: &GridFunction, grid: Grid, path: &Path) -> std::result::Result<(), Failure> {
    let other = g.grid();
    if other.n_nodes() != grid.n_nodes() || (other.r_max() - grid.r_max()).abs() > 1e-9 * grid.r_max() {
        return Err(input_error(format!(
            "{} is on a grid with {} nodes up to r = {}, expected {} nodes up to r = {}",
            path.display(),
            other.n_nodes(),
            other.r_max(),
            grid.n_nodes(),
            grid.r_max()
        )));
    }
    Ok(())
}

fn model_grid(cfg: &Config) -> Result<Grid> {
    let r_circle = cfg.truth()?.r_circle;
    Grid::new(r_circle, cfg.model.n_nodes)
}

fn summary_csv(rows: &[(&str, String)]) -> String {
    let mut s = String::from("# columns: quantity,value\nquantity,value\n");
    for (k, v) in rows {
        let _ = writeln!(s, "{k},{v}");
    }
    s
}

fn print_summary(rows: &[(&str, String)]) {
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in rows {
        println!("{k:width$}  {v}");
    }
}

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::Converged => "converged",
        Termination::ExactOptimum => "exact_optimum",
        Termination::Stationary => "stationary",
        Termination::MaxIterations => "max_iterations",
    }
}

fn cmd_identify(cfg: &Config, problem: Problem) -> CmdResult {
    let meas = load_measurements(cfg)?;
    let grid = model_grid(cfg)?;
    let icfg = cfg.identification(meas.len());
    let (g_init, partner, name) = match problem {
        Problem::P1 => (cfg.initial_g1(grid)?, GridFunction::zeros(grid), "g1"),
        Problem::P2 => {
            let g1 = load_g1_hat(cfg, grid)?;
            (cfg.initial_g2(grid)?, g1, "g2")
        }
    };
    if let Some(p) = match problem {
        Problem::P1 => &cfg.init.g1_file,
        Problem::P2 => &cfg.init.g2_file,
    } {
        check_grid(&g_init, grid, p)?;
    }
    let outcome: IdentificationOutcome = cg_identify(problem, &g_init, &partner, &meas, &icfg)?;
    ensure_dir(&cfg.out_dir)?;
    let est = &outcome.estimate;
    est.write_csv(&cfg.out(&format!("{name}_hat.csv")), name)?;
    outcome.history.write_csv(&cfg.out(&format!("history_{problem}.csv")))?;

    let last = outcome.history.records.last().expect("history has the initial row");
    let mut rows: Vec<(&str, String)> = vec![
        ("problem", problem.to_string()),
        ("termination", termination_name(outcome.termination).into()),
        ("iterations", last.iter.to_string()),
        ("initial_cost", format!("{:e}", outcome.history.records[0].cost)),
        ("final_cost", format!("{:e}", last.cost)),
    ];
    match problem {
        Problem::P1 => {
            rows.push(("g1_hat_at_0", format!("{:.6}", est.eval(0.0)?)));
            rows.push(("g1_hat_at_r_circle", format!("{:e}", est.eval(grid.r_max())?)));
        }
        Problem::P2 => {
            rows.push(("g2_hat_at_0", format!("{:.6}", est.eval(0.0)?)));
            rows.push(("g2_hat_at_r_circle", format!("{:.6}", est.eval(grid.r_max())?)));
            rows.push(("end_slope_drift", format!("{:e}", outcome.end_slope_drift)));
        }
    }
    write_text(&cfg.out(&format!("summary_{problem}.csv")), &summary_csv(&rows))?;
    print_summary(&rows);
    if outcome.termination.is_converged() {
        Ok(EXIT_OK)
    } else {
        eprintln!("error: no convergence after {} iterations", last.iter);
        Ok(EXIT_NOT_CONVERGED)
    }
}

/// P3: bins the shift-mode data along the `ĝ1` trajectory and smooths it
/// in one linear solve.
fn cmd_identify_g3(cfg: &Config) -> CmdResult {
    let meas = load_measurements(cfg)?;
    let grid = model_grid(cfg)?;
    let g1 = load_g1_hat(cfg, grid)?;
    let zeros = GridFunction::zeros(grid);
    let m = DescriptorModel::new(g1, zeros.clone(), zeros, grid.r_max())?;
    let settings = cfg.solver();
    let traj = m.integrate(cfg.synth.xi0, meas.t_final(), &settings.tol)?;
    let binned = bin_a3_measurements(&traj, &meas, grid, &settings)?;
    let g3 = smooth_g3(&binned, cfg.identify.ell_g3)?;
    ensure_dir(&cfg.out_dir)?;
    binned.write_csv(&cfg.out("g3_binned.csv"), "a3")?;
    g3.write_csv(&cfg.out("g3_hat.csv"), "g3")?;
    let rows: Vec<(&str, String)> = vec![
        ("problem", "p3".into()),
        ("ell", cfg.identify.ell_g3.to_string()),
        ("j3", format!("{:e}", evaluate_j3(&g3, &traj, &meas)?)),
        ("g3_hat_at_0", format!("{:.6}", g3.eval(0.0)?)),
        ("g3_hat_at_r_circle", format!("{:.6}", g3.eval(grid.r_max())?)),
    ];
    write_text(&cfg.out("summary_p3.csv"), &summary_csv(&rows))?;
    print_summary(&rows);
    Ok(EXIT_OK)
}

fn cmd_validate_grad(cfg: &Config, problem: Problem, out: &Path) -> CmdResult {
    let meas = load_measurements(cfg)?;
    let truth = cfg.truth()?;
    let v = &cfg.validate;
    let control = problem.control(&truth).scaled(v.control_scale);
    let shift = GridFunction::constant(truth.grid(), v.control_shift)?;
    let base = problem.with_control(&truth, control.axpy(1.0, &shift)?)?;
    let g_prime = GridFunction::from_fn(truth.grid(), |r| v.g_prime_coeff * r.powi(v.g_prime_power))?;
    let rows = kappa_sweep(
        problem,
        &base,
        &g_prime,
        &v.epsilons,
        &v.n_t,
        &meas,
        cfg.synth.xi0,
        &cfg.validation_solver(),
    )?;
    ensure_parent(out)?;
    write_sweep_csv(&rows, out)?;
    let mut n_ts: Vec<usize> = rows.iter().map(|r| r.n_t).collect();
    n_ts.dedup();
    for n_t in n_ts {
        let subset: Vec<_> = rows.iter().copied().filter(|r| r.n_t == n_t).collect();
        let best = subset
            .iter()
            .map(|r| (r.kappa - 1.0).abs())
            .fold(f64::INFINITY, f64::min);
        match plateau(&subset, 1e-2) {
            Some((lo, hi)) => {
                println!("n_t = {n_t}: min |kappa-1| = {best:.3e}, |kappa-1| <= 1e-2 for eps in [{lo:e}, {hi:e}]")
            }
            None => println!("n_t = {n_t}: min |kappa-1| = {best:.3e}, no eps with |kappa-1| <= 1e-2"),
        }
        if let Some((lo, hi, sup)) = tightest_window(&subset, 1e-2, 4.0) {
            println!("n_t = {n_t}: tightest 4-decade window [{lo:e}, {hi:e}] has sup |kappa-1| = {sup:.3e}");
        }
    }
    println!("wrote {}", out.display());
    Ok(EXIT_OK)
}

fn pod_outputs(result: &PodResult, ens: &SnapshotEnsemble, positions: Option<&[[f64; 2]]>, out: &Path) -> Result<f64> {
    let n = result.n_modes();
    let mut s = String::from("# columns: index,lambda\nindex,lambda\n");
    for (i, l) in result.eigenvalues.iter().enumerate() {
        let _ = writeln!(s, "{},{:.17e}", i + 1, l);
    }
    write_text(&out.join("eigenvalues.csv"), &s)?;

    let cols: Vec<String> = (1..=n).map(|i| format!("a_{i}")).collect();
    let header = format!("snapshot,{}", cols.join(","));
    let mut s = format!("# columns: {header}\n{header}\n");
    for k in 0..ens.len() {
        let vals: Vec<String> = (0..n).map(|i| format!("{:.17e}", result.amplitudes[i][k])).collect();
        let _ = writeln!(s, "{},{}", k, vals.join(","));
    }
    write_text(&out.join("amplitudes.csv"), &s)?;

    // Modes and mean: per cell with (u, v) pairs for CSV input, per
    // component for matrix input.
    let fields: Vec<&[f64]> = std::iter::once(result.mean.as_slice())
        .chain(result.modes.iter().map(|m| m.as_slice()))
        .collect();
    let names: Vec<String> = std::iter::once("mean".to_string())
        .chain((1..=n).map(|i| format!("mode_{i}")))
        .collect();
    let mut s = String::new();
    match positions {
        Some(pos) => {
            let cols: Vec<String> = names
                .iter()
                .flat_map(|m| [format!("u_{m}"), format!("v_{m}")])
                .collect();
            let header = format!("x,y,{}", cols.join(","));
            let _ = write!(s, "# columns: {header}\n{header}\n");
            for (c, p) in pos.iter().enumerate() {
                let vals: Vec<String> = fields
                    .iter()
                    .flat_map(|f| [format!("{:.17e}", f[2 * c]), format!("{:.17e}", f[2 * c + 1])])
                    .collect();
                let _ = writeln!(s, "{:.17e},{:.17e},{}", p[0], p[1], vals.join(","));
            }
        }
        None => {
            let header = format!("component,{}", names.join(","));
            let _ = write!(s, "# columns: {header}\n{header}\n");
            for c in 0..ens.dim() {
                let vals: Vec<String> = fields.iter().map(|f| format!("{:.17e}", f[c])).collect();
                let _ = writeln!(s, "{},{}", c, vals.join(","));
            }
        }
    }
    write_text(&out.join("modes.csv"), &s)?;

    let mut s = String::from("# columns: i,j,inner,deviation\ni,j,inner,deviation\n");
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let ip = ens.inner(&result.modes[i], &result.modes[j]);
            let dev = (ip - if i == j { 1.0 } else { 0.0 }).abs();
            worst = worst.max(dev);
            let _ = writeln!(s, "{},{},{:.17e},{:e}", i + 1, j + 1, ip, dev);
        }
    }
    write_text(&out.join("orthonormality.csv"), &s)?;
    Ok(worst)
}

fn cmd_pod(cfg: &Config, args: &PodArgs) -> CmdResult {
    if !args.weights.exists() {
        return Err(input_error(format!(
            "weights file {} not found",
            args.weights.display()
        )));
    }
    let (ens, positions) = match (&args.snapshots, &args.matrix) {
        (Some(dir), _) => {
            if !dir.is_dir() {
                return Err(input_error(format!("snapshot directory {} not found", dir.display())));
            }
            let (ens, pos) = load_snapshot_dir(dir, &args.weights)?;
            (ens, Some(pos))
        }
        (None, Some(path)) => {
            if !path.exists() {
                return Err(input_error(format!("matrix file {} not found", path.display())));
            }
            (load_matrix(path, &args.weights)?, None)
        }
        (None, None) => unreachable!("clap requires one input"),
    };
    let result = pod(&ens)?;
    let out = args.out.clone().unwrap_or_else(|| cfg.out("pod"));
    ensure_dir(&out)?;
    let worst = pod_outputs(&result, &ens, positions.as_deref(), &out)?;
    println!("{} snapshots, {} modes retained", ens.len(), result.n_modes());
    for (i, l) in result.eigenvalues.iter().enumerate() {
        println!("lambda_{} = {:e}", i + 1, l);
    }
    println!("max |<u_i,u_j> - delta_ij| = {worst:e}");
    println!("wrote {}", out.display());
    Ok(EXIT_OK)
}

fn cmd_simulate(cfg: &Config, files: [Option<PathBuf>; 3], n_out: usize, out: &Path) -> CmdResult {
    let truth = cfg.truth()?;
    let grid = truth.grid();
    let mut gs = [truth.g1.clone(), truth.g2.clone(), truth.g3.clone()];
    for (g, f) in gs.iter_mut().zip(&files) {
        if let Some(p) = f {
            if !p.exists() {
                return Err(input_error(format!("{} not found", p.display())));
            }
            let read = GridFunction::read_csv(p)?;
            check_grid(&read, grid, p)?;
            *g = read;
        }
    }
    let [g1, g2, g3] = gs;
    let m = DescriptorModel::new(g1, g2, g3, truth.r_circle)?;
    let sim = m.simulate(cfg.synth.xi0, cfg.synth.t_final, n_out, &cfg.solver().tol)?;
    let mut s = String::from("# columns: t,xi1,xi2,r,theta,a3\nt,xi1,xi2,r,theta,a3\n");
    for i in 0..sim.times.len() {
        let x = sim.states[i];
        let _ = writeln!(
            s,
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            sim.times[i],
            x[0],
            x[1],
            norm(x),
            sim.theta[i],
            sim.a3[i]
        );
    }
    write_text(out, &s)?;
    let mut stdout = std::io::stdout();
    let _ = writeln!(stdout, "wrote {} samples to {}", sim.times.len(), out.display());
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_and_usage_codes() {
        assert_eq!(run(["hopfid", "--help"]), EXIT_OK);
        assert_eq!(run(["hopfid", "--version"]), EXIT_OK);
        assert_eq!(run(["hopfid"]), EXIT_INPUT);
        assert_eq!(run(["hopfid", "identify", "--problem", "p9"]), EXIT_INPUT);
        assert_eq!(run(["hopfid", "pod", "--weights", "w.csv"]), EXIT_INPUT);
    }

    #[test]
    fn error_kinds_map_to_codes() {
        let code = |e: Error| Failure::from(e).code;
        assert_eq!(
            code(Error::Integration {
                t: 1.0,
                reason: "x".into()
            }),
            EXIT_NUMERICAL
        );
        assert_eq!(
            code(Error::DegenerateState {
                t: 0.0,
                r: 0.0,
                floor: 1.0
            }),
            EXIT_NUMERICAL
        );
        assert_eq!(code(Error::DegenerateDirection("x".into())), EXIT_NUMERICAL);
        assert_eq!(code(Error::NotSymmetric(1.0)), EXIT_NUMERICAL);
        assert_eq!(code(Error::Invalid("x".into())), EXIT_INPUT);
        assert_eq!(code(Error::parse("x", "y")), EXIT_INPUT);
    }

    #[test]
    fn help_lists_every_config_section() {
        let cfg = Config::default().to_toml_string();
        for line in cfg.lines().filter(|l| l.starts_with('[')) {
            assert!(CONFIG_KEYS.contains(line), "{line} missing from help");
        }
    }
}
