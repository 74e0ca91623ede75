//! Command-line front end: experiments, scans and raw simulations.
//!
//! Exit codes: 0 pass, 1 a check failed, 2 configuration or input error,
//! 3 a solver did not converge.

use clap::{Args, Parser, Subcommand};
use hydrolimit::dynamics::{simulate_pe, simulate_sns, Trajectory};
use hydrolimit::harness::checks::{bip_check, mr_check, resolvent_test, verify_multipliers};
use hydrolimit::harness::{emit_report, run_convergence_study, ReportFormat, SimConfig};
use hydrolimit::symbols::MikhlinGrid;
use hydrolimit::{Error, C64};
use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "hydrolimit", version, about = "Hydrostatic-limit solver and verification harness")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convergence study of the scaled system towards the hydrostatic one.
    Converge,
    /// Kernel-decomposition resolvent against the collocation solve.
    ResolventTest(ResolventArgs),
    /// Imaginary powers of the Stokes operator across epsilon.
    BipScan(BipArgs),
    /// Maximal-regularity ratios across epsilon.
    MrScan(MrArgs),
    /// Hydrostatic run with per-step diagnostics.
    SimulatePe(SnapshotArgs),
    /// Scaled Navier-Stokes run with per-step diagnostics.
    SimulateSns(SnsArgs),
    /// Mikhlin constants of the kernel multipliers.
    VerifyMultipliers(MultiplierArgs),
}

#[derive(Args, Debug)]
struct ResolventArgs {
    /// Spectral parameter as `a+bi`; repeatable.
    #[arg(long = "lambda", value_parser = parse_complex, default_values = ["2+1i", "50", "500"])]
    lambdas: Vec<C64>,
    #[arg(long = "epsilon", default_values_t = [1.0, 0.3, 0.1, 0.03])]
    epsilons: Vec<f64>,
    #[arg(long, default_value_t = 4)]
    nh: usize,
    #[arg(long, default_value_t = 32)]
    nz: usize,
}

#[derive(Args, Debug)]
struct BipArgs {
    #[arg(long = "epsilon", default_values_t = [1.0, 0.5, 0.1, 0.01])]
    epsilons: Vec<f64>,
    /// Scan `s ∈ [−s_max, s_max]`.
    #[arg(long, default_value_t = 5.0)]
    s_max: f64,
    #[arg(long, default_value_t = 0.5)]
    s_step: f64,
    #[arg(long, default_value_t = 4)]
    nh: usize,
    #[arg(long, default_value_t = 16)]
    nz: usize,
    #[arg(long, default_value_t = 4)]
    probes: usize,
}

#[derive(Args, Debug)]
struct MrArgs {
    #[arg(long = "epsilon", default_values_t = [1.0, 0.5, 0.1, 0.01])]
    epsilons: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    samples: usize,
    #[arg(long, default_value_t = 0.5)]
    t_final: f64,
    #[arg(long, default_value_t = 32)]
    steps: usize,
    #[arg(long, default_value_t = 4)]
    nh: usize,
    #[arg(long, default_value_t = 16)]
    nz: usize,
}

#[derive(Args, Debug)]
struct SnapshotArgs {
    /// Write every k-th state as a flat binary snapshot; 0 disables.
    #[arg(long, default_value_t = 0)]
    snapshot_every: usize,
}

#[derive(Args, Debug)]
struct SnsArgs {
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[command(flatten)]
    snapshots: SnapshotArgs,
}

#[derive(Args, Debug)]
struct MultiplierArgs {
    #[arg(long = "epsilon", default_values_t = [1.0, 0.3, 0.1, 0.01, 0.001])]
    epsilons: Vec<f64>,
}

fn parse_complex(s: &str) -> Result<C64, String> {
    s.replace(' ', "").parse::<C64>().map_err(|e| format!("`{s}` is not a complex number: {e}"))
}

/// Outcome of a subcommand.
enum Outcome {
    Pass,
    Fail,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parameter(_) | Error::Io(_) | Error::Dimension { .. } | Error::Sector { .. } => 2,
        Error::Nonconvergence(_) | Error::StepSize { .. } => 3,
        _ => 1,
    }
}

fn load_config(cli: &Cli) -> hydrolimit::Result<SimConfig> {
    let mut cfg = match &cli.config {
        Some(p) => SimConfig::load(p)?,
        None => SimConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.display().to_string();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> hydrolimit::Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| Error::Io(e.into()))?;
    writeln!(f)?;
    Ok(())
}

fn csv_writer(path: &Path, header: &[&str]) -> hydrolimit::Result<csv::Writer<File>> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    w.write_record(header).map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(w)
}

fn csv_row(w: &mut csv::Writer<File>, fields: &[String]) -> hydrolimit::Result<()> {
    w.write_record(fields).map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn verdict(passed: bool) -> Outcome {
    if passed {
        Outcome::Pass
    } else {
        Outcome::Fail
    }
}

/// Little-endian snapshot: `nh, nz` as u64, `ε, t` as f64, then the
/// coefficients of `v1, v2, w, π` as (re, im) pairs.
fn write_snapshot(path: &Path, traj: &Trajectory, i: usize) -> hydrolimit::Result<()> {
    let s = &traj.states[i];
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(&(traj.nh as u64).to_le_bytes())?;
    f.write_all(&(traj.nz as u64).to_le_bytes())?;
    f.write_all(&s.epsilon.to_le_bytes())?;
    f.write_all(&traj.times[i].to_le_bytes())?;
    for field in [&s.vh[0], &s.vh[1], &s.w, &s.pressure] {
        for z in &field.data {
            f.write_all(&z.re.to_le_bytes())?;
            f.write_all(&z.im.to_le_bytes())?;
        }
    }
    f.flush()?;
    Ok(())
}

fn emit_trajectory(out: &Path, prefix: &str, traj: &Trajectory, every: usize) -> hydrolimit::Result<()> {
    write_json(&out.join(format!("{prefix}_diagnostics.json")), &traj.diagnostics)?;
    if every > 0 {
        for i in (0..traj.states.len()).step_by(every) {
            write_snapshot(&out.join(format!("{prefix}_{i:06}.bin")), traj, i)?;
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> hydrolimit::Result<Outcome> {
    let cfg = load_config(cli)?;
    let out = PathBuf::from(&cfg.output_dir);
    std::fs::create_dir_all(&out)?;
    let seed = cfg.seed;
    match &cli.command {
        Command::Converge => {
            let report = run_convergence_study(&cfg)?;
            emit_report(&report, &out, &[ReportFormat::Csv, ReportFormat::Json, ReportFormat::Gnuplot])?;
            for r in &report.rows {
                println!(
                    "eps {:<8} E {:<12} direct {:<12} disc {:<12} agree {:?}{}",
                    r.epsilon,
                    opt(r.e_e1),
                    opt(r.direct_e1),
                    opt(r.discretization_error),
                    r.paths_agree,
                    r.failure.as_ref().map(|f| format!(" FAILED: {f}")).unwrap_or_default()
                );
            }
            println!("slope {}", opt(report.slope));
            if report.partial {
                return Err(Error::Nonconvergence("some epsilon rows failed".into()));
            }
            let agree = report.rows.iter().all(|r| r.paths_agree != Some(false));
            let slope_ok = report.slope.is_none_or(|s| s >= 0.9);
            Ok(verdict(agree && slope_ok))
        }
        Command::ResolventTest(a) => {
            let r = resolvent_test(&a.lambdas, &a.epsilons, a.nh, a.nz, seed)?;
            write_json(&out.join("resolvent.json"), &r)?;
            println!("max oracle gap {:.3e}, max residual {:.3e}", r.max_gap, r.max_residual);
            Ok(verdict(r.passed))
        }
        Command::BipScan(a) => {
            if !(a.s_step > 0.0 && a.s_max >= 0.0) {
                return Err(Error::Config("s_step must be positive and s_max nonnegative".into()));
            }
            let n = (a.s_max / a.s_step).round() as i64;
            let s: Vec<f64> = (-n..=n).map(|k| k as f64 * a.s_step).collect();
            let r = bip_check(&a.epsilons, &s, a.nh, a.nz, a.probes, seed)?;
            let mut w = csv_writer(&out.join("bip_scan.csv"), &["epsilon", "s", "estimate", "fitted_C"])?;
            for row in &r.scan.rows {
                csv_row(&mut w, &[row.epsilon.to_string(), row.s.to_string(), row.estimate.to_string(), row.fitted_c.to_string()])?;
            }
            w.flush()?;
            write_json(&out.join("bip_scan.json"), &r)?;
            println!("C(eps) spread {:.4}, dense gap {:.3e}", r.scan.spread, r.dense_gap);
            Ok(verdict(r.passed))
        }
        Command::MrScan(a) => {
            let r = mr_check(&a.epsilons, a.samples, a.t_final, a.steps, a.nh, a.nz, seed)?;
            let mut w = csv_writer(&out.join("mr_scan.csv"), &["epsilon", "dt", "estimate", "fitted_C"])?;
            for row in &r.rows {
                let c = r.constants.iter().find(|c| c.0 == row.epsilon).map(|c| c.1).unwrap_or(f64::NAN);
                csv_row(&mut w, &[row.epsilon.to_string(), row.dt.to_string(), row.ratio.ratio.to_string(), c.to_string()])?;
            }
            w.flush()?;
            write_json(&out.join("mr_scan.json"), &r)?;
            println!("ratio variation {:.4}", r.variation);
            Ok(verdict(r.passed))
        }
        Command::SimulatePe(a) => {
            let traj = simulate_pe(&cfg.sim_params()?)?;
            emit_trajectory(&out, "pe", &traj, a.snapshot_every)?;
            let last = traj.diagnostics.last().expect("at least the initial state");
            println!("t {} energy {:.6e} max cfl {:.3}", last.t, last.energy, traj.diagnostics.iter().map(|d| d.cfl).fold(0.0, f64::max));
            Ok(Outcome::Pass)
        }
        Command::SimulateSns(a) => {
            let traj = simulate_sns(&cfg.sim_params()?, a.epsilon)?;
            emit_trajectory(&out, "sns", &traj, a.snapshots.snapshot_every)?;
            let last = traj.diagnostics.last().expect("at least the initial state");
            println!("t {} energy {:.6e} max divergence {:.3e}", last.t, last.energy, traj.diagnostics.iter().map(|d| d.divergence_defect).fold(0.0, f64::max));
            Ok(Outcome::Pass)
        }
        Command::VerifyMultipliers(a) => {
            let r = verify_multipliers(&a.epsilons, &MikhlinGrid::default())?;
            let mut w = csv_writer(&out.join("multipliers.csv"), &["family", "epsilon", "lambda", "estimate", "fitted_C", "fitted_c"])?;
            for row in &r.rows {
                csv_row(
                    &mut w,
                    &[row.family.clone(), opt(row.epsilon), opt(row.lambda), row.estimate.to_string(), opt(row.fitted_c_const), opt(row.fitted_c_rate)],
                )?;
            }
            w.flush()?;
            write_json(&out.join("multipliers.json"), &r)?;
            for (f, v) in &r.variation {
                println!("{f}: variation across epsilon {v:.4}");
            }
            Ok(verdict(r.passed))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(Outcome::Pass) => {
            println!("PASS");
            ExitCode::SUCCESS
        }
        Ok(Outcome::Fail) => {
            println!("FAIL");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
