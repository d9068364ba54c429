//! Command-line front end: argument parsing, configuration files and report
//! emission.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{
    blowup_scan, classify_kappa, hfb_quotient_scan, hfb_scaling_trajectory,
    trajectory_trial_state, zero_energy_coupling, BlowupConfig, HfbScanConfig, KappaEntry,
};
use crate::check::{run_checks, CheckOptions};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::grid::SpectralGrid;
use crate::minimizer::{solve_kappa_n, CriticalCouplingResult, KappaConfig, DEFAULT_WIDTH_FRACTION};
use crate::report::{parse_config, with_provenance, write_csv, write_json, Provenance};
use crate::thomas_fermi::{tau_c, TfConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "relstar", version, args_override_self = true, about = "Critical couplings and ground states of gravitating fermions")]
pub struct Cli {
    /// Worker threads (falls back to RELSTAR_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Flat `key = value` file using the flag names; flags given on the
    /// command line take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Critical coupling kappa_N of the HF Gagliardo-Nirenberg quotient.
    KappaN(KappaArgs),
    /// Thomas-Fermi constant tau_c.
    TfTau(TfArgs),
    /// Energy blow-up scan below kappa_N.
    Blowup(BlowupArgs),
    /// Massive HFB energy along a dilation trajectory.
    HfbScale(HfbScaleArgs),
    /// Existence classification of a coupling against a kappa_N table.
    Classify(ClassifyArgs),
    /// Run the invariant suite.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolveArgs {
    #[arg(long, default_value_t = 48)]
    pub grid: usize,
    #[arg(long = "box", default_value_t = 1.0)]
    pub box_length: f64,
    #[arg(long, default_value_t = 4)]
    pub seeds: usize,
    #[arg(long, default_value_t = 5000)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Skip the re-solve on the enlarged grid.
    #[arg(long)]
    pub no_confinement: bool,
}

impl SolveArgs {
    fn kappa_config(&self) -> KappaConfig {
        KappaConfig {
            grid_points: self.grid,
            box_length: self.box_length,
            seeds: self.seeds,
            width_fraction: DEFAULT_WIDTH_FRACTION,
            max_iterations: self.max_iterations,
            gradient_tolerance: self.tol,
            confinement_check: !self.no_confinement,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct KappaArgs {
    #[arg(long = "N")]
    pub n: usize,
    #[command(flatten)]
    pub solve: SolveArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TfArgs {
    #[arg(long, default_value_t = 2048)]
    pub points: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub r_min: f64,
    #[arg(long, default_value_t = 1e3)]
    pub r_max: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BlowupArgs {
    #[arg(long = "N")]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub m: f64,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.9, 0.95, 0.98, 0.99, 0.995])]
    pub fractions: Vec<f64>,
    /// Rows nearest kappa_N left out of the fits.
    #[arg(long, default_value_t = 0)]
    pub exclude_closest: usize,
    #[command(flatten)]
    pub solve: SolveArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct HfbScaleArgs {
    #[arg(long, default_value_t = 64.0)]
    pub beta_max: f64,
    #[arg(long, default_value_t = 1.0)]
    pub m: f64,
    /// Coupling; defaults to the zero-energy coupling of the trial state.
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long, default_value_t = 32)]
    pub grid: usize,
    #[arg(long = "box", default_value_t = 1.0)]
    pub box_length: f64,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_4)]
    pub angle: f64,
    /// Also minimize the HFB quotient at these traces.
    #[arg(long, value_delimiter = ',')]
    pub traces: Vec<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub kappa: f64,
    /// CSV with columns `n,kappa,confinement_error`; computed when absent.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub n_max: usize,
    #[command(flatten)]
    pub solve: SolveArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CheckArgs {
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub hardy_kato_points: usize,
    #[arg(long, default_value_t = 200)]
    pub hardy_kato_states: usize,
    #[arg(long, default_value_t = 20)]
    pub oracle_states: usize,
    #[arg(long, default_value_t = 20)]
    pub gradient_directions: usize,
    /// Multiplies the Coulomb table seen by the Hardy-Kato sampler.
    #[arg(long, default_value_t = 1.0)]
    pub coulomb_scale: f64,
}

pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::NotConverged(_) => EXIT_NOT_CONVERGED,
        Error::Invariant(_) => EXIT_INVARIANT,
        _ => EXIT_USAGE,
    }
}

/// Splices the config file entries in front of the explicit flags of the
/// subcommand so that the command line wins.
fn expand_config(args: Vec<OsString>) -> std::result::Result<Vec<OsString>, String> {
    let strs: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut path = None;
    for (i, a) in strs.iter().enumerate() {
        if a == "--config" {
            path = strs.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let entries = parse_config(&text).map_err(|e| format!("config {path}: {e}"))?;
    let names = ["kappa-n", "tf-tau", "blowup", "hfb-scale", "classify", "check"];
    let at = strs
        .iter()
        .position(|a| names.contains(&a.as_str()))
        .ok_or_else(|| "no subcommand given".to_string())?;
    let mut extra = Vec::new();
    for (k, v) in entries {
        match v.as_str() {
            "true" => extra.push(format!("--{k}")),
            "false" => {}
            _ => {
                extra.push(format!("--{k}"));
                extra.push(v);
            }
        }
    }
    let mut out: Vec<OsString> = args[..=at].to_vec();
    out.extend(extra.into_iter().map(OsString::from));
    out.extend(args[at + 1..].iter().cloned());
    Ok(out)
}

fn configure_threads(threads: Option<usize>) -> std::result::Result<(), String> {
    let threads = match threads {
        Some(t) => Some(t),
        None => match std::env::var("RELSTAR_THREADS") {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| format!("RELSTAR_THREADS={v} is not a count"))?),
            Err(_) => None,
        },
    };
    if let Some(t) = threads {
        if t == 0 {
            return Err("thread count must be positive".into());
        }
        // a pool already built by an earlier call in this process is kept
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads(cli.threads) {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cli: &Cli) -> Result<i32> {
    fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::KappaN(a) => kappa_n(&cli.out, a),
        Command::TfTau(a) => tf_tau(&cli.out, a),
        Command::Blowup(a) => blowup(&cli.out, a),
        Command::HfbScale(a) => hfb_scale(&cli.out, a),
        Command::Classify(a) => classify(&cli.out, a),
        Command::Check(a) => check(&cli.out, a),
    }
}

fn emit<C: Serialize, B: Serialize>(path: &Path, command: &str, config: &C, body: &B) -> Result<()> {
    let provenance = Provenance::new(command, config)?;
    write_json(path, &with_provenance(&provenance, body)?)
}

fn solve_checked(n: usize, solve: &SolveArgs) -> Result<CriticalCouplingResult> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "N = {n}: kappa_1 is infinite, a single fermion has no self-interaction"
        )));
    }
    solve_kappa_n(n, &solve.kappa_config())
}

fn kappa_n(out: &Path, a: &KappaArgs) -> Result<i32> {
    let result = solve_checked(a.n, &a.solve)?;
    let stem = format!("kappa_n_{}", a.n);
    emit(&out.join(format!("{stem}.json")), "kappa-n", a, &result)?;
    Checkpoint::from_orbitals(&result.optimizer, 0.0, result.kappa).save(out.join(format!("{stem}.rstr")))?;
    let rows: Vec<Vec<f64>> = result
        .log
        .iter()
        .map(|r| vec![r.iteration as f64, r.objective, r.gradient_norm, r.step])
        .collect();
    write_csv(out.join(format!("{stem}_iterates.csv")), &["iteration", "objective", "gradient_norm", "step"], &rows)?;
    println!(
        "kappa_{} = {} (confinement error {:.3e}, converged {})",
        a.n,
        crate::report::format_f64(result.kappa),
        result.confinement_error,
        result.converged
    );
    Ok(if result.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn tf_tau(out: &Path, a: &TfArgs) -> Result<i32> {
    let config = TfConfig { points: a.points, r_min: a.r_min, r_max: a.r_max, tolerance: a.tol, ..TfConfig::default() };
    let tau = tau_c(&config)?;
    emit(&out.join("tf_tau.json"), "tf-tau", a, &tau)?;
    let m = &tau.minimizer;
    let rows: Vec<Vec<f64>> = m.radii.iter().zip(&m.density).map(|(r, f)| vec![*r, *f]).collect();
    write_csv(out.join("tf_profile.csv"), &["r", "density"], &rows)?;
    println!(
        "tau_c = {} (refinement delta {:.3e}, converged {})",
        crate::report::format_f64(tau.value),
        tau.refinement_delta,
        m.converged
    );
    Ok(if m.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn blowup(out: &Path, a: &BlowupArgs) -> Result<i32> {
    let critical = solve_checked(a.n, &a.solve)?;
    let mut config = BlowupConfig {
        mass: a.m,
        fractions: a.fractions.clone(),
        exclude_closest: a.exclude_closest,
        ..BlowupConfig::default()
    };
    config.energy.grid_points = a.solve.grid;
    config.energy.max_iterations = a.solve.max_iterations;
    config.energy.gradient_tolerance = a.solve.tol;
    let scan = blowup_scan(&critical, &config)?;
    emit(&out.join("blowup.json"), "blowup", a, &scan)?;
    scan.table.write_csv(out.join("blowup.csv"))?;
    let show = |f: &Option<crate::analysis::RateFit>| {
        f.map(|f| format!("{:.4}", f.exponent)).unwrap_or_else(|| "n/a".into())
    };
    println!(
        "kappa_{} = {}; epsilon exponent {}; gap exponent {}; closest ratio {:.4}",
        a.n,
        crate::report::format_f64(scan.kappa_critical),
        show(&scan.epsilon_fit),
        show(&scan.gap_fit),
        scan.ratio_closest
    );
    let all_converged = scan.rows.iter().all(|r| r.converged);
    Ok(if all_converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

#[derive(Serialize)]
struct HfbScaleReport {
    zero_energy_coupling: f64,
    trajectory: crate::analysis::ScalingTrajectory,
    #[serde(skip_serializing_if = "Option::is_none")]
    quotient_scan: Option<crate::analysis::HfbQuotientScan>,
}

fn hfb_scale(out: &Path, a: &HfbScaleArgs) -> Result<i32> {
    if !(a.beta_max >= 1.0) {
        return Err(Error::InvalidParameter(format!("beta-max must be at least 1, got {}", a.beta_max)));
    }
    let grid = SpectralGrid::new(a.grid, a.box_length)?;
    let state = trajectory_trial_state(&grid, 0.08 * a.box_length, a.angle)?;
    let zero = zero_energy_coupling(&state)?;
    let kappa = a.kappa.unwrap_or(zero);
    let mut betas = Vec::new();
    let mut b = 1.0;
    while b <= a.beta_max * (1.0 + 1e-12) {
        betas.push(b);
        b *= 2.0;
    }
    let trajectory = hfb_scaling_trajectory(&state, a.m, kappa, &betas)?;
    trajectory.table.write_csv(out.join("hfb_scale.csv"))?;
    let quotient_scan = if a.traces.is_empty() {
        None
    } else {
        let config = HfbScanConfig { grid_points: a.grid, box_length: a.box_length, ..HfbScanConfig::default() };
        let scan = hfb_quotient_scan(&a.traces, &config)?;
        scan.table.write_csv(out.join("hfb_quotient.csv"))?;
        Some(scan)
    };
    println!(
        "zero-energy coupling {}; kappa {}; identity residual {:.3e}; gap slope {}",
        crate::report::format_f64(zero),
        crate::report::format_f64(kappa),
        trajectory.max_identity_residual,
        trajectory.gap_slope.map(|f| format!("{:.4}", f.exponent)).unwrap_or_else(|| "n/a".into())
    );
    let converged = quotient_scan.as_ref().map_or(true, |s| s.rows.iter().all(|r| r.converged));
    let report = HfbScaleReport { zero_energy_coupling: zero, trajectory, quotient_scan };
    emit(&out.join("hfb_scale.json"), "hfb-scale", a, &report)?;
    Ok(if converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

pub fn read_kappa_table(path: &Path) -> Result<Vec<KappaEntry>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct ClassifyReport {
    classification: crate::analysis::Classification,
    table: Vec<KappaEntry>,
}

fn classify(out: &Path, a: &ClassifyArgs) -> Result<i32> {
    let table = match &a.table {
        Some(p) => read_kappa_table(p)?,
        None => {
            let mut t = Vec::new();
            for n in 2..=a.n_max {
                let r = solve_checked(n, &a.solve)?;
                if !r.converged {
                    return Err(Error::NotConverged(format!("kappa_{n} solve")));
                }
                t.push(KappaEntry { n, kappa: r.kappa, confinement_error: r.confinement_error });
            }
            let rows: Vec<Vec<f64>> = t.iter().map(|e| vec![e.n as f64, e.kappa, e.confinement_error]).collect();
            write_csv(out.join("kappa_table.csv"), &["n", "kappa", "confinement_error"], &rows)?;
            t
        }
    };
    let classification = classify_kappa(a.kappa, &table)?;
    println!(
        "kappa {}: {:?}, N_HF = {}",
        crate::report::format_f64(a.kappa),
        classification.exists,
        classification.n_hf
    );
    emit(&out.join("classify.json"), "classify", a, &ClassifyReport { classification, table })?;
    Ok(EXIT_OK)
}

fn check(out: &Path, a: &CheckArgs) -> Result<i32> {
    let options = CheckOptions {
        seed: a.seed,
        hardy_kato_points: a.hardy_kato_points,
        hardy_kato_states: a.hardy_kato_states,
        oracle_states: a.oracle_states,
        gradient_directions: a.gradient_directions,
        coulomb_scale: a.coulomb_scale,
        ..CheckOptions::default()
    };
    let report = run_checks(&options)?;
    emit(&out.join("check.json"), "check", a, &report)?;
    for r in &report.results {
        println!("{} {} (worst {:.3e}, tolerance {:.1e}) {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.worst, r.tolerance, r.detail);
    }
    Ok(if report.all_passed { EXIT_OK } else { EXIT_INVARIANT })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_entries_precede_explicit_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        fs::write(&cfg, "# comment\nseeds = 2\ngrid = 16\nno-confinement = true\n").unwrap();
        let args: Vec<OsString> = ["relstar", "--config", cfg.to_str().unwrap(), "kappa-n", "--N", "2", "--grid", "24"]
            .iter()
            .map(OsString::from)
            .collect();
        let expanded = expand_config(args).unwrap();
        let cli = Cli::try_parse_from(expanded).unwrap();
        match cli.command {
            Command::KappaN(a) => {
                assert_eq!(a.solve.seeds, 2);
                assert_eq!(a.solve.grid, 24);
                assert!(a.solve.no_confinement);
            }
            _ => panic!("wrong subcommand"),
        }
    }

    #[test]
    fn single_particle_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let code = run(["relstar", "--out", dir.path().to_str().unwrap(), "kappa-n", "--N", "1", "--grid", "8"]);
        assert_eq!(code, EXIT_USAGE);
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        assert_eq!(run(["relstar", "tf-tau", "--bogus"]), EXIT_USAGE);
    }

    #[test]
    fn error_codes() {
        assert_eq!(exit_code(&Error::NotConverged("x".into())), EXIT_NOT_CONVERGED);
        assert_eq!(exit_code(&Error::Invariant("x".into())), EXIT_INVARIANT);
        assert_eq!(exit_code(&Error::InvalidParameter("x".into())), EXIT_USAGE);
    }
}
