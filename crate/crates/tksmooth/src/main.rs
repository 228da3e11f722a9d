//! Command line for the smoothing library: dataset simulation, one-shot
//! smoothing, and the Monte Carlo studies.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime/solver failure, 3 I/O or
//! file-format failure. Output files are deterministic for a fixed seed;
//! parallelism is controlled by the standard `RAYON_NUM_THREADS` variable
//! and does not affect results.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use tksmooth::dataset::{
    kind_cells, linear_dataset, per_run_to_json, series_to_json, summary_to_csv, summary_to_json,
    vdp_dataset, write_text, Dataset, EstimateDoc,
};
use tksmooth::error::{Error, Result};
use tksmooth::experiments::{
    run_table1, run_ttrend, run_vdp, ExperimentKind, ExperimentSpec, ExperimentSummary, RunSeed,
    TABLE1_MEAS_VAR,
};
use tksmooth::models::DEFAULT_DOF;
use tksmooth::noise::ContaminationScheme;
use tksmooth::objectives::ObjectiveKind;
use tksmooth::solver::{smooth, SmootherStatus, SolverConfig};

#[derive(Parser)]
#[command(
    name = "tksmooth",
    version,
    about = "Robust Kalman smoothing: simulate data, smooth it, and run Monte Carlo studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset file (JSON, truth included).
    Simulate(SimulateArgs),
    /// Run one smoother on a dataset file and write the estimate (JSON).
    Smooth(SmoothArgs),
    /// Monte Carlo studies comparing smoothers.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    /// Linear sinusoid tracker observed in its second component.
    Linear,
    /// Van der Pol oscillator observed in its first component.
    Vdp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    /// Pure nominal Gaussian noise.
    Nominal,
    /// (1-p)·N(0, σ²) + p·N(0, phi).
    Normal,
    /// (1-p)·N(0, σ²) + p·U(lo, hi).
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct SimulateArgs {
    /// Which generator to use.
    #[arg(long, value_enum, default_value_t = ModelArg::Linear)]
    model: ModelArg,
    /// Measurement noise scheme (linear model only; the Van der Pol
    /// generator always mixes N(0, 0.25) with N(0, 100) at rate --p).
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// Contamination probability.
    #[arg(long)]
    p: Option<f64>,
    /// Contaminating parameter: outlier variance for --scheme normal, or a
    /// symmetric half-width for --scheme uniform (alternative to --lo/--hi).
    #[arg(long)]
    phi: Option<f64>,
    /// Lower bound of the uniform contamination.
    #[arg(long, allow_negative_numbers = true)]
    lo: Option<f64>,
    /// Upper bound of the uniform contamination.
    #[arg(long, allow_negative_numbers = true)]
    hi: Option<f64>,
    /// Master seed; the dataset is drawn from RNG stream (seed, 0).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Student's t degrees of freedom recorded in the model.
    #[arg(long, default_value_t = DEFAULT_DOF)]
    dof: f64,
    /// Output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SmoothArgs {
    /// Input dataset file.
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Smoother to run: gaussian_l2 | t_robust | t_trend (also accepts
    /// l2, trobust, ttrend).
    #[arg(long, default_value = "t_robust")]
    smoother: String,
    /// Output path; defaults to the input path with `.estimate.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Convergence tolerance on the predicted decrease.
    #[arg(long)]
    eps: Option<f64>,
    /// Iteration budget.
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Linear sinusoid with contaminated measurements; median trajectory MSE.
    Table1(Table1Args),
    /// Van der Pol oscillator with outlier-contaminated measurements.
    Vdp(VdpArgs),
    /// Short sinusoid with an optional unmodeled jump; x2 RMSE.
    Ttrend(TtrendArgs),
}

#[derive(Args)]
struct CommonRunArgs {
    /// Number of Monte Carlo runs.
    #[arg(long, default_value_t = 200)]
    runs: usize,
    /// Master seed; run i draws from RNG stream (seed, i).
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Student's t degrees of freedom used by the heavy-tailed smoothers.
    #[arg(long, default_value_t = DEFAULT_DOF)]
    dof: f64,
    /// Smoother to include (repeatable); default depends on the study.
    #[arg(long = "smoother")]
    smoothers: Vec<String>,
    /// Summary output path.
    #[arg(long)]
    out: PathBuf,
    /// Summary format; inferred from the --out extension when omitted
    /// (.json → json, anything else → csv).
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Convergence tolerance on the predicted decrease.
    #[arg(long)]
    eps: Option<f64>,
    /// Iteration budget per solve.
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
}

#[derive(Args)]
struct Table1Args {
    #[command(flatten)]
    common: CommonRunArgs,
    /// Measurement noise scheme.
    #[arg(long, value_enum, default_value_t = SchemeArg::Nominal)]
    scheme: SchemeArg,
    /// Contamination probability.
    #[arg(long)]
    p: Option<f64>,
    /// Outlier variance (normal) or symmetric half-width (uniform).
    #[arg(long)]
    phi: Option<f64>,
    /// Lower bound of the uniform contamination.
    #[arg(long, allow_negative_numbers = true)]
    lo: Option<f64>,
    /// Upper bound of the uniform contamination.
    #[arg(long, allow_negative_numbers = true)]
    hi: Option<f64>,
}

/// Heavy contamination slows the Gaussian fit badly (the Gauss-Newton model
/// drops residual-weighted second derivatives of the oscillator map), so this
/// study defaults --max-iter to 5000 instead of the solver's usual 200.
#[derive(Args)]
struct VdpArgs {
    #[command(flatten)]
    common: CommonRunArgs,
    /// Outlier probability in (1-p)·N(0, 0.25) + p·N(0, 100).
    #[arg(long, default_value_t = 0.0)]
    p: f64,
    /// Optional path for per-run truth/measurement/estimate series (JSON).
    #[arg(long)]
    dump: Option<PathBuf>,
}

/// A few jump-variant runs need more than the solver's default 200
/// iterations for the heavy-tailed process objective, so this study defaults
/// --max-iter to 1000.
#[derive(Args)]
struct TtrendArgs {
    #[command(flatten)]
    common: CommonRunArgs,
    /// Add the unmodeled +2 step to the truth after t = π.
    #[arg(long)]
    jump: bool,
    /// Optional path for per-run truth/measurement/estimate series (JSON).
    #[arg(long)]
    dump: Option<PathBuf>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help and --version land here too; they are not usage errors.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}

/// 1 usage, 2 runtime/solver, 3 I/O or file format.
fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidParameter { .. } => 1,
        Error::Io { .. } | Error::Serde(_) => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => run_simulate(args),
        Command::Smooth(args) => run_smooth(args),
        Command::Experiment(cmd) => run_experiment(cmd),
    }
}

fn invalid(name: &'static str, message: &str) -> Error {
    Error::InvalidParameter {
        name,
        message: message.to_string(),
    }
}

/// Assembles a contamination scheme from the flag combination, rejecting
/// flags that do not belong to the chosen scheme.
fn build_scheme(
    scheme: SchemeArg,
    p: Option<f64>,
    phi: Option<f64>,
    lo: Option<f64>,
    hi: Option<f64>,
    variance: f64,
) -> Result<ContaminationScheme> {
    let scheme = match scheme {
        SchemeArg::Nominal => {
            if p.is_some() || phi.is_some() || lo.is_some() || hi.is_some() {
                return Err(invalid(
                    "scheme",
                    "--p/--phi/--lo/--hi apply only to contaminating schemes",
                ));
            }
            ContaminationScheme::Nominal { variance }
        }
        SchemeArg::Normal => {
            if lo.is_some() || hi.is_some() {
                return Err(invalid("lo", "--lo/--hi apply only to --scheme uniform"));
            }
            let p = p.ok_or_else(|| invalid("p", "--scheme normal requires --p"))?;
            let outlier_variance =
                phi.ok_or_else(|| invalid("phi", "--scheme normal requires --phi"))?;
            ContaminationScheme::ContaminatingNormal {
                variance,
                p,
                outlier_variance,
            }
        }
        SchemeArg::Uniform => {
            let p = p.ok_or_else(|| invalid("p", "--scheme uniform requires --p"))?;
            let (lo, hi) =
                match (lo, hi, phi) {
                    (Some(lo), Some(hi), None) => (lo, hi),
                    (None, None, Some(width)) => (-width, width),
                    _ => return Err(invalid(
                        "lo",
                        "--scheme uniform needs --lo and --hi, or --phi as a symmetric half-width",
                    )),
                };
            ContaminationScheme::ContaminatingUniform {
                variance,
                p,
                lo,
                hi,
            }
        }
    };
    scheme.validate()?;
    Ok(scheme)
}

fn solver_config(eps: Option<f64>, max_iter: Option<usize>) -> Result<SolverConfig> {
    let mut cfg = SolverConfig::default();
    if let Some(eps) = eps {
        cfg.tolerance = eps;
    }
    if let Some(max_iter) = max_iter {
        cfg.max_iterations = max_iter;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_simulate(args: SimulateArgs) -> Result<()> {
    let seed = RunSeed::new(args.seed, 0);
    let dataset = match args.model {
        ModelArg::Linear => {
            let scheme = build_scheme(
                args.scheme.unwrap_or(SchemeArg::Nominal),
                args.p,
                args.phi,
                args.lo,
                args.hi,
                TABLE1_MEAS_VAR,
            )?;
            linear_dataset(&scheme, seed, args.dof)?
        }
        ModelArg::Vdp => {
            if args.scheme.is_some() || args.phi.is_some() || args.lo.is_some() || args.hi.is_some()
            {
                return Err(invalid(
                    "scheme",
                    "the Van der Pol generator fixes its noise scheme; only --p applies",
                ));
            }
            vdp_dataset(args.p.unwrap_or(0.0), seed, args.dof)?
        }
    };
    dataset.write(&args.out)?;
    println!(
        "wrote {} stages to {}",
        dataset.times.len(),
        args.out.display()
    );
    Ok(())
}

fn default_estimate_path(input: &Path) -> PathBuf {
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "estimate".to_string());
    input.with_file_name(format!("{stem}.estimate.json"))
}

fn run_smooth(args: SmoothArgs) -> Result<()> {
    let kind: ObjectiveKind = args.smoother.parse()?;
    let dataset = Dataset::read(&args.input)?;
    let model = dataset.to_model()?;
    let x0 = dataset.initial_guess(&model)?;
    let cfg = solver_config(args.eps, args.max_iter)?;
    let report = smooth(kind, &model, x0, &cfg)?;

    let out = args
        .out
        .unwrap_or_else(|| default_estimate_path(&args.input));
    let doc = EstimateDoc::new(kind, &report);
    doc.write(&out)?;
    println!(
        "{}: {} after {} iterations, objective {}",
        doc.smoother, doc.status, doc.iterations, doc.objective
    );
    println!(
        "wrote estimate ({} states x {} components) to {}",
        doc.states.len(),
        doc.states.first().map_or(0, Vec::len),
        out.display()
    );
    if report.status != SmootherStatus::ConvergedDelta {
        return Err(Error::NotConverged {
            message: format!(
                "{kind} stopped with status {}; partial estimate written to {}",
                report.status,
                out.display()
            ),
        });
    }
    Ok(())
}

fn experiment_spec(
    kind: ExperimentKind,
    common: &CommonRunArgs,
    default_smoothers: &[ObjectiveKind],
) -> Result<ExperimentSpec> {
    if !common.dof.is_finite() || common.dof <= 0.0 {
        return Err(invalid("dof", "degrees of freedom must be positive"));
    }
    let smoothers = if common.smoothers.is_empty() {
        default_smoothers.to_vec()
    } else {
        common
            .smoothers
            .iter()
            .map(|s| s.parse::<ObjectiveKind>())
            .collect::<Result<Vec<_>>>()?
    };
    Ok(ExperimentSpec {
        kind,
        runs: common.runs,
        master_seed: common.seed,
        smoothers,
        solver: solver_config(common.eps, common.max_iter)?,
        dof: common.dof,
    })
}

fn write_summary(summary: &ExperimentSummary, common: &CommonRunArgs) -> Result<()> {
    let format =
        common
            .format
            .unwrap_or_else(|| match common.out.extension().and_then(|e| e.to_str()) {
                Some("json") => FormatArg::Json,
                _ => FormatArg::Csv,
            });
    match format {
        FormatArg::Json => {
            write_text(&common.out, &summary_to_json(summary)?)?;
            println!("wrote summary to {}", common.out.display());
        }
        FormatArg::Csv => {
            write_text(&common.out, &summary_to_csv(summary))?;
            // CSV cannot carry the raw per-run metrics; keep them alongside.
            let runs_path = common.out.with_extension("runs.json");
            write_text(&runs_path, &per_run_to_json(summary)?)?;
            println!(
                "wrote summary to {} and per-run metrics to {}",
                common.out.display(),
                runs_path.display()
            );
        }
    }
    Ok(())
}

fn print_summary(summary: &ExperimentSummary) {
    let (study, scheme, p, phi) = kind_cells(&summary.kind);
    let mut banner = format!("study: {study}  scheme: {scheme}");
    if !p.is_empty() {
        banner.push_str(&format!("  p: {p}"));
    }
    if !phi.is_empty() {
        banner.push_str(&format!("  phi: {phi}"));
    }
    banner.push_str(&format!("  runs: {}", summary.runs));
    println!("{banner}");
    println!(
        "{:<14} {:>16} {:>12} {:>12}",
        "smoother",
        format!("median_{}", summary.metric.name()),
        "q025",
        "q975"
    );
    for row in &summary.rows {
        println!(
            "{:<14} {:>16.6} {:>12.6} {:>12.6}",
            row.smoother, row.median, row.q025, row.q975
        );
    }
    eprintln!("({} runs in {:.2?})", summary.runs, summary.wall_time);
}

fn run_experiment(cmd: ExperimentCommand) -> Result<()> {
    match cmd {
        ExperimentCommand::Table1(args) => {
            let scheme = build_scheme(
                args.scheme,
                args.p,
                args.phi,
                args.lo,
                args.hi,
                TABLE1_MEAS_VAR,
            )?;
            let spec = experiment_spec(
                ExperimentKind::Table1 { scheme },
                &args.common,
                &[ObjectiveKind::GaussianL2, ObjectiveKind::TRobust],
            )?;
            let summary = run_table1(&spec)?;
            print_summary(&summary);
            write_summary(&summary, &args.common)
        }
        ExperimentCommand::Vdp(args) => {
            let mut common = args.common;
            common.max_iter = common.max_iter.or(Some(5000));
            let spec = experiment_spec(
                ExperimentKind::VdpRobust {
                    outlier_probability: args.p,
                },
                &common,
                &[ObjectiveKind::GaussianL2, ObjectiveKind::TRobust],
            )?;
            let (summary, series) = run_vdp(&spec)?;
            print_summary(&summary);
            write_summary(&summary, &common)?;
            if let Some(dump) = &args.dump {
                write_text(dump, &series_to_json(&series)?)?;
                println!("wrote per-run series to {}", dump.display());
            }
            Ok(())
        }
        ExperimentCommand::Ttrend(args) => {
            let mut common = args.common;
            common.max_iter = common.max_iter.or(Some(1000));
            let spec = experiment_spec(
                ExperimentKind::TTrendStudy { jump: args.jump },
                &common,
                &ObjectiveKind::ALL,
            )?;
            let (summary, series) = run_ttrend(&spec)?;
            print_summary(&summary);
            write_summary(&summary, &common)?;
            if let Some(dump) = &args.dump {
                write_text(dump, &series_to_json(&series)?)?;
                println!("wrote per-run series to {}", dump.display());
            }
            Ok(())
        }
    }
}
