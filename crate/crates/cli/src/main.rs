use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use spintensor::classicality::{quantumness, Normalization, QuantumnessConfig};
use spintensor::experiments::{run_figure, ExperimentConfig, Figure};
use spintensor::rng::seeded;
use spintensor::spin::{
    coherent_state, depolarize, dicke_state, maximally_mixed, random_hs_state, CoherentDirection,
    Spin, SpinState,
};
use spintensor::tensor::tensor_from_state;
use spintensor::zeig::{all_z_eigenvalues, max_z_eigenvalue, min_z_eigenvalue, EigenReport, ZSolverConfig};
use spintensor::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_NO_CONVERGENCE: u8 = 3;

/// Tensor eigenvalues and quantumness of spin-j states.
#[derive(Parser, Debug)]
#[command(name = "spintensor", version, about)]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a state file.
    Mkstate(MkstateArgs),
    /// Z-eigenvalues of a state's tensor.
    Eig(EigArgs),
    /// Distance of a state to the classical states.
    Quantumness(QuantumnessArgs),
    /// Reproduce one of the ensemble experiments (fig1..fig4).
    Experiment(ExperimentArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum StateKind {
    Coherent,
    Dicke,
    MaximallyMixed,
    RandomHs,
    Depolarized,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum NormalizationArg {
    Cone,
    SumToOne,
}

fn parse_spin(s: &str) -> Result<Spin, String> {
    let j = match s.split_once('/') {
        Some((num, "2")) => num.trim().parse::<f64>().map(|n| n / 2.0),
        Some(_) => return Err(format!("{s:?}: only halves are allowed, e.g. 5/2")),
        None => s.trim().parse::<f64>(),
    }
    .map_err(|e| format!("{s:?}: {e}"))?;
    Spin::from_j(j).map_err(|e| e.to_string())
}

#[derive(Args, Debug)]
struct MkstateArgs {
    kind: StateKind,
    /// Spin quantum number, e.g. 2 or 5/2.
    #[arg(long, value_parser = parse_spin)]
    j: Spin,
    #[arg(long, default_value_t = 0.0)]
    theta: f64,
    #[arg(long, default_value_t = 0.0)]
    phi: f64,
    /// Magnetic number for dicke (default: j).
    #[arg(long, allow_hyphen_values = true)]
    m: Option<f64>,
    /// Mixing parameter a for depolarized: a rho + (1 - a) 1/(2j+1).
    #[arg(long)]
    a: Option<f64>,
    /// State to depolarize (default: a random HS state drawn from --seed).
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SolverArgs {
    /// Random starts (default: max(200, 40 N)).
    #[arg(long)]
    starts: Option<usize>,
    /// Residual tolerance ||A v^[N-1] - lambda v||.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
}

#[derive(Args, Debug)]
struct EigArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args, Debug)]
struct AtlasArgs {
    #[arg(long, default_value_t = 800)]
    atlas_size: usize,
    #[arg(long, default_value_t = 8000)]
    atlas_size_linear: usize,
    #[arg(long, default_value_t = 8)]
    iterations: usize,
    #[arg(long, value_enum, default_value = "cone")]
    normalization: NormalizationArg,
}

#[derive(Args, Debug)]
struct QuantumnessArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    atlas: AtlasArgs,
    /// Feasibility tolerance (HS residual) of the linear refinement.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    name: String,
    /// Spin values, repeated or comma separated.
    #[arg(long, value_parser = parse_spin, value_delimiter = ',', required = true)]
    j: Vec<Spin>,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    starts: Option<usize>,
    #[command(flatten)]
    atlas: AtlasArgs,
    /// Output directory for <name>.csv and <name>.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// csv writes the CSV and its JSON manifest; json writes the manifest only.
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

fn quantumness_config(atlas: &AtlasArgs, seed: u64) -> QuantumnessConfig {
    QuantumnessConfig {
        atlas_size: atlas.atlas_size,
        atlas_size_linear: atlas.atlas_size_linear,
        iterations: atlas.iterations,
        normalization: match atlas.normalization {
            NormalizationArg::Cone => Normalization::Cone,
            NormalizationArg::SumToOne => Normalization::SumToOne,
        },
        seed,
        ..QuantumnessConfig::default()
    }
}

fn read_state(path: &Path) -> spintensor::Result<SpinState> {
    SpinState::from_json(&fs::read_to_string(path)?)
}

fn emit(out: Option<&Path>, text: &str) -> spintensor::Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => {
            use std::io::Write;
            // A closed pipe (e.g. `| head`) is not an error worth reporting.
            let _ = writeln!(std::io::stdout().lock(), "{text}");
        }
    }
    Ok(())
}

fn mkstate(args: &MkstateArgs) -> spintensor::Result<()> {
    let spin = args.j;
    let state = match args.kind {
        StateKind::Coherent => coherent_state(spin, CoherentDirection::new(args.theta, args.phi)?),
        StateKind::Dicke => dicke_state(spin, args.m.unwrap_or(spin.j()))?,
        StateKind::MaximallyMixed => maximally_mixed(spin),
        StateKind::RandomHs => random_hs_state(spin, &mut seeded(args.seed)),
        StateKind::Depolarized => {
            let a = args
                .a
                .ok_or_else(|| Error::OutOfRange("depolarized needs --a".into()))?;
            let base = match &args.input {
                Some(p) => read_state(p)?,
                None => random_hs_state(spin, &mut seeded(args.seed)),
            };
            if base.spin() != spin {
                return Err(Error::DimensionMismatch { expected: spin.dim(), found: base.spin().dim() });
            }
            depolarize(&base, a)?
        }
    };
    let mut file = state.to_file();
    file.provenance = Some(json!({
        "kind": args.kind,
        "j": spin.j(),
        "theta": args.theta,
        "phi": args.phi,
        "m": args.m,
        "a": args.a,
        "input": args.input,
        "seed": args.seed,
    }));
    emit(args.out.as_deref(), &serde_json::to_string_pretty(&file)?)
}

fn eig(args: &EigArgs) -> spintensor::Result<()> {
    let state = read_state(&args.input)?;
    let cfg = ZSolverConfig {
        num_starts: args.solver.starts,
        residual_tol: args.solver.tol,
        seed: args.seed,
        ..ZSolverConfig::default()
    };
    let a = tensor_from_state(&state)?;
    let lo = min_z_eigenvalue(&a, &cfg)?;
    let hi = max_z_eigenvalue(&a, &cfg)?;
    let all = all_z_eigenvalues(&a, &cfg)?;
    let report = EigenReport::new(a.order(), all, &cfg);
    let text = match args.format {
        Format::Json => serde_json::to_string_pretty(&json!({
            "lambda_min": lo.lambda,
            "lambda_max": hi.lambda,
            "order": report.order,
            "eigenpairs": report.eigenpairs,
            "num_starts": report.num_starts,
            "seed": report.seed,
            "input": args.input,
            "config": cfg,
        }))?,
        Format::Csv => {
            let mut s = format!("# config: {}\n", serde_json::to_string(&cfg)?);
            s.push_str(&format!("# lambda_min: {}\n# lambda_max: {}\n", lo.lambda, hi.lambda));
            s.push_str("lambda,v0,v1,v2,v3,residual\n");
            for p in &report.eigenpairs {
                s.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    p.lambda, p.v[0], p.v[1], p.v[2], p.v[3], p.residual
                ));
            }
            s
        }
    };
    emit(args.out.as_deref(), text.trim_end())
}

fn quantumness_cmd(args: &QuantumnessArgs) -> spintensor::Result<()> {
    let state = read_state(&args.input)?;
    let cfg = QuantumnessConfig { feas_tol: args.tol, ..quantumness_config(&args.atlas, args.seed) };
    let report = quantumness(&state, &cfg)?;
    emit(args.out.as_deref(), &report.to_json()?)
}

fn experiment(args: &ExperimentArgs) -> spintensor::Result<()> {
    let figure: Figure = args.name.parse()?;
    let cfg = ExperimentConfig {
        seed: args.seed,
        zsolver: ZSolverConfig { num_starts: args.starts, ..ZSolverConfig::default() },
        quantumness: quantumness_config(&args.atlas, 0),
        ..ExperimentConfig::default()
    };
    cfg.zsolver.validate()?;
    cfg.quantumness.validate()?;
    let manifest = run_figure(figure, &args.j, args.samples, &cfg)?;
    match args.format {
        Format::Csv => manifest.write(&args.out)?,
        Format::Json => {
            fs::create_dir_all(&args.out)?;
            fs::write(
                args.out.join(format!("{}.json", figure.name())),
                serde_json::to_string_pretty(&manifest)?,
            )?;
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NoConvergence(_) => EXIT_NO_CONVERGENCE,
        _ => EXIT_INVALID,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be positive");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let result = match &cli.command {
        Command::Mkstate(a) => mkstate(a),
        Command::Eig(a) => eig(a),
        Command::Quantumness(a) => quantumness_cmd(a),
        Command::Experiment(a) => experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
