//! `bspw` — command-line driver for prior-weighted block-sparse recovery.
//!
//! Six subcommands: `weights` and `statdim` evaluate the weight solver and
//! the sample-complexity bound for a prior given as JSON; `recover` solves
//! one weighted recovery program from CSV data; `doa`, `phase-transition`,
//! and `robustness` run the bundled experiments and emit plot-ready tables
//! plus a `manifest.json` through the library's emission layer.
//!
//! Every experiment is deterministic in `(config, seed)`; the worker count
//! can be pinned with the `BSPW_WORKERS` environment variable without
//! affecting results.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bspw_core::harness::{
    emit_results, run_doa_experiment, run_phase_transition, run_robustness_table,
    run_statdim_sweep, DoaExperimentConfig, ExperimentResults, OutputFormat,
    PhaseTransitionConfig, PhaseTransitionTable, RobustnessConfig, SolverSettings,
    StatdimSweepConfig, WeightScheme,
};
use bspw_core::model::{expand_lambda, validate_partition};
use bspw_core::recovery::{solve_weighted, MeasurementSystem};
use bspw_core::statdim::{
    expected_bound_model1, expected_bound_model2, statdim_bound, StatDimResult,
};
use bspw_core::weights::{solve_model1, solve_model2, WeightSolverConfig};
use bspw_core::{Error, LambdaVector, PriorModel1, PriorModel2, Result, WeightVector};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::{Array1, Array2};
use serde::de::DeserializeOwned;
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "bspw", version, about = "Prior-weighted block-sparse recovery toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the optimal weights for a block-support prior
    Weights(WeightsArgs),
    /// Evaluate the sample-complexity bound, or run a bound-validation sweep
    Statdim(StatdimArgs),
    /// Solve one weighted recovery program from CSV data
    Recover(RecoverArgs),
    /// Broadband direction-of-arrival comparison across weight schemes
    Doa(DoaArgs),
    /// Success-rate sweep over the measurement count
    PhaseTransition(PhaseTransitionArgs),
    /// Weight-sensitivity table: claimed constant vs measured |Δw|/|Δp|
    Robustness(RobustnessArgs),
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

#[derive(Args)]
struct EmitArgs {
    /// Directory for emitted tables and the manifest
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Table format
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Args)]
struct WeightsArgs {
    /// Prior description (JSON, see README for the schema)
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct StatdimArgs {
    /// Bound query (JSON), or a sweep config with `--sweep`
    #[arg(long)]
    config: PathBuf,
    /// Treat the config as a bound-validation sweep and emit tables
    #[arg(long)]
    sweep: bool,
    /// Base seed override (sweep mode)
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    emit: EmitArgs,
}

#[derive(Args)]
struct RecoverArgs {
    /// Problem description (JSON): CSV paths, block sizes, weights, η
    #[arg(long)]
    config: PathBuf,
    /// Directory for solution.csv and convergence.json
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct DoaArgs {
    /// Experiment config (JSON); defaults to the bundled benchmark scene
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Number of seeds (scenes) to run
    #[arg(long)]
    trials: Option<usize>,
    #[command(flatten)]
    emit: EmitArgs,
}

#[derive(Args)]
struct PhaseTransitionArgs {
    /// Experiment config (JSON); defaults to the selected preset
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled preset to run when no config is given
    #[arg(long, value_enum, default_value_t = PresetArg::Reduced)]
    preset: PresetArg,
    /// Base seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Trials per grid point override
    #[arg(long)]
    trials: Option<usize>,
    #[command(flatten)]
    emit: EmitArgs,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum PresetArg {
    /// n = 100, 30 trials per point; minutes on one core
    Reduced,
    /// n = 250, 100 trials per point; tens of minutes on one core
    Full,
}

#[derive(Args)]
struct RobustnessArgs {
    /// Table config (JSON); defaults to k ∈ {1,5,10} on p = 0.15..0.90
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    emit: EmitArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_workers().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Honors `BSPW_WORKERS` before any parallel region spins up the default
/// thread pool. Results never depend on the worker count.
fn init_workers() -> Result<()> {
    match std::env::var("BSPW_WORKERS") {
        Err(_) => Ok(()),
        Ok(v) => {
            let n: usize = v.parse().map_err(|_| {
                Error::InvalidArgument(format!("BSPW_WORKERS must be a positive integer, got {v:?}"))
            })?;
            if n == 0 {
                return Err(Error::InvalidArgument(
                    "BSPW_WORKERS must be a positive integer".into(),
                ));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Error::InvalidArgument(format!("worker pool setup failed: {e}")))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Weights(a) => cmd_weights(a),
        Command::Statdim(a) => cmd_statdim(a),
        Command::Recover(a) => cmd_recover(a),
        Command::Doa(a) => cmd_doa(a),
        Command::PhaseTransition(a) => cmd_phase_transition(a),
        Command::Robustness(a) => cmd_robustness(a),
    }
}

// ---------------------------------------------------------------------------
// Input schemas
// ---------------------------------------------------------------------------

/// Prior description accepted by `weights` and `statdim`.
///
/// `per_block`: one activation probability per block of the given sizes.
/// `sets`: `q` equal-size-`k` blocks, disjoint index sets with accuracies;
/// an uncovered remainder needs `complement_alpha`.
#[derive(Debug, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
enum PriorSpec {
    PerBlock {
        block_sizes: Vec<usize>,
        probabilities: Vec<f64>,
    },
    Sets {
        q: usize,
        k: usize,
        sets: Vec<Vec<usize>>,
        alphas: Vec<f64>,
        #[serde(default)]
        complement_alpha: Option<f64>,
    },
}

#[derive(Debug, Deserialize)]
struct StatdimSpec {
    prior: PriorSpec,
    /// Per-block weights (`per_block`) or per-set λ (`sets`); solved
    /// optimally from the prior when omitted.
    #[serde(default)]
    weights: Option<Vec<f64>>,
    /// Active block indices: present → fixed-support bound; absent →
    /// prior-averaged bound.
    #[serde(default)]
    support: Option<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
struct RecoverSpec {
    /// Headerless CSV, one matrix row per line.
    matrix_csv: PathBuf,
    /// Headerless CSV holding the observation vector (one column or one row).
    observation_csv: PathBuf,
    block_sizes: Vec<usize>,
    /// Per-block weights; all-ones when omitted.
    #[serde(default)]
    weights: Option<Vec<f64>>,
    /// Noise-ball radius; 0 solves the equality-constrained program.
    #[serde(default)]
    eta: f64,
    #[serde(default)]
    solver: SolverSettings,
}

fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

/// Paths inside a config resolve relative to the config file itself, so a
/// problem directory stays relocatable.
fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new(".")).join(p)
    }
}

// ---------------------------------------------------------------------------
// weights / statdim
// ---------------------------------------------------------------------------

/// Solved weights plus everything needed to reuse them: the per-set λ for a
/// set prior, and the per-block expansion for both.
fn solved_weights(spec: &PriorSpec) -> Result<serde_json::Value> {
    let cfg = WeightSolverConfig::default();
    match spec {
        PriorSpec::PerBlock {
            block_sizes,
            probabilities,
        } => {
            let n: usize = block_sizes.iter().sum();
            let partition = validate_partition(n, block_sizes)?;
            let prior = PriorModel1::clamped(probabilities.clone())?;
            let w = solve_model1(&prior, &partition, &cfg)?;
            Ok(serde_json::json!({ "model": "per_block", "weights": w.as_slice() }))
        }
        PriorSpec::Sets {
            q,
            k,
            sets,
            alphas,
            complement_alpha,
        } => {
            let prior = PriorModel2::new(*q, sets.clone(), alphas.clone(), *complement_alpha)?;
            let lambda = solve_model2(&prior, *k, &cfg)?;
            let partition = validate_partition(q * k, &vec![*k; *q])?;
            let w = expand_lambda(&partition, &prior, &lambda)?;
            Ok(serde_json::json!({
                "model": "sets",
                "lambda": lambda.as_slice(),
                "weights": w.as_slice(),
            }))
        }
    }
}

fn cmd_weights(args: WeightsArgs) -> Result<()> {
    let spec: PriorSpec = load_json(&args.config)?;
    let out = solved_weights(&spec)?;
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn bound_json(r: &StatDimResult<f64>, weights: &[f64]) -> serde_json::Value {
    // t_star can be the +∞ sentinel (empty support); JSON has no inf
    // literal, so it serializes as null in that case.
    serde_json::json!({
        "bound": r.bound,
        "t_star": r.t_star,
        "per_block_terms": r.per_block_terms,
        "weights": weights,
    })
}

fn cmd_statdim(args: StatdimArgs) -> Result<()> {
    if args.sweep {
        let mut cfg: StatdimSweepConfig = load_json(&args.config)?;
        if let Some(seed) = args.seed {
            cfg.seed = seed;
        }
        let rows = run_statdim_sweep(&cfg)?;
        println!(
            "{} rows ({} schemes × {} supports)",
            rows.len(),
            cfg.schemes.len(),
            cfg.supports
        );
        let files = emit_results(
            &ExperimentResults::StatdimSweep(rows),
            &serde_json::to_string_pretty(&cfg)?,
            cfg.seed,
            args.emit.format.into(),
            &args.emit.out,
        )?;
        print_files(&files);
        return Ok(());
    }

    let spec: StatdimSpec = load_json(&args.config)?;
    let cfg = WeightSolverConfig::default();
    let out = match &spec.prior {
        PriorSpec::PerBlock {
            block_sizes,
            probabilities,
        } => {
            let n: usize = block_sizes.iter().sum();
            let partition = validate_partition(n, block_sizes)?;
            let prior = PriorModel1::clamped(probabilities.clone())?;
            let w = match &spec.weights {
                Some(w) => WeightVector::new(w.clone())?,
                None => solve_model1(&prior, &partition, &cfg)?,
            };
            let r = match &spec.support {
                Some(support) => statdim_bound(&partition, support, &w)?,
                None => expected_bound_model1(&partition, &prior, &w)?,
            };
            bound_json(&r, w.as_slice())
        }
        PriorSpec::Sets {
            q,
            k,
            sets,
            alphas,
            complement_alpha,
        } => {
            let prior = PriorModel2::new(*q, sets.clone(), alphas.clone(), *complement_alpha)?;
            let lambda = match &spec.weights {
                Some(l) => LambdaVector::new(l.clone())?,
                None => solve_model2(&prior, *k, &cfg)?,
            };
            let partition = validate_partition(q * k, &vec![*k; *q])?;
            let w = expand_lambda(&partition, &prior, &lambda)?;
            let r = match &spec.support {
                Some(support) => statdim_bound(&partition, support, &w)?,
                None => expected_bound_model2(&prior, *k, &lambda)?,
            };
            bound_json(&r, w.as_slice())
        }
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

// ---------------------------------------------------------------------------
// recover
// ---------------------------------------------------------------------------

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(format!("{}: {e}", path.display())))
}

fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut flat = Vec::new();
    let mut rows = 0usize;
    let mut width = None;
    for record in rdr.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::DimensionMismatch(format!(
                "{}: row {} has {} fields, first row has {w}",
                path.display(),
                rows + 1,
                record.len()
            )));
        }
        for field in record.iter() {
            flat.push(field.parse::<f64>().map_err(|_| {
                Error::InvalidArgument(format!(
                    "{}: {field:?} is not a real number",
                    path.display()
                ))
            })?);
        }
        rows += 1;
    }
    let width = width.unwrap_or(0);
    Array2::from_shape_vec((rows, width), flat)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn read_vector_csv(path: &Path) -> Result<Array1<f64>> {
    let m = read_matrix_csv(path)?;
    let (r, c) = m.dim();
    if r != 1 && c != 1 {
        return Err(Error::DimensionMismatch(format!(
            "{}: expected a vector, got a {r}×{c} table",
            path.display()
        )));
    }
    Ok(Array1::from_iter(m.iter().copied()))
}

fn cmd_recover(args: RecoverArgs) -> Result<()> {
    let spec: RecoverSpec = load_json(&args.config)?;
    let a = read_matrix_csv(&resolve(&args.config, &spec.matrix_csv))?;
    let y = read_vector_csv(&resolve(&args.config, &spec.observation_csv))?;
    let n: usize = spec.block_sizes.iter().sum();
    let partition = validate_partition(n, &spec.block_sizes)?;
    let w = match spec.weights {
        Some(w) => WeightVector::new(w)?,
        None => WeightVector::uniform(partition.q()),
    };
    let sys = MeasurementSystem::new(a, y, spec.eta)?;
    let result = solve_weighted(&partition, &w, &sys, &spec.solver.to_config())?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", args.out.display()))))?;
    let sol_path = args.out.join("solution.csv");
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(&sol_path)
        .map_err(|e| csv_err(&sol_path, e))?;
    wtr.write_record(["x"]).map_err(|e| csv_err(&sol_path, e))?;
    for v in result.x_hat.iter() {
        wtr.serialize(v).map_err(|e| csv_err(&sol_path, e))?;
    }
    wtr.flush()
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", sol_path.display()))))?;

    let conv_path = args.out.join("convergence.json");
    let conv = serde_json::json!({
        "iterations": result.iterations,
        "converged": result.converged,
        "primal_residual": result.primal_residual,
        "dual_residual": result.dual_residual,
        "objective": result.objective,
    });
    std::fs::write(&conv_path, serde_json::to_string_pretty(&conv)?)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", conv_path.display()))))?;

    println!(
        "solved in {} iterations (converged: {}), objective {:.6e}",
        result.iterations, result.converged, result.objective
    );
    println!("wrote {} and {}", sol_path.display(), conv_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

fn print_files(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn print_crossovers(table: &PhaseTransitionTable, schemes: &[WeightScheme]) {
    for &scheme in schemes {
        match table.crossover(scheme) {
            Some(m) => println!("{scheme:<9} 50% success at m ≈ {m:.1}"),
            None => println!("{scheme:<9} curve never crosses 50%"),
        }
    }
}

fn cmd_phase_transition(args: PhaseTransitionArgs) -> Result<()> {
    let mut cfg: PhaseTransitionConfig = match &args.config {
        Some(path) => load_json(path)?,
        None => match args.preset {
            PresetArg::Reduced => PhaseTransitionConfig::benchmark_reduced(),
            PresetArg::Full => PhaseTransitionConfig::benchmark_full(),
        },
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    let table = run_phase_transition(&cfg)?;
    print_crossovers(&table, &cfg.schemes);
    let files = emit_results(
        &ExperimentResults::PhaseTransition(table),
        &serde_json::to_string_pretty(&cfg)?,
        cfg.seed,
        args.emit.format.into(),
        &args.emit.out,
    )?;
    print_files(&files);
    Ok(())
}

fn cmd_doa(args: DoaArgs) -> Result<()> {
    let mut cfg: DoaExperimentConfig = match &args.config {
        Some(path) => load_json(path)?,
        None => DoaExperimentConfig::benchmark(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = args.trials {
        cfg.num_seeds = trials;
    }
    let table = run_doa_experiment(&cfg)?;
    for &scheme in &cfg.schemes {
        let rows: Vec<_> = table.rows.iter().filter(|r| r.scheme == scheme).collect();
        let clean = rows.iter().filter(|r| r.clean).count();
        let spurious: usize = rows.iter().map(|r| r.spurious).sum();
        println!(
            "{scheme:<9} clean scenes {clean}/{} (total spurious peaks {spurious})",
            rows.len()
        );
    }
    let files = emit_results(
        &ExperimentResults::Doa(table),
        &serde_json::to_string_pretty(&cfg)?,
        cfg.seed,
        args.emit.format.into(),
        &args.emit.out,
    )?;
    print_files(&files);
    Ok(())
}

fn default_robustness_config() -> RobustnessConfig {
    RobustnessConfig {
        k_list: vec![1, 5, 10],
        p_grid: (0..16).map(|i| 0.15 + 0.05 * i as f64).collect(),
        delta_p: 1e-3,
    }
}

fn cmd_robustness(args: RobustnessArgs) -> Result<()> {
    let cfg: RobustnessConfig = match &args.config {
        Some(path) => load_json(path)?,
        None => default_robustness_config(),
    };
    let rows = run_robustness_table(&cfg)?;
    for &k in &cfg.k_list {
        let krows: Vec<_> = rows.iter().filter(|r| r.k == k).collect();
        let violations = krows.iter().filter(|r| r.violation).count();
        let worst = krows
            .iter()
            .map(|r| r.sensitivity / r.c)
            .fold(f64::MIN, f64::max);
        println!(
            "k = {k:<3} worst |Δw|/Δp = {worst:.3}·c, {violations}/{} cells exceed c",
            krows.len()
        );
    }
    let files = emit_results(
        &ExperimentResults::Robustness(rows),
        &serde_json::to_string_pretty(&cfg)?,
        0,
        args.emit.format.into(),
        &args.emit.out,
    )?;
    print_files(&files);
    Ok(())
}
