use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use ccspline::estimator::{Dataset, EstimateModel, InputSignal};
use ccspline::experiment::{export, run_experiment, ExperimentConfig};
use ccspline::kernels::{
    gram_inverse_closed_form, inverse_identity_residual, matrix_to_csv, triplets_to_coo,
    validate_grid, AnyKernel, Kernel, DEFAULT_GRID_EPS,
};
use ccspline::lti::RationalTransferFunction;
use ccspline::maxent::{empirical_covariance, paths_csv, IncrementProcess};
use ccspline::spectral::{
    eigenfunction_csv, measure_csv, truncation_csv, truncation_curve, MultiPoleSpectralBasis,
};
use ccspline::tuning::{empirical_bayes_tune, KernelFamily, OptimizerConfig};

#[derive(Parser)]
#[command(
    name = "ccspline",
    version,
    about = "Coordinate-change spline kernels for impulse response estimation"
)]
struct Cli {
    /// JSON configuration (meaning depends on the command).
    #[arg(long, global = true)]
    config: Option<String>,
    /// RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to one `t,y` dataset and write `model.json`.
    Estimate(EstimateArgs),
    /// Run a Monte-Carlo comparison (`--config` is a JSON file or `paper-sec7`).
    Experiment(ExperimentArgs),
    /// Eigenfunctions, measure and truncation error of the multiple-pole kernel.
    Spectral(SpectralArgs),
    /// Sample the Gaussian increment process whose covariance is the kernel.
    MaxentSample(MaxentArgs),
    /// Gram matrix, closed-form inverse, determinant and sparsity pattern.
    Gram(GramArgs),
}

#[derive(Args)]
struct EstimateArgs {
    /// `t,y` CSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    noise_variance: Option<f64>,
}

/// `--config` for `estimate`: either a fixed kernel or a family to tune.
#[derive(Debug, Serialize, Deserialize)]
struct EstimateSpec {
    #[serde(default)]
    kernel: Option<AnyKernel>,
    #[serde(default)]
    family: Option<KernelFamily>,
    #[serde(default = "impulse")]
    input: InputSignal,
    #[serde(default)]
    noise_variance: Option<f64>,
    #[serde(default)]
    gamma: Option<f64>,
}

fn impulse() -> InputSignal {
    InputSignal::Impulse
}

#[derive(Args)]
struct ExperimentArgs {
    /// Override the realization count.
    #[arg(long)]
    realizations: Option<usize>,
    /// Print the resolved configuration as JSON and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct SpectralArgs {
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    gain: f64,
    /// Eigenfunctions to tabulate.
    #[arg(long, default_value_t = 3)]
    count: usize,
    /// Instants for the truncation curve, `start:step:stop` or a comma list.
    #[arg(long, default_value = "0.1:0.1:4")]
    grid: String,
    /// Largest truncation level.
    #[arg(long, default_value_t = 200)]
    max_terms: usize,
    /// Abscissae for the curve files, `start:step:stop`.
    #[arg(long, default_value = "0:0.02:10")]
    plot: String,
}

#[derive(Args)]
struct MaxentArgs {
    #[arg(long, default_value = "0.1:0.1:1.5")]
    grid: String,
    #[arg(long, default_value_t = 1000)]
    paths: usize,
}

#[derive(Args)]
struct GramArgs {
    #[arg(long, default_value = "0.1:0.1:4")]
    grid: String,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Estimate(a) => estimate(&cli, a),
        Command::Experiment(a) => experiment(&cli, a),
        Command::Spectral(a) => spectral(&cli, a),
        Command::MaxentSample(a) => maxent(&cli, a),
        Command::Gram(a) => gram(&cli, a),
    }
}

/// `start:step:stop` (inclusive) or `a,b,c`.
fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 3 {
        let [start, step, stop] = [parts[0], parts[1], parts[2]].map(|p| p.trim().parse::<f64>());
        let (start, step, stop) = (start?, step?, stop?);
        if step.is_nan() || step <= 0.0 || stop < start {
            bail!("grid `{spec}` needs step > 0 and stop >= start");
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|k| start + k as f64 * step).collect());
    }
    spec.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .with_context(|| format!("bad grid value `{p}`"))
        })
        .collect()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &str) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {path}"))
}

/// Kernel from `--config` (an `AnyKernel` JSON), defaulting to `g0 = t e^{-t}`.
fn kernel_from_config(cli: &Cli) -> Result<AnyKernel> {
    match &cli.config {
        Some(path) => read_json(path),
        None => Ok(AnyKernel::coordinate_change(
            RationalTransferFunction::multiple_pole(1, 1.0, 1.0)?,
        )?),
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn estimate(cli: &Cli, args: &EstimateArgs) -> Result<()> {
    let spec: EstimateSpec = match &cli.config {
        Some(p) => read_json(p)?,
        None => bail!("estimate needs --config with a `kernel` or a `family`"),
    };
    let noise = args
        .noise_variance
        .or(spec.noise_variance)
        .context("noise variance missing (flag or config)")?;
    let data = Dataset::read_csv(&args.data, noise)?;
    let kernel = match (&spec.kernel, &spec.family) {
        (Some(k), None) => k.clone(),
        (None, Some(family)) => {
            let tuned =
                empirical_bayes_tune(&data, family, &spec.input, &OptimizerConfig::default())?;
            log::info!("tuned θ = {:?}", tuned.theta.values);
            family.kernel(&tuned.theta.values)?
        }
        _ => bail!("config must give exactly one of `kernel` and `family`"),
    };
    let model = EstimateModel::fit(kernel, spec.input, &data, spec.gamma)?;
    fs::create_dir_all(&cli.out_dir)?;
    write(
        &cli.out_dir,
        "model.json",
        &serde_json::to_string_pretty(&model)?,
    )?;
    let mut fitted = String::from("t,y,y_hat\n");
    for (t, y) in data.instants().iter().zip(data.outputs()) {
        fitted.push_str(&format!("{t},{y},{}\n", model.predict(*t)?));
    }
    write(&cli.out_dir, "fitted.csv", &fitted)?;
    println!("wrote {}", cli.out_dir.join("model.json").display());
    Ok(())
}

fn experiment(cli: &Cli, args: &ExperimentArgs) -> Result<()> {
    let mut config = ExperimentConfig::load(cli.config.as_deref().unwrap_or("paper-sec7"))?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(r) = args.realizations {
        config.realizations = r;
    }
    if args.print_config {
        println!("{}", serde_json::to_string_pretty(&config)?);
        return Ok(());
    }
    let result = run_experiment(&config)?;
    export(&result, &cli.out_dir)?;
    for c in &result.summary.cells {
        println!(
            "{:<18} median {:.4e}  q1 {:.4e}  q3 {:.4e}  failures {}",
            c.label, c.median, c.q1, c.q3, c.failures
        );
    }
    for t in &result.summary.comparisons {
        println!(
            "{} vs {} ({:?}): p = {:.3e}",
            t.a, t.b, t.alternative, t.p_value
        );
    }
    println!("results in {}", cli.out_dir.display());
    Ok(())
}

fn spectral(cli: &Cli, args: &SpectralArgs) -> Result<()> {
    let basis = MultiPoleSpectralBasis::with_gain(args.n, args.alpha, args.gain)?;
    let plot = parse_grid(&args.plot)?;
    let grid = parse_grid(&args.grid)?;
    let levels: Vec<usize> = std::iter::once(1)
        .chain((5..=args.max_terms).step_by(5))
        .collect();
    let curve = truncation_curve(&basis, &grid, &levels);
    fs::create_dir_all(&cli.out_dir)?;
    write(
        &cli.out_dir,
        "eigenfunctions.csv",
        &eigenfunction_csv(&basis, &plot, args.count),
    )?;
    write(
        &cli.out_dir,
        "measure.csv",
        &measure_csv(&basis.measure(), &plot),
    )?;
    write(&cli.out_dir, "truncation.csv", &truncation_csv(&curve))?;
    if let Some((m, e)) = curve.last() {
        println!("‖K - K_M‖_FRO at M = {m}: {e:.3e}");
    }
    Ok(())
}

fn maxent(cli: &Cli, args: &MaxentArgs) -> Result<()> {
    let kernel = kernel_from_config(cli)?;
    let grid = parse_grid(&args.grid)?;
    let process = IncrementProcess::new(&kernel, &grid)?;
    let paths = process.sample(cli.seed.unwrap_or(0), args.paths)?;
    let (cov, se) = empirical_covariance(&paths);
    fs::create_dir_all(&cli.out_dir)?;
    write(&cli.out_dir, "paths.csv", &paths_csv(&grid, &paths))?;
    write(&cli.out_dir, "covariance.csv", &matrix_to_csv(&cov))?;
    write(&cli.out_dir, "covariance_se.csv", &matrix_to_csv(&se))?;
    write(
        &cli.out_dir,
        "gram.csv",
        &matrix_to_csv(&kernel.gram(&grid)?),
    )?;
    println!("{} paths over {} instants", args.paths, grid.len());
    Ok(())
}

#[derive(Serialize)]
struct GramSummary {
    n: usize,
    log_det: f64,
    inverse_nnz: usize,
    identity_residual_fro: f64,
    sorted_order: Vec<usize>,
}

fn gram(cli: &Cli, args: &GramArgs) -> Result<()> {
    let kernel = kernel_from_config(cli)?;
    let grid = parse_grid(&args.grid)?;
    let order = validate_grid(&kernel, &grid, DEFAULT_GRID_EPS)?;
    let k = kernel.gram(&grid)?;
    let fact = gram_inverse_closed_form(&kernel, &grid)?;
    let inv = fact.inverse_dense();
    let summary = GramSummary {
        n: grid.len(),
        log_det: fact.log_det(),
        inverse_nnz: fact.inverse_nnz(),
        identity_residual_fro: inverse_identity_residual(&k, &inv),
        sorted_order: order,
    };
    fs::create_dir_all(&cli.out_dir)?;
    write(&cli.out_dir, "gram.csv", &matrix_to_csv(&k))?;
    write(&cli.out_dir, "inverse.csv", &matrix_to_csv(&inv))?;
    write(
        &cli.out_dir,
        "inverse_coo.csv",
        &triplets_to_coo(&fact.inverse_triplets()),
    )?;
    write(
        &cli.out_dir,
        "p_coo.csv",
        &triplets_to_coo(&fact.p_triplets()),
    )?;
    write(
        &cli.out_dir,
        "sparsity.txt",
        &fact.inverse_sparsity_pattern(),
    )?;
    write(
        &cli.out_dir,
        "gram_summary.json",
        &serde_json::to_string_pretty(&summary)?,
    )?;
    println!(
        "log det = {:.12e}, nnz(K⁻¹) = {}, ‖2I - KK̂⁻¹ - K̂⁻¹K‖_FRO = {:.3e}",
        summary.log_det, summary.inverse_nnz, summary.identity_residual_fro
    );
    Ok(())
}
