//! Seeded Monte-Carlo comparison of kernel families and tuning methods.
//!
//! Realization `r` draws its noise from the ChaCha stream `(seed, r)`, so
//! results do not depend on scheduling or on how many realizations run.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, Distribution as _, Max, Min, OrderStatistics};

use crate::error::{Error, Result};
use crate::estimator::{Dataset, EstimateModel, InputSignal, FUNCTIONAL_QUAD};
use crate::lti::{RationalTransferFunction, RealPole};
use crate::quadrature::integrate;
use crate::tuning::{
    empirical_bayes_tune, oracle_tune, rank_sum_test, Alternative, KernelFamily, OptimizerConfig,
    RankSumMethod, TraceRow, TuningMethod,
};

/// One (family, method) combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub family: KernelFamily,
    pub method: TuningMethod,
}

impl Cell {
    pub fn label(&self) -> String {
        format!("{}-{}", self.family.name(), self.method.name())
    }
}

/// Rank-sum comparison between two cells, named by [`Cell::label`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSpec {
    pub a: String,
    pub b: String,
    pub alternative: Alternative,
}

/// Evenly spaced plotting grid `start, start + step, …, ≤ stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlotGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl PlotGrid {
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub system: RationalTransferFunction,
    pub input: InputSignal,
    pub sampling_period: f64,
    pub samples: usize,
    pub noise_variance: f64,
    pub realizations: usize,
    pub seed: u64,
    pub cells: Vec<Cell>,
    #[serde(default)]
    pub comparisons: Vec<ComparisonSpec>,
    pub plot_grid: PlotGrid,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

impl ExperimentConfig {
    /// Two-pole target `1/((s+1)(s+3))`, impulsive input, `T_s = 0.1`,
    /// `N = 100`, `σ² = 1e-4`, 300 realizations, proposed and TC kernels
    /// each tuned by Empirical Bayes and by the oracle MSE.
    pub fn reference_study() -> Self {
        let system = RationalTransferFunction::new(
            1.0,
            vec![
                RealPole {
                    alpha: 1.0,
                    mult: 1,
                },
                RealPole {
                    alpha: 3.0,
                    mult: 1,
                },
            ],
            vec![],
        )
        .expect("valid target");
        let cells = [KernelFamily::ProposedTwoPole, KernelFamily::Tc]
            .into_iter()
            .flat_map(|family| {
                [TuningMethod::EmpiricalBayes, TuningMethod::OracleMse]
                    .into_iter()
                    .map(move |method| Cell {
                        family: family.clone(),
                        method,
                    })
            })
            .collect();
        Self {
            name: "paper-sec7".into(),
            system,
            input: InputSignal::Impulse,
            sampling_period: 0.1,
            samples: 100,
            noise_variance: 1e-4,
            realizations: 300,
            seed: 20_190_601,
            cells,
            comparisons: vec![
                ComparisonSpec {
                    a: "proposed-eb".into(),
                    b: "tc-oracle".into(),
                    alternative: Alternative::TwoSided,
                },
                ComparisonSpec {
                    a: "proposed-oracle".into(),
                    b: "tc-oracle".into(),
                    alternative: Alternative::ALess,
                },
            ],
            plot_grid: PlotGrid {
                start: 0.0,
                stop: 10.0,
                step: 0.05,
            },
            optimizer: OptimizerConfig::default(),
        }
    }

    /// A built-in name or a path to a JSON file.
    pub fn load(name_or_path: &str) -> Result<Self> {
        if name_or_path == "paper-sec7" {
            return Ok(Self::reference_study());
        }
        let text = fs::read_to_string(name_or_path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sampling_period > 0.0 && self.sampling_period.is_finite()) {
            return Err(Error::Config("sampling period must be positive".into()));
        }
        if self.samples == 0 || self.realizations == 0 {
            return Err(Error::Config(
                "samples and realizations must be >= 1".into(),
            ));
        }
        if !(self.noise_variance > 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::Config("noise variance must be positive".into()));
        }
        if !(self.plot_grid.step > 0.0 && self.plot_grid.stop >= self.plot_grid.start) {
            return Err(Error::Config(
                "plot grid needs step > 0 and stop >= start".into(),
            ));
        }
        let oracle = self
            .cells
            .iter()
            .any(|c| c.method == TuningMethod::OracleMse);
        if oracle && !self.input.is_impulse() {
            return Err(Error::Config(
                "oracle tuning is only defined for the impulsive input".into(),
            ));
        }
        let labels: Vec<String> = self.cells.iter().map(Cell::label).collect();
        for c in &self.comparisons {
            for l in [&c.a, &c.b] {
                if !labels.contains(l) {
                    return Err(Error::Config(format!("comparison names unknown cell {l}")));
                }
            }
        }
        Ok(())
    }

    pub fn instants(&self) -> Vec<f64> {
        (1..=self.samples)
            .map(|k| k as f64 * self.sampling_period)
            .collect()
    }
}

/// Noiseless outputs `(u * g)(t_k)`; exact impulse response for the impulse.
pub fn noiseless_outputs(
    system: &RationalTransferFunction,
    input: &InputSignal,
    instants: &[f64],
) -> Result<Vec<f64>> {
    let g = system.partial_fractions()?;
    instants
        .iter()
        .map(|&t| {
            if input.is_impulse() {
                g.eval(t)
            } else {
                let u = |tau: f64| input.value(t - tau).unwrap_or(0.0) * g.value(tau);
                Ok(integrate(u, 0.0, t, &[], &FUNCTIONAL_QUAD)?.value)
            }
        })
        .collect()
}

/// `y(t_k) = (u * g)(t_k) + w_k`, `w_k ~ N(0, σ²)` from stream `(seed, stream)`.
/// `σ² = 0` returns the noiseless outputs.
pub fn simulate_outputs(
    system: &RationalTransferFunction,
    input: &InputSignal,
    instants: &[f64],
    noise_variance: f64,
    seed: u64,
    stream: u64,
) -> Result<Vec<f64>> {
    if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
        return Err(Error::Domain {
            what: "noise variance must be finite and >= 0",
            value: noise_variance,
        });
    }
    let mut y = noiseless_outputs(system, input, instants)?;
    if noise_variance > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let noise = Normal::new(0.0, noise_variance.sqrt()).expect("positive sd");
        for v in &mut y {
            *v += noise.sample(&mut rng);
        }
    }
    Ok(y)
}

/// [`simulate_outputs`] packaged as a dataset (requires `σ² > 0`).
pub fn simulate_output(
    system: &RationalTransferFunction,
    input: &InputSignal,
    instants: &[f64],
    noise_variance: f64,
    seed: u64,
    stream: u64,
) -> Result<Dataset> {
    let y = simulate_outputs(system, input, instants, noise_variance, seed, stream)?;
    Dataset::new(instants.to_vec(), y, noise_variance)
}

/// Outcome of one cell in one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub sq_error: Option<f64>,
    pub theta: Option<Vec<f64>>,
    pub error: Option<String>,
    /// `ĝ` on the plotting grid.
    #[serde(skip)]
    pub curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realization {
    pub index: usize,
    pub outputs: Vec<f64>,
    pub cells: Vec<CellOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub label: String,
    pub family: String,
    pub method: TuningMethod,
    pub count: usize,
    pub failures: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonOutcome {
    pub a: String,
    pub b: String,
    pub alternative: Alternative,
    pub statistic: f64,
    pub p_value: f64,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub realizations: usize,
    pub cells: Vec<CellSummary>,
    pub comparisons: Vec<ComparisonOutcome>,
    /// Oracle hyperparameters per cell label (independent of the noise).
    pub oracle_theta: Vec<(String, Vec<f64>)>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub instants: Vec<f64>,
    pub truth: Vec<f64>,
    pub plot_grid: Vec<f64>,
    pub truth_curve: Vec<f64>,
    pub realizations: Vec<Realization>,
    pub oracle_traces: Vec<(String, Vec<TraceRow>)>,
    pub summary: Summary,
}

impl RunResult {
    /// Squared errors of a cell, failures dropped.
    pub fn sq_errors(&self, label: &str) -> Option<Vec<f64>> {
        let k = self.config.cells.iter().position(|c| c.label() == label)?;
        Some(cell_errors(&self.realizations, k))
    }

    pub fn cell_summary(&self, label: &str) -> Option<&CellSummary> {
        self.summary.cells.iter().find(|c| c.label == label)
    }

    pub fn comparison(&self, a: &str, b: &str) -> Option<&ComparisonOutcome> {
        self.summary
            .comparisons
            .iter()
            .find(|c| c.a == a && c.b == b)
    }
}

fn cell_errors(realizations: &[Realization], k: usize) -> Vec<f64> {
    realizations
        .iter()
        .filter_map(|r| r.cells[k].sq_error)
        .collect()
}

fn summarize(label: String, cell: &Cell, errors: Vec<f64>, failures: usize) -> CellSummary {
    let count = errors.len();
    let (median, q1, q3, min, max, mean) = if errors.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN)
    } else {
        let mut d = Data::new(errors);
        (
            d.median(),
            d.lower_quartile(),
            d.upper_quartile(),
            d.min(),
            d.max(),
            d.mean().unwrap_or(f64::NAN),
        )
    };
    CellSummary {
        label,
        family: cell.family.name().into(),
        method: cell.method,
        count,
        failures,
        median,
        q1,
        q3,
        min,
        max,
        mean,
    }
}

/// Runs every realization and cell, then the configured rank-sum tests.
/// More than 5% failed cell fits abort the run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunResult> {
    config.validate()?;
    let instants = config.instants();
    let truth = noiseless_outputs(&config.system, &InputSignal::Impulse, &instants)?;
    let plot_grid = config.plot_grid.points();
    let truth_curve = noiseless_outputs(&config.system, &InputSignal::Impulse, &plot_grid)?;

    // Oracle hyperparameters depend only on the truth, not on the noise.
    let mut oracle_theta: Vec<Option<Vec<f64>>> = vec![None; config.cells.len()];
    let mut oracle_traces = Vec::new();
    let mut summary_oracle = Vec::new();
    for (k, cell) in config.cells.iter().enumerate() {
        if cell.method == TuningMethod::OracleMse {
            let r = oracle_tune(
                &instants,
                &truth,
                &cell.family,
                config.noise_variance,
                &config.optimizer,
            )?;
            log::info!("{}: oracle θ = {:?}", cell.label(), r.theta.values);
            summary_oracle.push((cell.label(), r.theta.values.clone()));
            oracle_traces.push((cell.label(), r.trace));
            oracle_theta[k] = Some(r.theta.values);
        }
    }

    let realizations: Vec<Realization> = (0..config.realizations)
        .into_par_iter()
        .map(|r| run_realization(config, r, &instants, &truth, &plot_grid, &oracle_theta))
        .collect::<Result<_>>()?;

    let total = config.realizations * config.cells.len();
    let failures: usize = realizations
        .iter()
        .flat_map(|r| &r.cells)
        .filter(|c| c.sq_error.is_none())
        .count();
    if failures * 20 > total {
        return Err(Error::TooManyFailures { failures, total });
    }

    let cells: Vec<CellSummary> = config
        .cells
        .iter()
        .enumerate()
        .map(|(k, cell)| {
            let errors = cell_errors(&realizations, k);
            let failed = config.realizations - errors.len();
            summarize(cell.label(), cell, errors, failed)
        })
        .collect();

    let labels: Vec<String> = config.cells.iter().map(Cell::label).collect();
    let mut comparisons = Vec::new();
    for spec in &config.comparisons {
        let ia = labels.iter().position(|l| *l == spec.a).expect("validated");
        let ib = labels.iter().position(|l| *l == spec.b).expect("validated");
        let t = rank_sum_test(
            &cell_errors(&realizations, ia),
            &cell_errors(&realizations, ib),
            spec.alternative,
            RankSumMethod::Auto,
        )?;
        comparisons.push(ComparisonOutcome {
            a: spec.a.clone(),
            b: spec.b.clone(),
            alternative: spec.alternative,
            statistic: t.statistic,
            p_value: t.p_value,
            exact: t.exact,
        });
    }

    Ok(RunResult {
        summary: Summary {
            name: config.name.clone(),
            realizations: config.realizations,
            cells,
            comparisons,
            oracle_theta: summary_oracle,
        },
        config: config.clone(),
        instants,
        truth,
        plot_grid,
        truth_curve,
        realizations,
        oracle_traces,
    })
}

fn run_realization(
    config: &ExperimentConfig,
    r: usize,
    instants: &[f64],
    truth: &[f64],
    plot_grid: &[f64],
    oracle_theta: &[Option<Vec<f64>>],
) -> Result<Realization> {
    let data = simulate_output(
        &config.system,
        &config.input,
        instants,
        config.noise_variance,
        config.seed,
        r as u64,
    )?;
    let cells = config
        .cells
        .iter()
        .zip(oracle_theta)
        .map(|(cell, oracle)| {
            let fit = || -> Result<(Vec<f64>, f64, Vec<f64>)> {
                let theta = match oracle {
                    Some(t) => t.clone(),
                    None => {
                        empirical_bayes_tune(&data, &cell.family, &config.input, &config.optimizer)?
                            .theta
                            .values
                    }
                };
                let kernel = cell.family.kernel(&theta)?;
                let model = EstimateModel::fit(kernel, config.input.clone(), &data, None)?;
                let sq_error = instants
                    .iter()
                    .zip(truth)
                    .map(|(&t, g)| Ok((model.predict(t)? - g).powi(2)))
                    .sum::<Result<f64>>()?;
                let curve = plot_grid
                    .iter()
                    .map(|&t| model.predict(t))
                    .collect::<Result<Vec<_>>>()?;
                Ok((theta, sq_error, curve))
            };
            match fit() {
                Ok((theta, sq_error, curve)) => CellOutcome {
                    sq_error: Some(sq_error),
                    theta: Some(theta),
                    error: None,
                    curve,
                },
                Err(e) => {
                    log::warn!("realization {r}, {}: {e}", cell.label());
                    CellOutcome {
                        sq_error: None,
                        theta: None,
                        error: Some(e.to_string()),
                        curve: vec![],
                    }
                }
            }
        })
        .collect();
    Ok(Realization {
        index: r,
        outputs: data.outputs().to_vec(),
        cells,
    })
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::write(dir.join(name), contents)?;
    Ok(())
}

/// Writes `boxplot.csv`, `summary.json`, `observed.csv`, `truth.csv`,
/// `theta.csv`, one `curves_<cell>.csv` per cell (columns `t,r0,r1,…`) and
/// one `oracle_trace_<cell>.csv` per oracle cell.
pub fn export(result: &RunResult, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let cells = &result.config.cells;

    let mut boxplot = String::from("family,method,realization,sq_error\n");
    let mut theta = String::from("family,method,realization,param,value\n");
    for (k, cell) in cells.iter().enumerate() {
        let names = cell.family.param_names();
        for r in &result.realizations {
            let o = &r.cells[k];
            if let Some(se) = o.sq_error {
                boxplot.push_str(&format!(
                    "{},{},{},{se}\n",
                    cell.family.name(),
                    cell.method.name(),
                    r.index
                ));
            }
            if let Some(t) = &o.theta {
                for (n, v) in names.iter().zip(t) {
                    theta.push_str(&format!(
                        "{},{},{},{n},{v}\n",
                        cell.family.name(),
                        cell.method.name(),
                        r.index
                    ));
                }
            }
        }
    }
    write(dir, "boxplot.csv", &boxplot)?;
    write(dir, "theta.csv", &theta)?;
    write(
        dir,
        "summary.json",
        &serde_json::to_string_pretty(&result.summary)?,
    )?;

    let mut observed = String::from("t,y\n");
    if let Some(first) = result.realizations.first() {
        for (t, y) in result.instants.iter().zip(&first.outputs) {
            observed.push_str(&format!("{t},{y}\n"));
        }
    }
    write(dir, "observed.csv", &observed)?;

    let mut truth = String::from("t,g\n");
    for (t, g) in result.plot_grid.iter().zip(&result.truth_curve) {
        truth.push_str(&format!("{t},{g}\n"));
    }
    write(dir, "truth.csv", &truth)?;

    for (k, cell) in cells.iter().enumerate() {
        let kept: Vec<&Realization> = result
            .realizations
            .iter()
            .filter(|r| !r.cells[k].curve.is_empty())
            .collect();
        let mut s = String::from("t");
        for r in &kept {
            s.push_str(&format!(",r{}", r.index));
        }
        s.push('\n');
        for (i, t) in result.plot_grid.iter().enumerate() {
            s.push_str(&t.to_string());
            for r in &kept {
                s.push_str(&format!(",{}", r.cells[k].curve[i]));
            }
            s.push('\n');
        }
        write(dir, &format!("curves_{}.csv", cell.label()), &s)?;
    }

    for (label, trace) in &result.oracle_traces {
        let cell = cells
            .iter()
            .find(|c| c.label() == *label)
            .expect("oracle cell");
        let mut s = format!(
            "restart,iteration,{},objective\n",
            cell.family.param_names().join(",")
        );
        for row in trace {
            s.push_str(&format!("{},{}", row.restart, row.iteration));
            for v in &row.theta {
                s.push_str(&format!(",{v}"));
            }
            s.push_str(&format!(",{}\n", row.objective));
        }
        write(dir, &format!("oracle_trace_{label}.csv"), &s)?;
    }
    Ok(())
}

/// Reads back `summary.json`.
pub fn read_summary(path: impl AsRef<Path>) -> Result<Summary> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Independent standard-normal draws used by noise simulation, exposed for
/// reproducibility checks.
pub fn noise_stream(seed: u64, stream: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..n)
        .map(|_| rng.sample(rand_distr::StandardNormal))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn target() -> RationalTransferFunction {
        ExperimentConfig::reference_study().system
    }

    #[test]
    fn noiseless_impulse_is_exact() {
        let y = simulate_outputs(&target(), &InputSignal::Impulse, &[0.5], 0.0, 1, 0).unwrap();
        assert_relative_eq!(
            y[0],
            0.5 * ((-0.5f64).exp() - (-1.5f64).exp()),
            max_relative = 1e-14
        );
    }

    #[test]
    fn step_output_matches_closed_form() {
        // ∫_0^t g = 1/3 - e^{-t}/2 + e^{-3t}/6.
        let t = 1.3f64;
        let y = noiseless_outputs(&target(), &InputSignal::Step { amplitude: 1.0 }, &[t]).unwrap();
        let exact = 1.0 / 3.0 - (-t).exp() / 2.0 + (-3.0 * t).exp() / 6.0;
        assert_relative_eq!(y[0], exact, max_relative = 1e-11);
    }

    #[test]
    fn noise_is_keyed_by_seed_and_stream() {
        let sys = target();
        let t = [0.1, 0.2, 0.3];
        let a = simulate_outputs(&sys, &InputSignal::Impulse, &t, 1e-2, 5, 3).unwrap();
        let b = simulate_outputs(&sys, &InputSignal::Impulse, &t, 1e-2, 5, 3).unwrap();
        let c = simulate_outputs(&sys, &InputSignal::Impulse, &t, 1e-2, 5, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn plot_grid_points() {
        let g = PlotGrid {
            start: 0.0,
            stop: 10.0,
            step: 0.05,
        }
        .points();
        assert_eq!(g.len(), 201);
        assert_relative_eq!(*g.last().unwrap(), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut c = ExperimentConfig::reference_study();
        c.validate().unwrap();
        c.noise_variance = 0.0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::reference_study();
        c.input = InputSignal::Step { amplitude: 1.0 };
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::reference_study();
        c.comparisons[0].a = "nope".into();
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let c = ExperimentConfig::reference_study();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&s).unwrap(), c);
    }
}
