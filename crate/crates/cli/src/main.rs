//! Command-line front end: standardization, model fitting, ROC and
//! risk-distribution derivation, ROC-equality tests, scenario simulation,
//! and repeated-simulation experiments. Output is JSON by default; `--csv`
//! switches tabular commands to flat CSV.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use rocreg::dataset::{load_csv, CsvSchema, StudyDesign, StudySample};
use rocreg::estimators::{fit_cml, fit_eml, fit_psl, ConcavityPolicy, Method, RiskModelFit};
use rocreg::experiment::{run_experiment, ExperimentConfig, FitMode};
use rocreg::glm::compute_offsets;
use rocreg::hypotests::{test_roc_equality, RocEqualityMethod};
use rocreg::inference::{bootstrap_percentile_ci, evaluate_roc, risk_cdf, risk_cdf_eml};
use rocreg::simgen::{generate_sample, scenario_truth, Scenario};
use rocreg::standardize::{fit_reference, standardize_sample};

const DEFAULT_GRID: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
const SEED_ENV: &str = "ROCREG_SEED";

#[derive(Parser)]
#[command(name = "rocreg", about = "ROC regression with standardized markers", version)]
struct Cli {
    /// Worker threads for bootstrap and experiments (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Eml,
    Cml,
    Psl,
}

impl From<EstimatorArg> for Method {
    fn from(e: EstimatorArg) -> Method {
        match e {
            EstimatorArg::Eml => Method::Eml,
            EstimatorArg::Cml => Method::Cml,
            EstimatorArg::Psl => Method::Psl,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DesignArg {
    Cohort,
    CaseControl,
}

#[derive(Args)]
struct InputArgs {
    /// Input CSV with disease, marker, and stratum columns.
    input: PathBuf,
    /// Sampling design of the input data.
    #[arg(long, value_enum, default_value = "cohort")]
    design: DesignArg,
    /// Stratum prevalences as label=value pairs, required for
    /// case-control data used in risk computations.
    #[arg(long = "prevalence", value_parser = parse_prevalence)]
    prevalences: Vec<(String, f64)>,
    /// Column names, comma-separated as d,y,x.
    #[arg(long, default_value = "d,y,x")]
    columns: String,
}

impl InputArgs {
    fn load(&self) -> anyhow::Result<StudySample> {
        let parts: Vec<&str> = self.columns.split(',').collect();
        if parts.len() != 3 {
            anyhow::bail!("--columns expects three comma-separated names");
        }
        let schema = CsvSchema {
            d: parts[0].to_string(),
            y: parts[1].to_string(),
            x: parts[2].to_string(),
        };
        let design = match self.design {
            DesignArg::Cohort => StudyDesign::cohort(),
            DesignArg::CaseControl => {
                let map: BTreeMap<String, f64> = self.prevalences.iter().cloned().collect();
                StudyDesign::case_control(map)?
            }
        };
        Ok(load_csv(&self.input, &schema, design)?)
    }
}

fn parse_prevalence(s: &str) -> Result<(String, f64), String> {
    let (label, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected label=value, got {s}"))?;
    let v: f64 = value.parse().map_err(|e| format!("bad prevalence: {e}"))?;
    Ok((label.to_string(), v))
}

#[derive(Subcommand)]
enum Command {
    /// Compute placement values for every record.
    Standardize {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        csv: bool,
    },
    /// Fit the constrained risk model.
    Fit {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_enum, default_value = "cml")]
        estimator: EstimatorArg,
        /// Polynomial basis degree.
        #[arg(long, default_value_t = 2)]
        degree: usize,
    },
    /// Evaluate the fitted ROC curve on a grid.
    Roc {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_enum, default_value = "cml")]
        estimator: EstimatorArg,
        #[arg(long, default_value_t = 2)]
        degree: usize,
        /// Comma-separated false positive rates.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
        /// Bootstrap replicates for percentile intervals (0 = none).
        #[arg(long, default_value_t = 0)]
        bootstrap: usize,
        #[arg(long, env = SEED_ENV, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        csv: bool,
    },
    /// Evaluate the disease-risk CDF per stratum on a grid of thresholds.
    Riskdist {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_enum, default_value = "cml")]
        estimator: EstimatorArg,
        #[arg(long, default_value_t = 2)]
        degree: usize,
        /// Comma-separated risk thresholds.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        bootstrap: usize,
        #[arg(long, env = SEED_ENV, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        csv: bool,
    },
    /// Test equality of two populations' ROC curves.
    TestRocEquality {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_enum, default_value = "auc-diff")]
        method: TestMethodArg,
        #[arg(long, env = SEED_ENV, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a dataset from a built-in or JSON scenario.
    Simulate {
        /// Built-in scenario name (default, small-sample,
        /// lognormal-controls, unequal-auc) or a path to a scenario JSON.
        #[arg(long, default_value = "default")]
        scenario: String,
        #[arg(long, env = SEED_ENV)]
        seed: Option<u64>,
        /// Output CSV path (stdout if omitted).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Print the scenario's analytic truth instead of data.
        #[arg(long)]
        truth: bool,
    },
    /// Run a repeated-simulation experiment and summarize it.
    Experiment {
        #[arg(long, default_value = "default")]
        scenario: String,
        #[arg(long, default_value_t = 100)]
        replicates: usize,
        /// Bootstrap replicates per dataset for coverage (0 = none).
        #[arg(long, default_value_t = 0)]
        bootstrap: usize,
        #[arg(long, env = SEED_ENV, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [EstimatorArg::Eml, EstimatorArg::Cml, EstimatorArg::Psl])]
        estimators: Vec<EstimatorArg>,
        /// Also fit each population separately for efficiency comparison.
        #[arg(long)]
        per_population: bool,
        #[arg(long)]
        csv: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TestMethodArg {
    AucDiff,
    Wilcoxon,
}

fn load_scenario(name: &str) -> anyhow::Result<Scenario> {
    if let Some(s) = Scenario::builtin(name) {
        return Ok(s);
    }
    let path = PathBuf::from(name);
    if path.exists() {
        return Ok(Scenario::from_json(&fs::read_to_string(path)?)?);
    }
    anyhow::bail!("unknown scenario {name:?}: not a built-in name or readable JSON file")
}

fn fit_with(
    sample: &StudySample,
    estimator: Method,
    degree: usize,
) -> anyhow::Result<RiskModelFit> {
    let basis = rocreg::BasisSpec::polynomial(degree);
    let reference = fit_reference(sample)?;
    let std = standardize_sample(sample, &reference)?;
    Ok(match estimator {
        Method::Eml => fit_eml(&std, &basis)?.fit,
        Method::Cml => {
            let offsets = compute_offsets(sample)?;
            fit_cml(&std, &basis, &offsets, ConcavityPolicy::Warn)?
        }
        Method::Psl => fit_psl(&std.case_u(), &basis, ConcavityPolicy::Warn)?,
    })
}

fn print_json(value: &impl Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("serialize"));
}

#[derive(Serialize)]
struct RocRow {
    t: f64,
    roc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    upper: Option<f64>,
}

#[derive(Serialize)]
struct RiskdistRow {
    stratum: String,
    p: f64,
    cdf: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    upper: Option<f64>,
}

fn prevalence_for(sample: &StudySample, stratum: &str) -> anyhow::Result<f64> {
    if let Some(map) = &sample.design.prevalence_by_stratum {
        if let Some(&p) = map.get(stratum) {
            return Ok(p);
        }
        anyhow::bail!("no prevalence supplied for stratum {stratum}");
    }
    Ok(sample.stratum_case_fraction(stratum)?)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Standardize { input, csv } => {
            let sample = input.load()?;
            let reference = fit_reference(&sample)?;
            let std = standardize_sample(&sample, &reference)?;
            if csv {
                let mut out = String::from("d,y,x,u\n");
                for (rec, u) in std.iter() {
                    out.push_str(&format!("{},{},{},{}\n", u8::from(rec.d), rec.y, rec.x, u));
                }
                print!("{out}");
            } else {
                let rows: Vec<_> = std
                    .iter()
                    .map(|(rec, u)| json!({"d": rec.d, "y": rec.y, "x": rec.x, "u": u}))
                    .collect();
                print_json(&rows);
            }
        }
        Command::Fit { input, estimator, degree } => {
            let sample = input.load()?;
            let fit = fit_with(&sample, estimator.into(), degree)?;
            print_json(&fit);
        }
        Command::Roc { input, estimator, degree, grid, bootstrap, seed, csv } => {
            let sample = input.load()?;
            let method: Method = estimator.into();
            let grid = if grid.is_empty() { DEFAULT_GRID.to_vec() } else { grid };
            let fit = fit_with(&sample, method, degree)?;
            let mut rows = Vec::new();
            for &t in &grid {
                let point = evaluate_roc(&fit, t)?;
                let (lower, upper) = if bootstrap > 0 {
                    let ci = bootstrap_percentile_ci(
                        |s| {
                            let f = fit_with(s, method, degree)
                                .map_err(|_| rocreg::Error::OptimNonConvergence(f64::NAN))?;
                            Ok(evaluate_roc(&f, t)?.roc)
                        },
                        &sample,
                        bootstrap,
                        seed,
                    )?;
                    (Some(ci.lower), Some(ci.upper))
                } else {
                    (None, None)
                };
                rows.push(RocRow { t, roc: point.roc, lower, upper });
            }
            if csv {
                let mut out = String::from("t,roc,lower,upper\n");
                for r in &rows {
                    out.push_str(&format!(
                        "{},{},{},{}\n",
                        r.t,
                        r.roc,
                        r.lower.map_or(String::new(), |v| v.to_string()),
                        r.upper.map_or(String::new(), |v| v.to_string()),
                    ));
                }
                print!("{out}");
            } else {
                print_json(&rows);
            }
        }
        Command::Riskdist { input, estimator, degree, grid, bootstrap, seed, csv } => {
            let sample = input.load()?;
            let method: Method = estimator.into();
            let grid = if grid.is_empty() { DEFAULT_GRID.to_vec() } else { grid };
            let cdf_at = |s: &StudySample, stratum: &str, p: f64| -> rocreg::Result<f64> {
                let reference = fit_reference(s)?;
                let std = standardize_sample(s, &reference)?;
                let basis = rocreg::BasisSpec::polynomial(degree);
                let rho = prevalence_for(s, stratum)
                    .map_err(|_| rocreg::Error::UnknownStratum(stratum.to_string()))?;
                match method {
                    Method::Eml => {
                        let eml = fit_eml(&std, &basis)?;
                        risk_cdf_eml(&eml, rho, p)
                    }
                    Method::Cml => {
                        let offsets = compute_offsets(s)?;
                        let fit = fit_cml(&std, &basis, &offsets, ConcavityPolicy::Warn)?;
                        risk_cdf(&fit, rho, p)
                    }
                    Method::Psl => {
                        let fit = fit_psl(&std.case_u(), &basis, ConcavityPolicy::Warn)?;
                        risk_cdf(&fit, rho, p)
                    }
                }
            };
            let mut rows = Vec::new();
            for stratum in sample.strata() {
                for &p in &grid {
                    let point = cdf_at(&sample, &stratum, p)?;
                    let (lower, upper) = if bootstrap > 0 {
                        let ci = bootstrap_percentile_ci(
                            |s| cdf_at(s, &stratum, p),
                            &sample,
                            bootstrap,
                            seed,
                        )?;
                        (Some(ci.lower), Some(ci.upper))
                    } else {
                        (None, None)
                    };
                    rows.push(RiskdistRow { stratum: stratum.clone(), p, cdf: point, lower, upper });
                }
            }
            if csv {
                let mut out = String::from("stratum,p,cdf,lower,upper\n");
                for r in &rows {
                    out.push_str(&format!(
                        "{},{},{},{},{}\n",
                        r.stratum,
                        r.p,
                        r.cdf,
                        r.lower.map_or(String::new(), |v| v.to_string()),
                        r.upper.map_or(String::new(), |v| v.to_string()),
                    ));
                }
                print!("{out}");
            } else {
                print_json(&rows);
            }
        }
        Command::TestRocEquality { input, method, seed } => {
            let sample = input.load()?;
            let reference = fit_reference(&sample)?;
            let std = standardize_sample(&sample, &reference)?;
            let m = match method {
                TestMethodArg::AucDiff => RocEqualityMethod::AucDiff,
                TestMethodArg::Wilcoxon => RocEqualityMethod::Wilcoxon,
            };
            let result = test_roc_equality(&std, m, seed)?;
            print_json(&result);
        }
        Command::Simulate { scenario, seed, output, truth } => {
            let scn = load_scenario(&scenario)?;
            if truth {
                let t = scenario_truth(&scn, &DEFAULT_GRID, &BTreeMap::new(), &BTreeMap::new())?;
                print_json(&t);
                return Ok(());
            }
            let sample = generate_sample(&scn, seed.unwrap_or(scn.seed))?;
            let schema = CsvSchema::default();
            match output {
                Some(path) => {
                    let file = fs::File::create(path)?;
                    rocreg::dataset::write_csv(&sample, &schema, file)?;
                }
                None => {
                    let mut buf = Vec::new();
                    rocreg::dataset::write_csv(&sample, &schema, &mut buf)?;
                    std::io::stdout().write_all(&buf)?;
                }
            }
        }
        Command::Experiment {
            scenario,
            replicates,
            bootstrap,
            seed,
            estimators,
            per_population,
            csv,
        } => {
            let scn = load_scenario(&scenario)?;
            let mut cfg = ExperimentConfig::new(scn, replicates, seed);
            cfg.bootstrap = bootstrap;
            cfg.estimators = estimators.into_iter().map(Method::from).collect();
            if per_population {
                cfg.modes = vec![FitMode::Combined, FitMode::PerPopulation];
            }
            let report = run_experiment(&cfg)?;
            if csv {
                print!("{}", report.to_csv());
            } else {
                print_json(&report);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        // rayon reads this when it builds its global pool on first use
        std::env::set_var("RAYON_NUM_THREADS", jobs.to_string());
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let numerical = e.downcast_ref::<rocreg::Error>().is_some_and(|err| {
                matches!(
                    err,
                    rocreg::Error::Separation(_)
                        | rocreg::Error::GlmNonConvergence(_)
                        | rocreg::Error::OptimNonConvergence(_)
                        | rocreg::Error::QuadratureFailure
                        | rocreg::Error::NonMonotoneRiskModel
                        | rocreg::Error::RocInversionFailure
                        | rocreg::Error::SingularCovariance
                        | rocreg::Error::BootstrapFailure { .. }
                        | rocreg::Error::ExperimentFailureRate(_)
                )
            });
            if numerical {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

