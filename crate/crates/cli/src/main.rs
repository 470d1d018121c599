//! `caas`: generate instances, run selection experiments, solve the offline
//! optimum, evaluate the lower-bound family and export report data.
//!
//! Exit codes: 0 success, 2 usage or input-spec error, 3 instance validation
//! failure, 4 instance too large for enumeration, 5 price quantization failure.

mod report;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use caas_core::adversary::{build_family, estimate_ucosa, AdversarialFamily};
use caas_core::harness::{default_budget_grid, run_experiment, ExperimentPlan, PlanPolicy};
use caas_core::io::instance::{instance_to_string, InstanceIoError};
use caas_core::io::results::{fmt_sig9, format_results};
use caas_core::io::{generate_synthetic, load_family, load_instance, SyntheticSpec};
use caas_core::model::{Budget, Instance};
use caas_core::offline::{solve_bruteforce, solve_dp, OfflineError, DEFAULT_QUANTUM};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EXIT_USAGE: u8 = 2;
const EXIT_INVALID_INSTANCE: u8 = 3;
const EXIT_TOO_LARGE: u8 = 4;
const EXIT_QUANTIZATION: u8 = 5;

#[derive(Debug)]
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<InstanceIoError> for CliError {
    fn from(e: InstanceIoError) -> Self {
        let code = match e {
            InstanceIoError::Validation { .. } => EXIT_INVALID_INSTANCE,
            _ => EXIT_USAGE,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<OfflineError> for CliError {
    fn from(e: OfflineError) -> Self {
        let code = match e {
            OfflineError::TooLarge { .. } => EXIT_TOO_LARGE,
            OfflineError::Quantization { .. } | OfflineError::InvalidQuantum(_) => EXIT_QUANTIZATION,
            OfflineError::TooManyStates { .. } => EXIT_TOO_LARGE,
        };
        CliError::new(code, e.to_string())
    }
}

type CliResult = Result<(), CliError>;

#[derive(Parser, Debug)]
#[command(name = "caas", version, about = "Budget-constrained online chunk selection toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic instance file from a generator spec.
    Gen {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the generator spec file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run shuffled-stream experiments and write a results file.
    Simulate {
        #[arg(long)]
        instance: PathBuf,
        /// Comma-separated: ucosa, greedy, random, balance, open, offline.
        #[arg(long, default_value = "ucosa")]
        policy: String,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated budgets (numbers or `inf`), or `default` for the
        /// doubling grid from 1% to 200% of the open-budget spend.
        #[arg(long)]
        budget_sweep: Option<String>,
        /// Price grid used by the offline solver.
        #[arg(long, default_value_t = DEFAULT_QUANTUM)]
        quantum: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the offline optimum of an instance.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Dp)]
        method: Method,
        #[arg(long, default_value_t = DEFAULT_QUANTUM)]
        quantum: f64,
    },
    /// Evaluate the lower-bound instance family.
    Adversary {
        #[arg(long = "L", allow_negative_numbers = true)]
        lower: Option<f64>,
        #[arg(long = "U", allow_negative_numbers = true)]
        upper: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        eta: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        budget_units: u64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Instance file with a `family` stanza, instead of --L/--U/--eta.
        #[arg(long, conflicts_with_all = ["lower", "upper", "eta"])]
        family: Option<PathBuf>,
    },
    /// Merge results files into a table or plot-ready data series.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        results: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = report::Format::Table)]
        format: report::Format,
        /// Instance the results came from; enables the per-prompt RaaS line.
        #[arg(long)]
        instance: Option<PathBuf>,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    Brute,
    Dp,
}

fn write_output(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| CliError::new(EXIT_USAGE, format!("{}: {e}", path.display())))
}

fn cmd_gen(spec: &Path, out: &Path, seed: Option<u64>) -> CliResult {
    let mut spec = SyntheticSpec::load(spec).map_err(|e| CliError::new(EXIT_USAGE, e.to_string()))?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let instance = generate_synthetic(&spec).map_err(|e| CliError::new(EXIT_USAGE, e.to_string()))?;
    write_output(out, &instance_to_string(&instance))?;
    println!(
        "wrote {} prompts, {} candidates to {}",
        instance.prompts.len(),
        instance.candidate_count(),
        out.display()
    );
    Ok(())
}

fn parse_policies(list: &str) -> Result<Vec<PlanPolicy>, CliError> {
    list.split(',')
        .map(|s| s.trim().parse::<PlanPolicy>().map_err(|e| CliError::new(EXIT_USAGE, e.to_string())))
        .collect()
}

fn parse_sweep(spec: &str, instance: &Instance) -> Result<Vec<Budget>, CliError> {
    if spec.trim() == "default" {
        return Ok(default_budget_grid(instance));
    }
    spec.split(',')
        .map(|s| match s.trim() {
            "inf" => Ok(Budget::Infinite),
            v => v
                .parse::<f64>()
                .ok()
                .filter(|b| *b >= 0.0)
                .map(Budget::Finite)
                .ok_or_else(|| CliError::new(EXIT_USAGE, format!("bad budget {v:?} in --budget-sweep"))),
        })
        .collect()
}

fn fmt_budget(b: Budget) -> String {
    match b {
        Budget::Finite(v) => fmt_sig9(v),
        Budget::Infinite => "inf".into(),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), fmt_sig9)
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    instance: &Path,
    policy: &str,
    reps: usize,
    seed: u64,
    sweep: Option<&str>,
    quantum: f64,
    out: &Path,
) -> CliResult {
    let policies = parse_policies(policy)?;
    if reps == 0 {
        return Err(CliError::new(EXIT_USAGE, "--reps must be >= 1"));
    }
    let instance = load_instance(instance)?;
    let budget_sweep = sweep.map(|s| parse_sweep(s, &instance)).transpose()?;
    let plan = ExperimentPlan {
        policies,
        repetitions: reps,
        master_seed: seed,
        budget_sweep,
        quantum,
    };
    let report = run_experiment(&instance, &plan).map_err(|e| match e {
        caas_core::harness::HarnessError::Offline(off) => CliError::from(off),
        other => CliError::new(EXIT_USAGE, other.to_string()),
    })?;
    write_output(out, &format_results(&report.rows()))?;
    for agg in &report.aggregates {
        println!(
            "policy={} budget={} runs={} nep={} ar={} nep_x_ar={} stddev={} spent={} perf_to_budget={}",
            agg.policy,
            fmt_budget(agg.budget),
            agg.runs,
            fmt_sig9(agg.mean.nep),
            fmt_opt(agg.mean.ar),
            fmt_sig9(agg.mean.nep_times_ar),
            fmt_sig9(agg.stddev.nep_times_ar),
            fmt_sig9(agg.mean.spent),
            fmt_opt(agg.mean.perf_to_budget),
        );
    }
    Ok(())
}

fn cmd_solve(instance: &Path, method: Method, quantum: f64) -> CliResult {
    let instance = load_instance(instance)?;
    let solution = match method {
        Method::Brute => solve_bruteforce(&instance)?,
        Method::Dp => solve_dp(&instance, quantum)?,
    };
    let mut out = String::new();
    writeln!(out, "objective {}", fmt_sig9(solution.objective)).unwrap();
    writeln!(out, "spent {}", fmt_sig9(solution.spent)).unwrap();
    writeln!(out, "budget {}", fmt_budget(instance.budget)).unwrap();
    writeln!(out, "selected {}", solution.assignment.selections.len()).unwrap();
    for p in &instance.prompts {
        if let Some(c) = solution.assignment.selections.get(&p.prompt_id) {
            writeln!(
                out,
                "  {} -> {} relevance={} price={}",
                p.prompt_id,
                c.chunk_id,
                fmt_sig9(c.relevance),
                fmt_sig9(c.price)
            )
            .unwrap();
        }
    }
    print!("{out}");
    Ok(())
}

fn adversary_family(
    lower: Option<f64>,
    upper: Option<f64>,
    eta: Option<f64>,
    budget_units: u64,
    family: Option<&Path>,
) -> Result<AdversarialFamily, CliError> {
    if let Some(path) = family {
        return Ok(load_family(path)?);
    }
    let (Some(lower), Some(upper), Some(eta)) = (lower, upper, eta) else {
        return Err(CliError::new(EXIT_USAGE, "--L, --U and --eta are required without --family"));
    };
    build_family(lower, upper, eta, budget_units).map_err(|e| CliError::new(EXIT_USAGE, e.to_string()))
}

fn cmd_adversary(family: AdversarialFamily, samples: usize, seed: u64) -> CliResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let estimate = estimate_ucosa(&family, samples, &mut rng);
    let guarantee = 1.0 / ((family.ratio_upper / family.ratio_lower).ln() + 2.0);
    let probs: Vec<String> = family.probabilities.iter().map(|p| fmt_sig9(*p)).collect();
    println!("L {}", fmt_sig9(family.ratio_lower));
    println!("U {}", fmt_sig9(family.ratio_upper));
    println!("eta {}", fmt_sig9(family.eta));
    println!("budget_units {}", family.budget_units);
    println!("k {}", family.k);
    println!("H {}", fmt_sig9(family.h()));
    println!("probabilities {}", probs.join(","));
    println!("bound {}", fmt_sig9(family.bound()));
    println!("limit_bound {}", fmt_sig9(family.limit_bound()));
    println!("ucosa_guarantee {}", fmt_sig9(guarantee));
    println!("ucosa_exact {}", fmt_sig9(estimate.exact));
    println!("ucosa_mc_mean {}", fmt_sig9(estimate.mean));
    println!("ucosa_mc_stderr {}", fmt_sig9(estimate.stderr));
    println!("samples {}", estimate.samples);
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Gen { spec, out, seed } => cmd_gen(&spec, &out, seed),
        Command::Simulate {
            instance,
            policy,
            reps,
            seed,
            budget_sweep,
            quantum,
            out,
        } => cmd_simulate(&instance, &policy, reps, seed, budget_sweep.as_deref(), quantum, &out),
        Command::Solve {
            instance,
            method,
            quantum,
        } => cmd_solve(&instance, method, quantum),
        Command::Adversary {
            lower,
            upper,
            eta,
            budget_units,
            samples,
            seed,
            family,
        } => {
            let family = adversary_family(lower, upper, eta, budget_units, family.as_deref())?;
            cmd_adversary(family, samples, seed)
        }
        Command::Report {
            results,
            format,
            instance,
        } => {
            let prompts = instance.map(load_instance).transpose()?.map(|i| i.prompts.len());
            let text = report::render(&results, format, prompts).map_err(|e| CliError::new(EXIT_USAGE, e))?;
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
