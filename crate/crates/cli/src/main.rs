//! `dopanet` command-line driver.
//!
//! Exit codes: 0 success, 1 validation error, 2 run failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dopanet::runner::{
    dump_diagnostics, execute_run_with, load_artifact, parse_plan, run_plan, write_artifact,
    DiagnosticsSpec, ExperimentPlan, PlanReport, RunOptions, RunSpec,
};
use dopanet::theory::run_checks;
use dopanet::training::Algorithm;

#[derive(Debug, Parser)]
#[command(
    name = "dopanet",
    version,
    about = "Domain-partitioning adversarial training on Gaussian mixtures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train and score a single run.
    Train(TrainArgs),
    /// Run every cell of a plan and write the summary table.
    Plan(PlanArgs),
    /// Recompute metrics from a run directory.
    Eval(EvalArgs),
    /// Check the optimality results on discretized densities.
    Theory(TheoryArgs),
    /// Write diagnostic grids for a run directory.
    Diag(DiagArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Plan file supplying target, training and evaluation settings.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Defaults to the first seed of the plan.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Required when the plan lists more than one algorithm.
    #[arg(long)]
    algorithm: Option<Algorithm>,
    /// Number of discriminators; required when the plan lists more than one.
    #[arg(short = 'n', long = "discriminators", value_name = "N")]
    n_discriminators: Option<usize>,
    /// Run directory; nothing is written when absent.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Write a parameter snapshot every K iterations (needs --out).
    #[arg(long, value_name = "K", requires = "out")]
    checkpoint_every: Option<u64>,
    /// Also write diagnostic grids into the run directory.
    #[arg(long, requires = "out")]
    diagnostics: bool,
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Replace the plan's seed list with this many consecutive seeds.
    #[arg(long, value_name = "COUNT", value_parser = clap::value_parser!(u64).range(1..))]
    seeds: Option<u64>,
    /// First seed of the --seeds range, or the single seed to run.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    #[arg(long, value_name = "N", default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: u64,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "K", requires = "out")]
    checkpoint_every: Option<u64>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Run directory written by `train` or `plan`.
    #[arg(value_name = "DIR")]
    artifact: PathBuf,
}

#[derive(Debug, Args)]
struct TheoryArgs {
    /// Write the results as theory.json into this directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DiagArgs {
    #[arg(value_name = "DIR")]
    artifact: PathBuf,
    /// Defaults to the run directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "COUNT")]
    samples: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Run(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Run(_) => 2,
        }
    }
}

fn invalid(e: impl ToString) -> Failure {
    Failure::Validation(e.to_string())
}

fn failed(e: impl ToString) -> Failure {
    Failure::Run(e.to_string())
}

fn load_plan(path: &Path) -> Result<ExperimentPlan, Failure> {
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    parse_plan(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn pick<T: Copy + PartialEq + std::fmt::Debug>(
    what: &str,
    given: Option<T>,
    listed: &[T],
) -> Result<T, Failure> {
    match (given, listed) {
        (Some(v), _) => Ok(v),
        (None, [only]) => Ok(*only),
        (None, _) => Err(invalid(format!(
            "the plan lists several {what} values {listed:?}; choose one"
        ))),
    }
}

fn train_spec(plan: &ExperimentPlan, args: &TrainArgs) -> Result<RunSpec, Failure> {
    let algorithm = pick("algorithm", args.algorithm, &plan.algorithms)?;
    let n = if algorithm == Algorithm::StandardGan {
        1
    } else {
        pick(
            "discriminator count",
            args.n_discriminators,
            &plan.n_discriminators,
        )?
    };
    let seed = args.seed.unwrap_or(plan.seeds[0]);
    if args.checkpoint_every == Some(0) {
        return Err(invalid("--checkpoint-every must be >= 1"));
    }
    Ok(RunSpec {
        id: format!("{}-n{}-s{}", algorithm.label(), n, seed),
        train: plan.train_config(algorithm, n, seed).map_err(invalid)?,
        eval: plan.eval_spec().map_err(invalid)?,
    })
}

fn train_cmd(args: TrainArgs) -> Result<(), Failure> {
    let plan = load_plan(&args.config)?;
    let spec = train_spec(&plan, &args)?;
    let checkpoints = args.checkpoint_every.zip(args.out.as_deref());
    let run = execute_run_with(&spec, checkpoints).map_err(failed)?;
    if let Some(dir) = &args.out {
        write_artifact(dir, &run).map_err(failed)?;
        if args.diagnostics {
            dump_diagnostics(&run.params, &spec.train, &DiagnosticsSpec::default(), dir)
                .map_err(failed)?;
        }
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&run.metrics).map_err(failed)?
    );
    Ok(())
}

fn plan_cmd(args: PlanArgs) -> Result<(), Failure> {
    let mut plan = load_plan(&args.config)?;
    match (args.seeds, args.seed) {
        (Some(count), first) => {
            let first = first.unwrap_or(0);
            let end = first
                .checked_add(count)
                .ok_or_else(|| invalid("--seed + --seeds overflows"))?;
            plan.seeds = (first..end).collect();
        }
        (None, Some(seed)) => plan.seeds = vec![seed],
        (None, None) => {}
    }
    if args.checkpoint_every == Some(0) {
        return Err(invalid("--checkpoint-every must be >= 1"));
    }
    plan.validate().map_err(invalid)?;
    let options = RunOptions {
        jobs: usize::try_from(args.jobs).map_err(invalid)?,
        out: args.out.clone(),
        checkpoint_every: args.checkpoint_every,
    };
    let report: PlanReport = run_plan(&plan, &options).map_err(failed)?;
    print!("{}", report.table.to_text());
    for r in &report.records {
        if let Some(reason) = r.failure() {
            eprintln!("run {} failed: {reason}", r.id);
        }
    }
    if !report.table.complete() {
        return Err(failed("at least one cell has no successful run"));
    }
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> Result<(), Failure> {
    let artifact = load_artifact(&args.artifact).map_err(invalid)?;
    let metrics = artifact.recompute().map_err(failed)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&metrics).map_err(failed)?
    );
    if metrics != artifact.metrics {
        return Err(failed("recomputed metrics differ from metrics.json"));
    }
    Ok(())
}

fn theory_cmd(args: TheoryArgs) -> Result<(), Failure> {
    let checks = run_checks().map_err(failed)?;
    for c in &checks {
        let verdict = if c.passed { "PASS" } else { "FAIL" };
        println!("{verdict} {}: {}", c.name, c.detail);
    }
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| failed(format!("{}: {e}", dir.display())))?;
        let path = dir.join("theory.json");
        let text = serde_json::to_string_pretty(&checks).map_err(failed)?;
        fs::write(&path, text).map_err(|e| failed(format!("{}: {e}", path.display())))?;
    }
    if checks.iter().any(|c| !c.passed) {
        return Err(failed("theory checks failed"));
    }
    Ok(())
}

fn diag_cmd(args: DiagArgs) -> Result<(), Failure> {
    let artifact = load_artifact(&args.artifact).map_err(invalid)?;
    let mut spec = DiagnosticsSpec::default();
    if let Some(n) = args.samples {
        if n == 0 {
            return Err(invalid("--samples must be >= 1"));
        }
        spec.samples = n;
    }
    let dir = args.out.as_deref().unwrap_or(&args.artifact);
    let files =
        dump_diagnostics(&artifact.params, &artifact.spec.train, &spec, dir).map_err(failed)?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Train(a) => train_cmd(a),
        Command::Plan(a) => plan_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Theory(a) => theory_cmd(a),
        Command::Diag(a) => diag_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
