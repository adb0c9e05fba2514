//! Experiment plans, run artifacts and summary tables.

mod artifact;
mod diagnostics;
mod params;
mod plan;
mod table;

pub use artifact::{
    evaluation_samples, execute_run, execute_run_with, load_artifact, log_csv, parse_samples_csv,
    sample_generator, samples_csv, score, write_artifact, LoadedArtifact, RunInfo, RunOutput,
    SampleTable, CHECKPOINT_DIR, CONFIG_FILE, EVAL_REAL_SEED, GEN_FILE, LOG_FILE, METRICS_FILE,
    PARAMS_FILE, REAL_FILE, RUN_FILE, STREAM_EVAL,
};
pub use diagnostics::{dump_diagnostics, DiagnosticsSpec, STREAM_DIAG};
pub use params::{decode_params, encode_params, ModelParams};
pub use plan::{
    parse_plan, EvalSettings, ExperimentPlan, Metric, RunSpec, Selection, SelectionRule,
    TargetSpec, TrainSettings,
};
pub use table::{emit_table, RunOutcome, RunRecord, SummaryRow, SummaryTable};

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; each run stays single-threaded.
    pub jobs: usize,
    /// Root directory for run artifacts; nothing is written when absent.
    pub out: Option<PathBuf>,
    /// Parameter snapshot interval in iterations; needs `out`.
    pub checkpoint_every: Option<u64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            jobs: 1,
            out: None,
            checkpoint_every: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub name: String,
    pub records: Vec<RunRecord>,
    pub table: SummaryTable,
}

fn record_for(spec: &RunSpec, outcome: RunOutcome) -> RunRecord {
    RunRecord {
        id: spec.id.clone(),
        algorithm: spec.train.algorithm.label(),
        n_discriminators: spec.train.n_discriminators,
        seed: spec.train.seed,
        histogram: spec.eval.histogram.clone(),
        outcome,
    }
}

fn run_cell(
    spec: &RunSpec,
    plan: &ExperimentPlan,
    out: Option<&Path>,
    checkpoint_every: Option<u64>,
) -> RunOutcome {
    let dir = out.map(|root| root.join(&spec.id));
    let checkpoints = checkpoint_every.zip(dir.as_deref());
    let result = execute_run_with(spec, checkpoints).and_then(|run| {
        if let Some(dir) = &dir {
            write_artifact(dir, &run)?;
            if plan.diagnostics {
                dump_diagnostics(&run.params, &spec.train, &DiagnosticsSpec::default(), dir)?;
            }
        }
        Ok(run.metrics)
    });
    match result {
        Ok(m) => RunOutcome::Ok(m),
        Err(e) => RunOutcome::Failed(e.to_string()),
    }
}

/// Runs every cell, records failures without stopping, and summarizes.
/// Results do not depend on `jobs`.
pub fn run_plan(plan: &ExperimentPlan, options: &RunOptions) -> Result<PlanReport> {
    plan.validate()?;
    if options.jobs == 0 {
        return Err(Error::invalid("run options", "jobs must be >= 1"));
    }
    if options.checkpoint_every == Some(0) {
        return Err(Error::invalid(
            "run options",
            "checkpoint interval must be >= 1",
        ));
    }
    let specs = plan.runs()?;
    let out = options.out.as_deref();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs)
        .build()
        .map_err(|e| Error::invalid("thread pool", e.to_string()))?;
    let outcomes: Vec<RunOutcome> = pool.install(|| {
        specs
            .par_iter()
            .map(|s| run_cell(s, plan, out, options.checkpoint_every))
            .collect()
    });
    let records: Vec<RunRecord> = specs
        .iter()
        .zip(outcomes)
        .map(|(s, o)| record_for(s, o))
        .collect();
    let table = emit_table(&records, plan.selection)?;
    let report = PlanReport {
        name: plan.name.clone(),
        records,
        table,
    };
    if let Some(root) = out {
        write_report(root, &report)?;
    }
    Ok(report)
}

pub fn write_report(root: &Path, report: &PlanReport) -> Result<()> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let put = |name: &str, text: String| {
        let path = root.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    put(
        "summary.json",
        serde_json::to_string_pretty(report).expect("plain data"),
    )?;
    put("summary.csv", report.table.to_csv())?;
    put("summary.txt", report.table.to_text())
}
