use std::fs;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{decode_params, encode_params, ModelParams};
use super::plan::RunSpec;
use crate::distributions::stream_rng;
use crate::error::{Error, Result};
use crate::evaluation::{compute_metrics, Metrics};
use crate::training::{train_with, TrainConfig, TrainLog};

/// Seed of the real evaluation set, shared by every run of a target.
pub const EVAL_REAL_SEED: u64 = 0x5EED_DA7A;
/// Stream of a run's seed used for generated evaluation samples.
pub const STREAM_EVAL: u64 = 2000;

pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const RUN_FILE: &str = "run.json";
pub const LOG_FILE: &str = "log.csv";
pub const REAL_FILE: &str = "samples_real.csv";
pub const GEN_FILE: &str = "samples_gen.csv";
pub const PARAMS_FILE: &str = "params.bin";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// Bookkeeping that is not part of the reproducible result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub id: String,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub spec: RunSpec,
    pub metrics: Metrics,
    pub log: TrainLog,
    pub wall_time_secs: f64,
    pub params: ModelParams,
    pub real: Array2<f64>,
    pub generated: Array2<f64>,
    pub codes: Vec<usize>,
}

/// Draws `n` samples from a trained generator under the run's priors.
pub fn sample_generator<R: Rng + ?Sized>(
    params: &ModelParams,
    config: &TrainConfig,
    n: usize,
    rng: &mut R,
) -> Result<(Array2<f64>, Vec<usize>)> {
    let z = config.noise.sample(n, rng)?;
    let (codes, one_hot) = config.code_prior().sample(n, rng)?;
    Ok((params.generator.generate(z.view(), one_hot.view())?, codes))
}

/// The fixed real set and this run's generated set.
pub fn evaluation_samples(
    spec: &RunSpec,
    params: &ModelParams,
) -> Result<(Array2<f64>, Array2<f64>, Vec<usize>)> {
    let n = spec.eval.samples;
    let real = spec
        .train
        .target
        .sample(n, &mut stream_rng(EVAL_REAL_SEED, 0));
    let (generated, codes) = sample_generator(
        params,
        &spec.train,
        n,
        &mut stream_rng(spec.train.seed, STREAM_EVAL),
    )?;
    Ok((real, generated, codes))
}

pub fn score(
    spec: &RunSpec,
    real: &Array2<f64>,
    generated: &Array2<f64>,
    codes: &[usize],
    n_codes: usize,
) -> Result<Metrics> {
    compute_metrics(
        real.view(),
        generated.view(),
        Some((codes, n_codes)),
        &spec.train.target,
        &spec.eval,
    )
}

/// Trains one cell and scores it.
pub fn execute_run(spec: &RunSpec) -> Result<RunOutput> {
    execute_run_with(spec, None)
}

/// Like [`execute_run`], additionally writing a parameter snapshot
/// `checkpoints/params_<iteration>.bin` into the directory every `k`
/// iterations.
pub fn execute_run_with(spec: &RunSpec, checkpoints: Option<(u64, &Path)>) -> Result<RunOutput> {
    if let Some((0, _)) = checkpoints {
        return Err(Error::invalid("checkpoints", "interval must be >= 1"));
    }
    let start = Instant::now();
    let (state, log) = train_with(spec.train.clone(), |state, record| match checkpoints {
        Some((k, dir)) if (record.iteration + 1) % k == 0 => {
            let sub = dir.join(CHECKPOINT_DIR);
            fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
            write(
                &sub.join(format!("params_{:08}.bin", record.iteration + 1)),
                encode_params(&ModelParams::from_state(state)),
            )
        }
        _ => Ok(()),
    })?;
    let params = ModelParams::from_state(&state);
    let (real, generated, codes) = evaluation_samples(spec, &params)?;
    let metrics = score(spec, &real, &generated, &codes, params.generator.n_codes)?;
    Ok(RunOutput {
        spec: spec.clone(),
        metrics,
        log,
        wall_time_secs: start.elapsed().as_secs_f64(),
        params,
        real,
        generated,
        codes,
    })
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes")
}

/// Writes the run directory.
pub fn write_artifact(dir: &Path, run: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join(CONFIG_FILE), to_json(&run.spec))?;
    write(&dir.join(METRICS_FILE), to_json(&run.metrics))?;
    write(
        &dir.join(RUN_FILE),
        to_json(&RunInfo {
            id: run.spec.id.clone(),
            wall_time_secs: run.wall_time_secs,
        }),
    )?;
    write(
        &dir.join(LOG_FILE),
        log_csv(&run.log, run.params.bank.len()),
    )?;
    write(&dir.join(REAL_FILE), samples_csv(&run.real, None))?;
    write(
        &dir.join(GEN_FILE),
        samples_csv(&run.generated, Some(&run.codes)),
    )?;
    write(&dir.join(PARAMS_FILE), encode_params(&run.params))?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct LoadedArtifact {
    pub spec: RunSpec,
    pub metrics: Metrics,
    pub real: Array2<f64>,
    pub generated: Array2<f64>,
    pub codes: Vec<usize>,
    pub params: ModelParams,
}

impl LoadedArtifact {
    /// Metrics recomputed from the dumped samples.
    pub fn recompute(&self) -> Result<Metrics> {
        score(
            &self.spec,
            &self.real,
            &self.generated,
            &self.codes,
            self.params.generator.n_codes,
        )
    }
}

pub fn load_artifact(dir: &Path) -> Result<LoadedArtifact> {
    let spec: RunSpec = serde_json::from_str(&read_string(&dir.join(CONFIG_FILE))?)
        .map_err(|e| Error::format("config.json", e.to_string()))?;
    let metrics: Metrics = serde_json::from_str(&read_string(&dir.join(METRICS_FILE))?)
        .map_err(|e| Error::format("metrics.json", e.to_string()))?;
    let real = parse_samples_csv(&read_string(&dir.join(REAL_FILE))?)?;
    let gen = parse_samples_csv(&read_string(&dir.join(GEN_FILE))?)?;
    let path = dir.join(PARAMS_FILE);
    let params = decode_params(&fs::read(&path).map_err(|e| Error::io(&path, e))?)?;
    let codes = gen
        .codes
        .ok_or_else(|| Error::format("samples_gen.csv", "missing code column"))?;
    Ok(LoadedArtifact {
        spec,
        metrics,
        real: real.values,
        generated: gen.values,
        codes,
        params,
    })
}

/// Rows of `x0,x1,…[,code]` with shortest round-trip float formatting.
pub fn samples_csv(samples: &Array2<f64>, codes: Option<&[usize]>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (0..samples.ncols()).map(|d| format!("x{d}")).collect();
    if codes.is_some() {
        header.push("code".into());
    }
    w.write_record(&header).expect("in-memory write");
    for (i, row) in samples.rows().into_iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(c) = codes {
            rec.push(c[i].to_string());
        }
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleTable {
    pub values: Array2<f64>,
    pub codes: Option<Vec<usize>>,
}

/// Parses [`samples_csv`] output.
pub fn parse_samples_csv(text: &str) -> Result<SampleTable> {
    let bad = |reason: String| Error::format("samples csv", reason);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let mut dims = 0;
    while header.get(dims) == Some(format!("x{dims}").as_str()) {
        dims += 1;
    }
    let has_code = match header.len() - dims {
        0 => false,
        1 if header.get(dims) == Some("code") => true,
        _ => {
            return Err(bad(format!(
                "unexpected header {:?}",
                header.iter().collect::<Vec<_>>()
            )))
        }
    };
    if dims == 0 {
        return Err(bad("no coordinate columns".into()));
    }
    let mut values = Vec::new();
    let mut codes = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != header.len() {
            return Err(bad(format!("row {line}: {} fields", rec.len())));
        }
        for d in 0..dims {
            let v: f64 = rec[d]
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| bad(format!("row {line}: bad number {:?}", &rec[d])))?;
            values.push(v);
        }
        if has_code {
            codes.push(
                rec[dims]
                    .parse::<usize>()
                    .map_err(|_| bad(format!("row {line}: bad code {:?}", &rec[dims])))?,
            );
        }
    }
    let rows = values.len() / dims;
    Ok(SampleTable {
        values: Array2::from_shape_vec((rows, dims), values).expect("rows × dims"),
        codes: has_code.then_some(codes),
    })
}

/// Training log with one column per discriminator.
pub fn log_csv(log: &TrainLog, n: usize) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "iteration".to_string(),
        "generator_loss".into(),
        "classifier_loss".into(),
    ];
    for prefix in ["d_objective", "real_routed", "fake_routed"] {
        header.extend((0..n).map(|i| format!("{prefix}_{i}")));
    }
    w.write_record(&header).expect("in-memory write");
    let cell = |v: Option<String>| v.unwrap_or_default();
    for r in &log.records {
        let mut rec = vec![
            r.iteration.to_string(),
            r.generator_loss.to_string(),
            cell(r.classifier_loss.map(|v| v.to_string())),
        ];
        rec.extend((0..n).map(|i| cell(r.discriminator_objectives.get(i).map(|v| v.to_string()))));
        rec.extend((0..n).map(|i| cell(r.real_routed.get(i).map(|v| v.to_string()))));
        rec.extend((0..n).map(|i| cell(r.fake_routed.get(i).map(|v| v.to_string()))));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
}
