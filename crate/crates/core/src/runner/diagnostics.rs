use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::artifact::sample_generator;
use super::params::ModelParams;
use crate::distributions::stream_rng;
use crate::error::{Error, Result};
use crate::evaluation::{
    gradient_field, mode_coverage, score_heatmap, FieldMode, GridAxis, GridSpec, HistogramSpec,
};
use crate::training::TrainConfig;

/// Stream of the run seed used for diagnostic samples.
pub const STREAM_DIAG: u64 = 2001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSpec {
    pub samples: usize,
    /// 1D only: bins of the per-code histograms and classifier curves.
    pub histogram: HistogramSpec,
    /// 2D only.
    pub field: GridSpec,
    /// 2D only.
    pub heatmap: GridSpec,
    pub k_sigma: f64,
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        let square = |lo: f64, hi: f64, points| GridSpec {
            axes: vec![GridAxis { lo, hi, points }; 2],
        };
        DiagnosticsSpec {
            samples: 20_000,
            histogram: HistogramSpec::standard_1d(),
            field: square(-2.0, 2.0, 21),
            heatmap: square(-1.5, 1.5, 61),
            k_sigma: 3.0,
        }
    }
}

fn csv_text(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
}

fn save(dir: &Path, name: &str, text: String, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes per-code histograms and classifier curves (1D) or scatters,
/// gradient fields and score heatmaps (2D), plus the oversampling flags.
/// Returns the files written.
pub fn dump_diagnostics(
    params: &ModelParams,
    config: &TrainConfig,
    spec: &DiagnosticsSpec,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let target = &config.target;
    let (x, codes) = sample_generator(
        params,
        config,
        spec.samples,
        &mut stream_rng(config.seed, STREAM_DIAG),
    )?;
    let n_codes = params.generator.n_codes;

    let coverage = mode_coverage(x.view(), target, spec.k_sigma)?;
    save(
        dir,
        "oversampling.json",
        serde_json::to_string_pretty(&coverage).expect("plain data"),
        &mut written,
    )?;

    match target.dims() {
        1 => {
            let axis = *spec
                .histogram
                .axes
                .first()
                .filter(|_| spec.histogram.dims() == 1)
                .ok_or_else(|| Error::invalid("diagnostics", "1D target needs a 1D histogram"))?;
            let bins = axis.bins();
            let mut counts = vec![vec![0u64; bins]; n_codes];
            for (v, &c) in x.column(0).iter().zip(&codes) {
                if let Some(k) = axis.index(*v) {
                    counts[c][k] += 1;
                }
            }
            let mut header = vec![
                "bin_lo".to_string(),
                "bin_hi".into(),
                "target_density".into(),
            ];
            header.extend((0..n_codes).map(|c| format!("code_{c}")));
            let rows = (0..bins).map(|k| {
                let (lo, hi) = (axis.edge(k), axis.edge(k + 1));
                let mut r = vec![
                    lo.to_string(),
                    hi.to_string(),
                    target.pdf(&[0.5 * (lo + hi)]).to_string(),
                ];
                r.extend(counts.iter().map(|c| c[k].to_string()));
                r
            });
            save(dir, "codes_hist.csv", csv_text(&header, rows), &mut written)?;

            if let Some(q) = &params.classifier {
                let centers: Vec<f64> =
                    (0..bins).map(|k| axis.edge(k) + 0.5 * axis.width).collect();
                let probs = q.classify(
                    Array2::from_shape_vec((bins, 1), centers.clone())
                        .expect("column")
                        .view(),
                )?;
                let mut header = vec!["x".to_string()];
                header.extend((0..q.n_classes()).map(|i| format!("q_{i}")));
                let rows = centers.iter().zip(probs.rows()).map(|(c, p)| {
                    let mut r = vec![c.to_string()];
                    r.extend(p.iter().map(|v| v.to_string()));
                    r
                });
                save(dir, "q_curve.csv", csv_text(&header, rows), &mut written)?;
            }
        }
        2 => {
            let header: Vec<String> = ["x0", "x1", "code"].map(String::from).to_vec();
            let rows = x
                .rows()
                .into_iter()
                .zip(&codes)
                .map(|(r, c)| vec![r[0].to_string(), r[1].to_string(), c.to_string()]);
            save(
                dir,
                "samples_by_code.csv",
                csv_text(&header, rows),
                &mut written,
            )?;

            let field_header: Vec<String> = ["x", "y", "u", "v", "discriminator"]
                .map(String::from)
                .to_vec();
            let mut fields = vec![gradient_field(
                &params.bank,
                None,
                &spec.field,
                FieldMode::PerDiscriminator,
            )?];
            if params.classifier.is_some() {
                fields.push(gradient_field(
                    &params.bank,
                    params.classifier.as_ref(),
                    &spec.field,
                    FieldMode::Routed,
                )?);
            }
            for grid in &fields {
                for layer in &grid.layers {
                    let name = match layer.discriminator {
                        Some(i) => format!("field_d{i}.csv"),
                        None => "field_routed.csv".into(),
                    };
                    let rows = grid
                        .points
                        .rows()
                        .into_iter()
                        .zip(layer.vectors.rows())
                        .zip(&layer.assignment)
                        .map(|((p, v), a)| {
                            vec![
                                p[0].to_string(),
                                p[1].to_string(),
                                v[0].to_string(),
                                v[1].to_string(),
                                a.to_string(),
                            ]
                        });
                    save(dir, &name, csv_text(&field_header, rows), &mut written)?;
                }
            }

            let heat = score_heatmap(&params.bank, params.classifier.as_ref(), &spec.heatmap)?;
            let weighted = heat.weighted();
            for (i, scores) in heat.scores.iter().enumerate() {
                let mut header: Vec<String> = ["x", "y", "score"].map(String::from).to_vec();
                if weighted.is_some() {
                    header.push("weighted".into());
                }
                let rows = heat.points.rows().into_iter().enumerate().map(|(k, p)| {
                    let mut r = vec![p[0].to_string(), p[1].to_string(), scores[k].to_string()];
                    if let Some(w) = &weighted {
                        r.push(w[i][k].to_string());
                    }
                    r
                });
                save(
                    dir,
                    &format!("heatmap_d{i}.csv"),
                    csv_text(&header, rows),
                    &mut written,
                )?;
            }
        }
        d => {
            return Err(Error::invalid(
                "diagnostics",
                format!("{d}-dimensional targets are not supported"),
            ))
        }
    }
    Ok(written)
}
