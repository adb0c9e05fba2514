use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::plan::{Metric, Selection, SelectionRule};
use crate::error::{Error, Result};
use crate::evaluation::{HistogramSpec, Metrics};

/// Outcome of one plan cell, successful or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub algorithm: String,
    pub n_discriminators: usize,
    pub seed: u64,
    pub histogram: HistogramSpec,
    pub outcome: RunOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunOutcome {
    Ok(Metrics),
    Failed(String),
}

impl RunRecord {
    pub fn metrics(&self) -> Option<&Metrics> {
        match &self.outcome {
            RunOutcome::Ok(m) => Some(m),
            RunOutcome::Failed(_) => None,
        }
    }

    pub fn failure(&self) -> Option<&str> {
        match &self.outcome {
            RunOutcome::Ok(_) => None,
            RunOutcome::Failed(reason) => Some(reason),
        }
    }

    pub fn value(&self, metric: Metric) -> Option<f64> {
        self.metrics().map(|m| match metric {
            Metric::Kl => m.kl,
            Metric::ChiSquare => m.chi_square,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub n_discriminators: usize,
    /// Seed of the selected run; `None` when every run failed.
    pub seed: Option<u64>,
    pub value: Option<f64>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub succeeded: usize,
    pub failed: usize,
    /// Modes covered by the selected run.
    pub covered: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub metric: Metric,
    pub rule: SelectionRule,
    pub rows: Vec<SummaryRow>,
}

fn stats(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

/// Groups records by (algorithm, N) in first-appearance order and applies
/// the selection rule.
pub fn emit_table(records: &[RunRecord], selection: Selection) -> Result<SummaryTable> {
    let mut groups: Vec<((String, usize), Vec<&RunRecord>)> = Vec::new();
    for r in records {
        let key = (r.algorithm.clone(), r.n_discriminators);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => {
                if members[0].histogram != r.histogram {
                    return Err(Error::invalid(
                        "summary table",
                        format!("group {}/N={} mixes histogram specs", key.0, key.1),
                    ));
                }
                members.push(r)
            }
            None => groups.push((key, vec![r])),
        }
    }
    let metric = selection.metric;
    let mut rows = Vec::new();
    for ((algorithm, n), members) in groups {
        let ok: Vec<(&RunRecord, f64)> = members
            .iter()
            .filter_map(|r| r.value(metric).map(|v| (*r, v)))
            .collect();
        let values: Vec<f64> = ok.iter().map(|(_, v)| *v).collect();
        let (mean, std) = stats(&values);
        let failed = members.len() - ok.len();
        match selection.rule {
            SelectionRule::Best => {
                let best = ok
                    .iter()
                    .fold(None::<(&RunRecord, f64)>, |b, &(r, v)| match b {
                        Some((_, bv)) if bv <= v => b,
                        _ => Some((r, v)),
                    });
                rows.push(SummaryRow {
                    algorithm,
                    n_discriminators: n,
                    seed: best.map(|(r, _)| r.seed),
                    value: best.map(|(_, v)| v),
                    mean,
                    std,
                    succeeded: ok.len(),
                    failed,
                    covered: best
                        .and_then(|(r, _)| r.metrics())
                        .map(|m| m.coverage.covered_count()),
                });
            }
            SelectionRule::All => {
                for r in members {
                    rows.push(SummaryRow {
                        algorithm: algorithm.clone(),
                        n_discriminators: n,
                        seed: Some(r.seed),
                        value: r.value(metric),
                        mean,
                        std,
                        succeeded: usize::from(r.metrics().is_some()),
                        failed: usize::from(r.metrics().is_none()),
                        covered: r.metrics().map(|m| m.coverage.covered_count()),
                    });
                }
            }
        }
    }
    Ok(SummaryTable {
        metric,
        rule: selection.rule,
        rows,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

impl SummaryTable {
    /// True when every group has at least one successful run.
    pub fn complete(&self) -> bool {
        self.rows.iter().all(|r| r.value.is_some())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let name = self.metric.label();
        let _ = writeln!(
            out,
            "{:<22} {:>3} {:>6} {:>12} {:>20} {:>7} {:>6}",
            "algorithm", "N", "seed", name, "mean±std", "covered", "failed"
        );
        for r in &self.rows {
            let mean_std = match (r.mean, r.std) {
                (Some(m), Some(s)) => format!("{m:.4}±{s:.4}"),
                _ => "-".into(),
            };
            let _ = writeln!(
                out,
                "{:<22} {:>3} {:>6} {:>12} {:>20} {:>7} {:>6}",
                r.algorithm,
                r.n_discriminators,
                r.seed.map_or_else(|| "-".into(), |s| s.to_string()),
                fmt_opt(r.value),
                mean_std,
                r.covered.map_or_else(|| "-".into(), |c| c.to_string()),
                r.failed
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "algorithm",
            "n_discriminators",
            "seed",
            self.metric.label(),
            "mean",
            "std",
            "succeeded",
            "failed",
            "covered",
        ])
        .expect("in-memory write");
        let s = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.algorithm.clone(),
                r.n_discriminators.to_string(),
                r.seed.map(|v| v.to_string()).unwrap_or_default(),
                s(r.value),
                s(r.mean),
                s(r.std),
                r.succeeded.to_string(),
                r.failed.to_string(),
                r.covered.map(|v| v.to_string()).unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::ModeCoverage;

    fn record(alg: &str, seed: u64, kl: Option<f64>) -> RunRecord {
        RunRecord {
            id: format!("{alg}-{seed}"),
            algorithm: alg.into(),
            n_discriminators: 5,
            seed,
            histogram: HistogramSpec::standard_1d(),
            outcome: match kl {
                Some(kl) => RunOutcome::Ok(Metrics {
                    kl,
                    chi_square: kl * 10.0,
                    coverage: ModeCoverage {
                        mass: vec![0.2; 5],
                        unassigned: 0.0,
                        covered: vec![true; 5],
                        oversampled: vec![false; 5],
                    },
                    purity: None,
                    generated_out_of_range: 0,
                    real_out_of_range: 0,
                }),
                None => RunOutcome::Failed("diverged".into()),
            },
        }
    }

    #[test]
    fn best_selection() {
        let recs = vec![
            record("gman-mean", 0, Some(0.69)),
            record("dopanet", 0, Some(0.02)),
        ];
        let t = emit_table(&recs, Selection::default()).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[1].value, Some(0.02));
        let pooled: Vec<RunRecord> = [0.69, 0.02]
            .iter()
            .enumerate()
            .map(|(s, &v)| record("dopanet", s as u64, Some(v)))
            .collect();
        let t = emit_table(&pooled, Selection::default()).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].value, Some(0.02));
        assert_eq!(t.rows[0].seed, Some(1));
    }

    #[test]
    fn single_artifact_echoes_metrics() {
        let t = emit_table(&[record("dopanet", 7, Some(0.3))], Selection::default()).unwrap();
        assert_eq!(t.rows[0].value, Some(0.3));
        assert_eq!(t.rows[0].mean, Some(0.3));
        assert_eq!(t.rows[0].std, Some(0.0));
        assert_eq!(t.rows[0].covered, Some(5));
    }

    #[test]
    fn mean_and_std() {
        let recs: Vec<RunRecord> = (0..20)
            .map(|s| record("dopanet", s, Some(s as f64 / 10.0)))
            .collect();
        let t = emit_table(&recs, Selection::default()).unwrap();
        let values: Vec<f64> = (0..20).map(|s| s as f64 / 10.0).collect();
        let mean = values.iter().sum::<f64>() / 20.0;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 20.0).sqrt();
        assert_eq!(t.rows[0].mean, Some(mean));
        assert_eq!(t.rows[0].std, Some(std));
        assert!(t.to_text().contains(&format!("{mean:.4}±{std:.4}")));
    }

    #[test]
    fn failures_and_chi_square() {
        let recs = vec![
            record("dopanet", 0, None),
            record("dopanet", 1, Some(0.5)),
            record("gman-mean", 0, None),
        ];
        let sel = Selection {
            rule: SelectionRule::Best,
            metric: Metric::ChiSquare,
        };
        let t = emit_table(&recs, sel).unwrap();
        assert_eq!(t.rows[0].value, Some(5.0));
        assert_eq!(t.rows[0].failed, 1);
        assert_eq!(t.rows[1].value, None);
        assert!(!t.complete());
        let all = emit_table(
            &recs,
            Selection {
                rule: SelectionRule::All,
                metric: Metric::Kl,
            },
        )
        .unwrap();
        assert_eq!(all.rows.len(), 3);
        assert!(all.to_csv().lines().count() == 4);
    }

    #[test]
    fn mixed_histograms_refused() {
        let mut b = record("dopanet", 1, Some(0.1));
        b.histogram = HistogramSpec::one_d(0.0, 1.0, 0.5).unwrap();
        assert!(emit_table(&[record("dopanet", 0, Some(0.1)), b], Selection::default()).is_err());
    }
}
