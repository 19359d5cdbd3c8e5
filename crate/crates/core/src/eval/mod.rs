//! Probes, clustering metrics, style regression and generation on frozen
//! representations.

mod generate;
mod gmm;
mod knn;
mod metrics;
mod probe;
mod style;
mod table;

use std::fmt::Write as _;
use std::ops::RangeInclusive;
use std::path::Path;

pub use generate::{
    conditional_generate, fit_class_gaussian, frozen_decoder_train, sample_class_latents, write_pgm, ClassGaussian,
    DecoderConfig, FrozenDecoder,
};
pub use gmm::{gmm_fit, GmmConfig, GmmModel};
pub use knn::{distance, knn_classify, knn_predict, knn_sweep, vote, KnnSweep, Metric};
pub use metrics::{ari, nmi, reconstruction_mse};
pub use probe::{linear_probe, mlp_probe, ProbeConfig};
pub use style::{r_squared, ridge_fit, style_probe};
pub use table::RepresentationTable;

use crate::error::{Error, Result};

/// One line of the evaluation report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub probe: String,
    pub dataset: String,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
    pub checkpoint_id: String,
}

pub const REPORT_HEADER: &str = "probe,dataset,metric,value,seed,checkpoint_id";

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut s = String::from(REPORT_HEADER);
    s.push('\n');
    for r in rows {
        writeln!(s, "{},{},{},{},{},{}", r.probe, r.dataset, r.metric, r.value, r.seed, r.checkpoint_id)
            .expect("string write");
    }
    s
}

pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    std::fs::write(path, report_csv(rows)).map_err(|e| Error::io(path, e))
}

/// Which probes [`evaluate`] runs and with what settings.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub ks: RangeInclusive<usize>,
    pub metric: Metric,
    /// Also report kNN under the other metric.
    pub both_metrics: bool,
    pub probes: bool,
    pub probe: ProbeConfig,
    pub gmm: bool,
    pub gmm_n_init: usize,
    pub gmm_reg: f64,
    pub style_lambda: f64,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            ks: 1..=15,
            metric: Metric::Euclidean,
            both_metrics: false,
            probes: true,
            probe: ProbeConfig::default(),
            gmm: true,
            gmm_n_init: 10,
            gmm_reg: 1e-6,
            style_lambda: 1e-3,
            seed: 0,
        }
    }
}

/// Runs the probe suite: kNN sweep, linear and MLP probes (train → test),
/// GMM clustering of the test table scored against its labels with the
/// true class count, and the style probe when style variables exist.
pub fn evaluate(train: &RepresentationTable, test: &RepresentationTable, s: &EvalSettings) -> Result<Vec<ReportRow>> {
    let ds = if test.dataset_id.is_empty() { "unknown".to_string() } else { test.dataset_id.clone() };
    let row = |probe: &str, metric: String, value: f64| ReportRow {
        probe: probe.into(),
        dataset: ds.clone(),
        metric,
        value,
        seed: s.seed,
        checkpoint_id: test.checkpoint_id.clone(),
    };
    let mut out = Vec::new();
    let mut metrics = vec![s.metric];
    if s.both_metrics {
        metrics.push(match s.metric {
            Metric::Euclidean => Metric::Cosine,
            Metric::Cosine => Metric::Euclidean,
        });
    }
    for m in metrics {
        let (k, acc, _) = knn_sweep(train, test, s.ks.clone(), m)?;
        let tag = if m == Metric::Euclidean { "knn" } else { "knn_cosine" };
        out.push(row(tag, "accuracy".into(), acc));
        out.push(row(tag, "best_k".into(), k as f64));
    }
    if s.probes {
        let cfg = ProbeConfig { seed: s.seed, ..s.probe };
        out.push(row("linear", "accuracy".into(), linear_probe(train, test, &cfg)?));
        out.push(row("mlp", "accuracy".into(), mlp_probe(train, test, &cfg)?));
        out.push(row("mlp", "hidden".into(), cfg.hidden as f64));
    }
    if s.gmm {
        let k = test.labels.iter().collect::<std::collections::BTreeSet<_>>().len();
        let cfg = GmmConfig {
            n_init: s.gmm_n_init,
            reg: s.gmm_reg,
            seed: s.seed,
            ..GmmConfig::new(k)
        };
        let pred = gmm_fit(&test.z, &cfg)?.predict(&test.z)?;
        out.push(row("gmm", "nmi".into(), nmi(&pred, &test.labels)?));
        out.push(row("gmm", "ari".into(), ari(&pred, &test.labels)?));
    }
    if train.style.is_some() {
        for (name, r2) in style_probe(train, s.style_lambda)? {
            out.push(row("style", format!("r2_{name}"), r2));
        }
    }
    Ok(out)
}
