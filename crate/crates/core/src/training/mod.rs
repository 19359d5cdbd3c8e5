//! The training loop: seeded batching over sources, view construction,
//! the selected objective, Adam, metrics and checkpoints.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

pub use config::{DatasetKind, TrainConfig};

use crate::data::{load_mnist_split, locate_idx_dir, data_root, synth_generate, Dataset, Split, SynthDataset};
use crate::error::{Error, Result};
use crate::eval::{knn_sweep, Metric, RepresentationTable};
use crate::losses::{objective, Batch, LossBreakdown};
use crate::nn::{
    encode_values, load_checkpoint, save_checkpoint, Adam, AdamHyper, Architecture, MlpSpec, Model, ModelCheckpoint,
    Storable,
};
use crate::numerics::{gaussian_sample, Graph, Rng, Stream, Tensor};

pub const METRICS_HEADER: &str = "epoch,step,loss_total,loss_recon,loss_entropy,loss_prior,loss_extra,lr,seconds";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.simvae";
pub const CONFIG_FILE: &str = "config.txt";
pub const EVAL_TRACE_FILE: &str = "eval_trace.csv";

/// Snapshot key holding the dataset fingerprint.
const FINGERPRINT_KEY: &str = "data_fingerprint";

/// One metrics row: epoch means of the loss terms.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    /// Optimiser steps taken so far.
    pub step: u64,
    pub loss: LossBreakdown,
    pub lr: f64,
    pub seconds: f64,
}

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        let l = &self.loss;
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.step,
            l.total,
            l.recon,
            l.entropy,
            l.prior,
            l.extra_sum(),
            self.lr,
            self.seconds
        )
    }
}

/// Training and optional evaluation data for a config.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub train: Dataset,
    /// Separate test set (image datasets); synthetic data splits itself.
    pub test: Option<Dataset>,
}

/// Loads the data a config asks for.
///
/// Image datasets come from `data_path` or `$SIMVAE_DATA_DIR/<name>/`;
/// synthetic data is read from `data_path` or generated from the
/// `synth_*` keys.
pub fn load_data(cfg: &TrainConfig) -> Result<LoadedData> {
    match cfg.dataset {
        DatasetKind::Synth => {
            let ds = match cfg.data_path() {
                Some(p) => SynthDataset::load(&p)?,
                None => synth_generate(&cfg.synth_config())?,
            };
            Ok(LoadedData {
                train: Dataset::Synth(ds),
                test: None,
            })
        }
        DatasetKind::Mnist | DatasetKind::FashionMnist => {
            let name = cfg.dataset.name();
            let root = cfg.data_path().unwrap_or_else(data_root);
            let dir = locate_idx_dir(&root, name).ok_or_else(|| {
                Error::Data(format!(
                    "no {name} IDX files under {} (set SIMVAE_DATA_DIR or data_path)",
                    root.display()
                ))
            })?;
            let mut train = load_mnist_split(&dir, Split::Train, name)?;
            if cfg.train_subset > 0 {
                train = train.head(cfg.train_subset)?;
            }
            let mut test = load_mnist_split(&dir, Split::Test, name)?;
            if cfg.binarize {
                train = train.binarized(0.5);
                test = test.binarized(0.5);
            }
            Ok(LoadedData {
                train: Dataset::Images {
                    data: train,
                    augment: cfg.augment(),
                },
                test: Some(Dataset::Images {
                    data: test,
                    augment: cfg.augment(),
                }),
            })
        }
    }
}

/// Network shapes for a config on data of width `input_dim`.
pub fn architecture(cfg: &TrainConfig, input_dim: usize, n_sources: usize) -> Architecture {
    let hidden = if !cfg.hidden.is_empty() {
        cfg.hidden.clone()
    } else if cfg.dataset == DatasetKind::Synth {
        vec![64, 64]
    } else {
        vec![500, 500, 2000]
    };
    let rev: Vec<usize> = hidden.iter().rev().copied().collect();
    Architecture {
        encoder: MlpSpec::gaussian_encoder(input_dim, &hidden, cfg.latent_dim),
        decoder: cfg
            .loss
            .needs_decoder()
            .then(|| MlpSpec::decoder(cfg.latent_dim, &rev, input_dim)),
        class_table: cfg.loss.needs_class_table().then_some(n_sources),
    }
}

/// FNV-1a over the dataset's identity, inputs and labels.
pub fn fingerprint(data: &Dataset) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    eat(data.name().as_bytes());
    eat(&(data.len() as u64).to_le_bytes());
    eat(&(data.input_dim() as u64).to_le_bytes());
    match data {
        Dataset::Images { data, .. } => {
            for p in data.images.data() {
                eat(&p.to_le_bytes());
            }
        }
        Dataset::Synth(s) => {
            for v in s.x.data() {
                eat(&v.to_le_bytes());
            }
        }
    }
    for &y in data.labels() {
        eat(&(y as u64).to_le_bytes());
    }
    format!("{h:016x}")
}

fn snapshot(cfg: &TrainConfig, data: &Dataset) -> Vec<(String, String)> {
    let mut s = cfg.to_pairs();
    s.push((FINGERPRINT_KEY.into(), fingerprint(data)));
    s
}

/// Rebuilds the config recorded in a checkpoint.
pub fn config_from_snapshot(pairs: &[(String, String)]) -> Result<TrainConfig> {
    TrainConfig::from_pairs(
        pairs
            .iter()
            .filter(|(k, _)| k != FINGERPRINT_KEY)
            .map(|(k, v)| (k.as_str(), v.as_str())),
    )
}

/// Everything a finished (or resumed) run produced.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub checkpoint: ModelCheckpoint<T>,
    /// Rows written by this invocation.
    pub metrics: Vec<EpochMetrics>,
    /// Sources per batch after the memory guard.
    pub batch_size: usize,
    pub message: String,
}

fn effective_batch(cfg: &TrainConfig) -> usize {
    let rows = cfg.batch_size * cfg.views;
    if rows > cfg.max_batch_rows {
        let b = (cfg.max_batch_rows / cfg.views).max(1);
        eprintln!(
            "warning: batch_size {} × views {} = {rows} rows exceeds max_batch_rows {}; using batch_size {b}",
            cfg.batch_size, cfg.views, cfg.max_batch_rows
        );
        b
    } else {
        cfg.batch_size
    }
}

fn check_dtype<T: Storable>(cfg: &TrainConfig) -> Result<()> {
    if T::DTYPE != cfg.dtype {
        return Err(Error::Config(format!(
            "config asks for dtype {} but the loop was instantiated for {}",
            cfg.dtype.name(),
            T::DTYPE.name()
        )));
    }
    Ok(())
}

fn check_views(cfg: &TrainConfig, data: &Dataset) -> Result<()> {
    if let Some(max) = data.max_views() {
        if cfg.views > max {
            return Err(Error::Config(format!(
                "views = {} but the dataset stores {max} per source",
                cfg.views
            )));
        }
    }
    Ok(())
}

/// Trains from scratch. With `out` set, writes `metrics.csv`,
/// `config.txt`, periodic `checkpoint.simvae` and, when enabled,
/// `eval_trace.csv` there.
pub fn train<T: Storable>(
    cfg: &TrainConfig,
    data: &LoadedData,
    out: Option<&Path>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    check_dtype::<T>(cfg)?;
    check_views(cfg, &data.train)?;
    let arch = architecture(cfg, data.train.input_dim(), data.train.len());
    let mut rng = Rng::derive(cfg.seed, Stream::Init, &[]);
    let model = Model::<T>::init(arch, &mut rng)?;
    let opt = Adam::new(&model.params, AdamHyper::with_lr(cfg.lr));
    let ckpt = ModelCheckpoint {
        model,
        optimizer: Some(opt.state),
        seed: cfg.seed,
        epoch: 0,
        config: snapshot(cfg, &data.train),
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        cfg.save(&dir.join(CONFIG_FILE))?;
        let p = dir.join(METRICS_FILE);
        fs::write(&p, format!("{METRICS_HEADER}\n")).map_err(|e| Error::io(&p, e))?;
        if cfg.eval_every > 0 {
            let p = dir.join(EVAL_TRACE_FILE);
            fs::write(&p, "epoch,knn_accuracy,best_k\n").map_err(|e| Error::io(&p, e))?;
        }
    }
    run_epochs(cfg, data, ckpt, out)
}

/// Keys whose values differ between two snapshots, as `key: a -> b`.
fn snapshot_diff(saved: &[(String, String)], now: &[(String, String)]) -> Vec<String> {
    let mut diff = Vec::new();
    for (k, v) in now {
        if TrainConfig::RESUMABLE.contains(&k.as_str()) {
            continue;
        }
        let old = saved.iter().find(|(sk, _)| sk == k).map(|(_, v)| v.as_str());
        if old != Some(v.as_str()) {
            diff.push(format!("{k}: {} -> {v}", old.unwrap_or("<missing>")));
        }
    }
    diff
}

/// Continues the run saved at `checkpoint` up to `cfg.epochs`.
///
/// Refuses (listing the differences) if the config or data changed in a way
/// that affects the loss trace. A run that already reached `cfg.epochs` is
/// left untouched.
pub fn resume<T: Storable>(
    checkpoint: &Path,
    cfg: &TrainConfig,
    data: &LoadedData,
    out: Option<&Path>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    check_dtype::<T>(cfg)?;
    let ckpt: ModelCheckpoint<T> = load_checkpoint(checkpoint)?;
    let diff = snapshot_diff(&ckpt.config, &snapshot(cfg, &data.train));
    if !diff.is_empty() {
        return Err(Error::Config(format!(
            "refusing to resume {}: config or data differ\n  {}",
            checkpoint.display(),
            diff.join("\n  ")
        )));
    }
    if ckpt.optimizer.is_none() {
        return Err(Error::Data("checkpoint has no optimizer state to resume from".into()));
    }
    if ckpt.epoch >= cfg.epochs {
        let message = format!(
            "run already finished: checkpoint is at epoch {} of {}; nothing to do",
            ckpt.epoch, cfg.epochs
        );
        return Ok(TrainOutcome {
            checkpoint: ckpt,
            metrics: Vec::new(),
            batch_size: effective_batch(cfg),
            message,
        });
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        cfg.save(&dir.join(CONFIG_FILE))?;
        // Keep the rows up to the checkpoint, drop any written after it.
        let p = dir.join(METRICS_FILE);
        let old = fs::read_to_string(&p).unwrap_or_default();
        let mut kept = format!("{METRICS_HEADER}\n");
        for line in old.lines().skip(1) {
            let epoch: usize = line.split(',').next().and_then(|e| e.parse().ok()).unwrap_or(usize::MAX);
            if epoch <= ckpt.epoch {
                kept.push_str(line);
                kept.push('\n');
            }
        }
        fs::write(&p, kept).map_err(|e| Error::io(&p, e))?;
        let p = dir.join(EVAL_TRACE_FILE);
        if cfg.eval_every > 0 && !p.exists() {
            fs::write(&p, "epoch,knn_accuracy,best_k\n").map_err(|e| Error::io(&p, e))?;
        }
    }
    let mut ckpt = ckpt;
    ckpt.config = snapshot(cfg, &data.train);
    run_epochs(cfg, data, ckpt, out)
}

fn append(path: &Path, line: &str) -> Result<()> {
    let mut f = fs::OpenOptions::new()
        .append(true)
        .create(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))
}

/// Builds the batch for `sources` at `epoch`: views in parallel, noise
/// from the batch's own stream.
fn build_batch<T: Storable>(
    cfg: &TrainConfig,
    data: &Dataset,
    sources: &[usize],
    epoch: usize,
    index: usize,
    latent: usize,
) -> Result<Batch<T>> {
    let views: Vec<Vec<f32>> = sources
        .par_iter()
        .map(|&s| data.views(s, cfg.views, cfg.seed, epoch as u64))
        .collect::<Result<_>>()?;
    let rows = sources.len() * cfg.views;
    let x = Tensor::new(vec![rows, data.input_dim()], views.concat())?.cast::<T>();
    let mut rng = Rng::derive(cfg.seed, Stream::Sampling, &[epoch as u64, index as u64]);
    let eps = if cfg.loss.needs_decoder() {
        (0..cfg.mc_samples).map(|_| gaussian_sample(&mut rng, &[rows, latent])).collect()
    } else {
        Vec::new()
    };
    Ok(Batch {
        x,
        views: cfg.views,
        sources: sources.to_vec(),
        eps,
    })
}

fn first_non_finite(b: &LossBreakdown) -> Option<String> {
    let named = [("total", b.total), ("recon", b.recon), ("entropy", b.entropy), ("prior", b.prior)];
    named
        .iter()
        .map(|(n, v)| (n.to_string(), *v))
        .chain(b.extra.iter().cloned())
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
}

fn run_epochs<T: Storable>(
    cfg: &TrainConfig,
    data: &LoadedData,
    mut ckpt: ModelCheckpoint<T>,
    out: Option<&Path>,
) -> Result<TrainOutcome<T>> {
    let train_data = &data.train;
    let batch_size = effective_batch(cfg);
    let loss_cfg = cfg.loss_config();
    let latent = ckpt.model.arch.latent_dim();
    let mut opt = Adam {
        hyper: AdamHyper::with_lr(cfg.lr),
        state: ckpt.optimizer.take().expect("optimizer state present"),
    };
    let sources = train_data.train_sources();
    if sources.is_empty() {
        return Err(Error::Data("no training sources".into()));
    }
    let mut metrics = Vec::new();
    let start = ckpt.epoch;
    for epoch in start..cfg.epochs {
        let clock = Instant::now();
        let order: Vec<usize> = Rng::derive(cfg.seed, Stream::Shuffle, &[epoch as u64])
            .permutation(sources.len())
            .into_iter()
            .map(|i| sources[i])
            .collect();
        let mut acc = LossBreakdown::default();
        for (b, chunk) in order.chunks(batch_size).enumerate() {
            let batch = build_batch::<T>(cfg, train_data, chunk, epoch, b, latent)?;
            let mut g = Graph::<T>::new();
            let vars = ckpt.model.params.bind(&mut g);
            let out = objective(&mut g, &ckpt.model, &vars, &batch, &loss_cfg).map_err(|e| match e {
                Error::Numeric(m) => Error::Numeric(format!("epoch {}, batch {b}: {m}; no update applied", epoch + 1)),
                other => other,
            })?;
            if let Some(term) = first_non_finite(&out.breakdown) {
                return Err(Error::Numeric(format!(
                    "non-finite `{term}` loss at epoch {}, batch {b} (sources {:?}..); no update applied",
                    epoch + 1,
                    &chunk[..chunk.len().min(4)]
                )));
            }
            g.backward(out.total)?;
            let grads: Vec<Tensor<T>> = vars.iter().map(|&v| g.grad_or_zeros(v)).collect();
            opt.step(&mut ckpt.model.params, &grads).map_err(|e| match e {
                Error::Numeric(m) => Error::Numeric(format!("epoch {}, batch {b}: {m}", epoch + 1)),
                other => other,
            })?;
            acc.accumulate(&out.breakdown, chunk.len() as f64 / order.len() as f64);
        }
        // Logged total is the sum of the logged terms.
        acc.total = acc.combined();
        let row = EpochMetrics {
            epoch: epoch + 1,
            step: opt.state.t,
            loss: acc,
            lr: cfg.lr,
            seconds: if cfg.log_wall_time { clock.elapsed().as_secs_f64() } else { 0.0 },
        };
        ckpt.epoch = epoch + 1;
        if let Some(dir) = out {
            append(&dir.join(METRICS_FILE), &row.csv_row())?;
            let last = epoch + 1 == cfg.epochs;
            if last || (epoch + 1) % cfg.checkpoint_every == 0 {
                ckpt.optimizer = Some(opt.state.clone());
                save_checkpoint(&dir.join(CHECKPOINT_FILE), &ckpt)?;
            }
            if cfg.eval_every > 0 && ((epoch + 1) % cfg.eval_every == 0 || last) {
                let (k, a) = quick_knn(&ckpt.model, data)?;
                append(&dir.join(EVAL_TRACE_FILE), &format!("{},{a},{k}", epoch + 1))?;
            }
        }
        metrics.push(row);
    }
    ckpt.optimizer = Some(opt.state);
    let message = format!("trained epochs {}..={} ({} steps total)", start + 1, cfg.epochs, ckpt.optimizer.as_ref().map_or(0, |o| o.t));
    Ok(TrainOutcome {
        checkpoint: ckpt,
        metrics,
        batch_size,
        message,
    })
}

/// Train/test representation tables for a model on loaded data: the
/// separate test set when there is one, otherwise the dataset's own split.
pub fn export_split<T: Storable>(
    model: &Model<T>,
    data: &LoadedData,
    use_mean: bool,
    seed: u64,
) -> Result<(RepresentationTable, RepresentationTable)> {
    match &data.test {
        Some(test) => {
            let all: Vec<usize> = (0..data.train.len()).collect();
            let tr = export_representations(model, &data.train, &all, use_mean, seed)?;
            let te_idx: Vec<usize> = (0..test.len()).collect();
            // A different stream for the test rows so sampled tables stay independent.
            let te = export_representations(model, test, &te_idx, use_mean, seed ^ 0x7e57)?;
            Ok((tr, te))
        }
        None => {
            let (tr_idx, te_idx) = data.train.split();
            Ok((
                export_representations(model, &data.train, &tr_idx, use_mean, seed)?,
                export_representations(model, &data.train, &te_idx, use_mean, seed)?,
            ))
        }
    }
}

fn quick_knn<T: Storable>(model: &Model<T>, data: &LoadedData) -> Result<(usize, f64)> {
    let (tr, te) = export_split(model, data, true, 0)?;
    let (k, a, _) = knn_sweep(&tr, &te, 1..=15, Metric::Euclidean)?;
    Ok((k, a))
}

/// Encodes rows `idx` of `data` without augmentation.
///
/// `use_mean` returns posterior means; otherwise one posterior sample per
/// row drawn from the row's own stream under `seed`.
pub fn export_representations<T: Storable>(
    model: &Model<T>,
    data: &Dataset,
    idx: &[usize],
    use_mean: bool,
    seed: u64,
) -> Result<RepresentationTable> {
    if model.arch.input_dim() != data.input_dim() {
        return Err(Error::Dimension(format!(
            "encoder expects {}-d inputs, dataset `{}` has {}",
            model.arch.input_dim(),
            data.name(),
            data.input_dim()
        )));
    }
    let d = model.arch.latent_dim();
    let mut z = Vec::with_capacity(idx.len() * d);
    for chunk in idx.chunks(512) {
        let x: Vec<f32> = chunk.iter().flat_map(|&i| data.eval_input(i)).collect();
        let x = Tensor::new(vec![chunk.len(), data.input_dim()], x)?.cast::<T>();
        let post = encode_values(&model.encoder, &model.params, &x)?;
        if use_mean {
            z.extend(post.mu.to_f64_vec());
        } else {
            let (mu, lv) = (post.mu.to_f64_vec(), post.logvar.to_f64_vec());
            for (r, &i) in chunk.iter().enumerate() {
                let mut rng = Rng::derive(seed, Stream::Eval, &[i as u64]);
                for k in 0..d {
                    z.push(mu[r * d + k] + (0.5 * lv[r * d + k]).exp() * rng.normal());
                }
            }
        }
    }
    let labels = idx.iter().map(|&i| data.labels()[i]).collect();
    let mut t = RepresentationTable::new(Tensor::new(vec![idx.len(), d], z)?, labels)?;
    if let Some((names, s)) = data.style() {
        t = t.with_style(names, s.select_rows(idx)?)?;
    }
    Ok(t.with_ids("", data.name()))
}

/// Reads a metrics CSV back into rows of numbers (header skipped).
pub fn read_metrics(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .skip(1)
        .map(|l| {
            l.split(',')
                .map(|v| {
                    v.parse::<f64>().map_err(|_| Error::Parse {
                        path: path.to_path_buf(),
                        reason: format!("bad number `{v}`"),
                    })
                })
                .collect()
        })
        .collect()
}

/// Human-readable summary of a metrics row list.
pub fn summarize(metrics: &[EpochMetrics]) -> String {
    let mut s = String::new();
    for m in metrics {
        let _ = writeln!(
            s,
            "epoch {:>4}  step {:>6}  loss {:.5}  recon {:.5}  entropy {:.5}  prior {:.5}  extra {:.5}",
            m.epoch,
            m.step,
            m.loss.total,
            m.loss.recon,
            m.loss.entropy,
            m.loss.prior,
            m.loss.extra_sum()
        );
    }
    s
}

/// Default run directory layout under `out`.
pub fn checkpoint_path(out: &Path) -> PathBuf {
    out.join(CHECKPOINT_FILE)
}
