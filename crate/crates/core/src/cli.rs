//! The `simvae` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{synth_generate, Dataset};
use crate::error::{Error, Result};
use crate::eval::{
    conditional_generate, evaluate, frozen_decoder_train, reconstruction_mse, write_pgm, write_report, DecoderConfig,
    EvalSettings, Metric, ReportRow, RepresentationTable, REPORT_HEADER,
};
use crate::losses::gradcheck_suite;
use crate::nn::container::Container;
use crate::nn::{checkpoint_dtype, MlpSpec, Model, ModelCheckpoint, Storable};
use crate::numerics::{DType, Tensor};
use crate::ssl_model::verify_prior;
use crate::training::{
    checkpoint_path, config_from_snapshot, export_split, load_data, resume, summarize, train, LoadedData, TrainConfig,
    CONFIG_FILE,
};

pub const TRAIN_REPS: &str = "train.reps";
pub const TEST_REPS: &str = "test.reps";
pub const REPORT_FILE: &str = "report.csv";

#[derive(Debug, Parser)]
#[command(
    name = "simvae",
    version,
    about = "Generative self-supervised learning: training, evaluation and verification",
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// `key = value` config file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Seed for training, or for probes and sampling in other commands.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, value_name = "N", default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model; writes metrics.csv, config.txt and checkpoint.simvae.
    Train {
        /// Continue from <out>/checkpoint.simvae if present.
        #[arg(long)]
        resume: bool,
    },
    /// Run the probe suite over a checkpoint or exported tables.
    Eval {
        /// Checkpoint to encode with [default: <out>/checkpoint.simvae].
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Directory holding train.reps and test.reps instead of a checkpoint.
        #[arg(long, conflicts_with = "checkpoint")]
        reps: Option<PathBuf>,
        /// Report kNN under both distances.
        #[arg(long)]
        verbose: bool,
        /// Skip the linear and MLP probes.
        #[arg(long)]
        no_probes: bool,
        /// Skip GMM clustering.
        #[arg(long)]
        no_gmm: bool,
        /// Also train a decoder on frozen representations and report its test MSE.
        #[arg(long)]
        frozen_decoder: bool,
    },
    /// Sample class-conditional latents and decode them to PGM images.
    Generate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Class to generate [default: every class].
        #[arg(long)]
        class: Option<usize>,
        /// Images per class.
        #[arg(long, default_value_t = 8)]
        n: usize,
        /// Write plain-text P2 instead of binary P5.
        #[arg(long)]
        plain: bool,
    },
    /// Write train/test representation tables.
    ExportReps {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// One posterior sample per row instead of the mean.
        #[arg(long)]
        sample: bool,
    },
    /// Finite-difference check of every objective in 64-bit mode.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Generate the synthetic hierarchical dataset to <out>/synth.simvae.
    Synth,
    /// Check the closed-form priors against ψ-integration.
    VerifyPrior {
        #[arg(long, default_value_t = 20)]
        pairs: usize,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
    },
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            // Bare invocation prints help but is still a usage error.
            return if e.kind() == clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                1
            } else {
                code
            };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    if cli.common.threads == 0 {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    // Fails only if a pool already exists (repeated calls in one process).
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.common.threads).build_global();
    let c = &cli.common;
    match &cli.command {
        Command::Train { resume } => cmd_train(c, *resume),
        Command::Eval {
            checkpoint,
            reps,
            verbose,
            no_probes,
            no_gmm,
            frozen_decoder,
        } => {
            let settings = EvalSettings {
                both_metrics: *verbose,
                probes: !*no_probes,
                gmm: !*no_gmm,
                metric: Metric::Euclidean,
                seed: c.seed.unwrap_or(0),
                ..EvalSettings::default()
            };
            cmd_eval(c, checkpoint.as_deref(), reps.as_deref(), &settings, *frozen_decoder)
        }
        Command::Generate {
            checkpoint,
            class,
            n,
            plain,
        } => cmd_generate(c, checkpoint.as_deref(), *class, *n, !*plain),
        Command::ExportReps { checkpoint, sample } => cmd_export(c, checkpoint.as_deref(), *sample),
        Command::Gradcheck {
            instances,
            step,
            tolerance,
        } => cmd_gradcheck(c, *instances, *step, *tolerance),
        Command::Synth => cmd_synth(c),
        Command::VerifyPrior {
            pairs,
            samples,
            tolerance,
        } => cmd_verify_prior(c, *pairs, *samples, *tolerance),
    }
}

/// Defaults, then the config file, then `--seed`, then `--set` in order.
pub fn merged_config(c: &Common) -> Result<TrainConfig> {
    let mut cfg = match &c.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    cfg.apply_overrides(&c.overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(c: &Common) -> Result<&Path> {
    fs::create_dir_all(&c.out).map_err(|e| Error::io(&c.out, e))?;
    Ok(&c.out)
}

fn cmd_train(c: &Common, resume_run: bool) -> Result<()> {
    let cfg = merged_config(c)?;
    let data = load_data(&cfg)?;
    let out = out_dir(c)?;
    let ck = checkpoint_path(out);
    let resuming = resume_run && ck.exists();
    if resume_run && !resuming {
        eprintln!("no checkpoint at {}; starting fresh", ck.display());
    }
    eprintln!(
        "training {} on {} ({} sources, {} views, dtype {})",
        cfg.loss,
        data.train.name(),
        data.train.train_sources().len(),
        cfg.views,
        cfg.dtype.name()
    );
    macro_rules! go {
        ($t:ty) => {{
            let o = if resuming {
                resume::<$t>(&ck, &cfg, &data, Some(out))?
            } else {
                train::<$t>(&cfg, &data, Some(out))?
            };
            print!("{}", summarize(&o.metrics));
            println!("{}", o.message);
        }};
    }
    match cfg.dtype {
        DType::F32 => go!(f32),
        DType::F64 => go!(f64),
    }
    println!("wrote {}", out.display());
    Ok(())
}

/// A checkpoint of either precision together with the data it was trained on.
enum Loaded {
    F32(ModelCheckpoint<f32>),
    F64(ModelCheckpoint<f64>),
}

fn load_any(path: &Path) -> Result<Loaded> {
    let container = Container::read(path)?;
    Ok(match checkpoint_dtype(&container)? {
        DType::F32 => Loaded::F32(ModelCheckpoint::from_container(&container)?),
        DType::F64 => Loaded::F64(ModelCheckpoint::from_container(&container)?),
    })
}

/// Loads a checkpoint and rebuilds its data from the recorded config with
/// `--set` applied on top.
fn checkpoint_and_data(c: &Common, path: Option<&Path>) -> Result<(PathBuf, Loaded, TrainConfig, LoadedData)> {
    let path = path.map(Path::to_path_buf).unwrap_or_else(|| checkpoint_path(&c.out));
    let loaded = load_any(&path)?;
    let pairs = match &loaded {
        Loaded::F32(k) => &k.config,
        Loaded::F64(k) => &k.config,
    };
    let mut cfg = config_from_snapshot(pairs)?;
    cfg.apply_overrides(&c.overrides)?;
    let data = load_data(&cfg)?;
    Ok((path, loaded, cfg, data))
}

fn checkpoint_id(path: &Path, epoch: usize) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    format!("{}@{epoch}", name.replace(',', "_"))
}

/// Test-set inputs as an `[N, D]` tensor, in table order.
fn test_inputs(data: &LoadedData) -> Result<Tensor<f32>> {
    let (ds, idx): (&Dataset, Vec<usize>) = match &data.test {
        Some(t) => (t, (0..t.len()).collect()),
        None => (&data.train, data.train.split().1),
    };
    inputs(ds, &idx)
}

fn train_inputs(data: &LoadedData) -> Result<Tensor<f32>> {
    let idx = match &data.test {
        Some(_) => (0..data.train.len()).collect(),
        None => data.train.split().0,
    };
    inputs(&data.train, &idx)
}

fn inputs(ds: &Dataset, idx: &[usize]) -> Result<Tensor<f32>> {
    let x: Vec<f32> = idx.iter().flat_map(|&i| ds.eval_input(i)).collect();
    Tensor::new(vec![idx.len(), ds.input_dim()], x)
}

fn own_decoder_mse<T: Storable>(model: &Model<T>, z: &Tensor<f64>, x: &Tensor<f32>) -> Result<f64> {
    let dec = model.decoder()?;
    let rec = dec.forward_values(&model.params, &z.cast::<T>())?.cast::<f32>();
    reconstruction_mse(x, &rec)
}

fn default_decoder_spec(latent: usize, out: usize) -> MlpSpec {
    MlpSpec::decoder(latent, &[256, 256], out)
}

fn cmd_eval(
    c: &Common,
    checkpoint: Option<&Path>,
    reps: Option<&Path>,
    settings: &EvalSettings,
    frozen: bool,
) -> Result<()> {
    let mut rows: Vec<ReportRow>;
    if let Some(dir) = reps {
        let tr = RepresentationTable::load(&dir.join(TRAIN_REPS))?;
        let te = RepresentationTable::load(&dir.join(TEST_REPS))?;
        rows = evaluate(&tr, &te, settings)?;
    } else {
        let (path, loaded, _, data) = checkpoint_and_data(c, checkpoint)?;
        let x_test = test_inputs(&data)?;
        let (tr, te, own_mse) = match &loaded {
            Loaded::F32(k) => tables_and_mse(k, &path, &data, &x_test)?,
            Loaded::F64(k) => tables_and_mse(k, &path, &data, &x_test)?,
        };
        rows = evaluate(&tr, &te, settings)?;
        let mk = |probe: &str, value: f64| ReportRow {
            probe: probe.into(),
            dataset: te.dataset_id.clone(),
            metric: "recon_mse".into(),
            value,
            seed: settings.seed,
            checkpoint_id: te.checkpoint_id.clone(),
        };
        if let Some(m) = own_mse {
            rows.push(mk("decoder", m));
        }
        if frozen {
            let dcfg = DecoderConfig {
                seed: settings.seed,
                ..DecoderConfig::default()
            };
            let spec = default_decoder_spec(tr.dim(), data.train.input_dim());
            let fd = frozen_decoder_train(&tr, &train_inputs(&data)?, spec, &dcfg)?;
            let mse = fd.per_item_mse(&te.z, &x_test)?;
            rows.push(mk("frozen_decoder", mse.iter().sum::<f64>() / mse.len() as f64));
        }
    }
    let out = out_dir(c)?;
    let p = out.join(REPORT_FILE);
    write_report(&p, &rows)?;
    println!("{REPORT_HEADER}");
    for r in &rows {
        println!("{},{},{},{},{},{}", r.probe, r.dataset, r.metric, r.value, r.seed, r.checkpoint_id);
    }
    eprintln!("wrote {}", p.display());
    Ok(())
}

fn tables_and_mse<T: Storable>(
    k: &ModelCheckpoint<T>,
    path: &Path,
    data: &LoadedData,
    x_test: &Tensor<f32>,
) -> Result<(RepresentationTable, RepresentationTable, Option<f64>)> {
    let id = checkpoint_id(path, k.epoch);
    let (mut tr, mut te) = export_split(&k.model, data, true, 0)?;
    tr.checkpoint_id = id.clone();
    te.checkpoint_id = id;
    let mse = match k.model.decoder {
        Some(_) => Some(own_decoder_mse(&k.model, &te.z, x_test)?),
        None => None,
    };
    Ok((tr, te, mse))
}

fn cmd_export(c: &Common, checkpoint: Option<&Path>, sample: bool) -> Result<()> {
    let (path, loaded, _, data) = checkpoint_and_data(c, checkpoint)?;
    let seed = c.seed.unwrap_or(0);
    let (tr, te) = match &loaded {
        Loaded::F32(k) => export_split(&k.model, &data, !sample, seed)?,
        Loaded::F64(k) => export_split(&k.model, &data, !sample, seed)?,
    };
    let epoch = match &loaded {
        Loaded::F32(k) => k.epoch,
        Loaded::F64(k) => k.epoch,
    };
    let id = checkpoint_id(&path, epoch);
    let out = out_dir(c)?;
    for (mut t, name) in [(tr, TRAIN_REPS), (te, TEST_REPS)] {
        t.checkpoint_id = id.clone();
        t.save(&out.join(name))?;
        println!("{}: {} rows × {} dims", out.join(name).display(), t.len(), t.dim());
    }
    Ok(())
}

fn cmd_generate(c: &Common, checkpoint: Option<&Path>, class: Option<usize>, n: usize, binary: bool) -> Result<()> {
    let (_, loaded, _, data) = checkpoint_and_data(c, checkpoint)?;
    let seed = c.seed.unwrap_or(0);
    let (tr, _) = match &loaded {
        Loaded::F32(k) => export_split(&k.model, &data, true, 0)?,
        Loaded::F64(k) => export_split(&k.model, &data, true, 0)?,
    };
    // Images keep their shape; synthetic vectors become 1×d strips scaled
    // by the data range.
    let (h, w, lo, hi) = match &data.train {
        Dataset::Images { data: d, .. } => {
            let (h, w) = d.hw();
            (h, w, 0.0f32, 1.0f32)
        }
        Dataset::Synth(s) => {
            let lo = s.x.data().iter().copied().fold(f64::INFINITY, f64::min);
            let hi = s.x.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (1, s.config.d_x, lo as f32, hi as f32)
        }
    };
    let scale = move |t: Tensor<f32>| t.map(|v| (v - lo) / (hi - lo).max(f32::MIN_POSITIVE));
    let has_decoder = match &loaded {
        Loaded::F32(k) => k.model.decoder.is_some(),
        Loaded::F64(k) => k.model.decoder.is_some(),
    };
    let frozen = if has_decoder {
        None
    } else {
        eprintln!("model has no decoder; training one on frozen representations");
        let spec = default_decoder_spec(tr.dim(), data.train.input_dim());
        let dcfg = DecoderConfig {
            seed,
            ..DecoderConfig::default()
        };
        Some(frozen_decoder_train(&tr, &train_inputs(&data)?, spec, &dcfg)?)
    };
    let decode = |z: &Tensor<f64>| -> Result<Tensor<f32>> {
        let raw = match (&frozen, &loaded) {
            (Some(fd), _) => fd.reconstruct(z)?,
            (None, Loaded::F32(k)) => k.model.decoder()?.forward_values(&k.model.params, &z.cast())?,
            (None, Loaded::F64(k)) => k.model.decoder()?.forward_values(&k.model.params, &z.cast())?.cast(),
        };
        Ok(scale(raw))
    };
    let classes: Vec<usize> = match class {
        Some(k) => vec![k],
        None => {
            let mut v: Vec<usize> = tr.labels.clone();
            v.sort_unstable();
            v.dedup();
            v
        }
    };
    let dir = out_dir(c)?.join("generated");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut written = 0;
    for k in classes {
        let (_, imgs) = conditional_generate(&tr, decode, k, n, seed.wrapping_add(k as u64))?;
        for i in 0..n {
            write_pgm(&dir.join(format!("class{k}_{i:03}.pgm")), imgs.row(i), h, w, binary)?;
            written += 1;
        }
    }
    println!("wrote {written} images to {}", dir.display());
    Ok(())
}

fn cmd_gradcheck(c: &Common, instances: usize, step: f64, tol: f64) -> Result<()> {
    let report = gradcheck_suite(instances, c.seed.unwrap_or(0), step)?;
    let mut failed = Vec::new();
    for (name, err) in &report {
        let ok = *err < tol;
        println!("{name:<22} max relative error {err:.3e}  {}", if ok { "ok" } else { "FAIL" });
        if !ok {
            failed.push(name.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("gradient check above {tol:e} for: {}", failed.join(", "))))
    }
}

fn cmd_synth(c: &Common) -> Result<()> {
    let cfg = merged_config(c)?;
    let scfg = cfg.synth_config();
    let ds = synth_generate(&scfg)?;
    let out = out_dir(c)?;
    let p = out.join("synth.simvae");
    ds.save(&p)?;
    cfg.save(&out.join(CONFIG_FILE))?;
    println!(
        "{}: {} sources × {} views, {} classes, d_z {}, d_x {}",
        p.display(),
        ds.n_sources(),
        scfg.j,
        scfg.c,
        scfg.d_z,
        scfg.d_x
    );
    Ok(())
}

fn cmd_verify_prior(c: &Common, pairs: usize, samples: usize, tol: f64) -> Result<()> {
    let cfg = merged_config(c)?;
    let gamma2 = if cfg.gamma2.is_finite() { cfg.gamma2 } else { 1.0 };
    let check = verify_prior(pairs, 3, 2, cfg.prior_var, gamma2, 1e12, samples, cfg.seed)?;
    println!(
        "{} pairs, sigma2 {}, gamma2 {gamma2}: max |closed form - integration| {:.4e} (tol {tol}), max |near-flat - flat| {:.3e} (tol 1e-6)",
        check.pairs, cfg.prior_var, check.max_mc_error, check.max_flat_error
    );
    if check.max_mc_error < tol && check.max_flat_error < 1e-6 {
        Ok(())
    } else {
        Err(Error::Numeric("prior check failed".into()))
    }
}
