use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{reconstruction_mse, RepresentationTable};
use crate::error::{Error, Result};
use crate::nn::{init_params, Adam, AdamHyper, Mlp, MlpSpec, ParamSet};
use crate::numerics::{Graph, Rng, Stream, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoderConfig {
    pub lr: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Fraction of rows held out for the plateau check.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            max_epochs: 50,
            batch_size: 128,
            patience: 5,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

/// A decoder trained on frozen representations.
#[derive(Debug, Clone)]
pub struct FrozenDecoder {
    pub mlp: Mlp,
    pub params: ParamSet<f32>,
    /// Mean training MSE per epoch.
    pub train_trace: Vec<f64>,
    /// Validation MSE per epoch.
    pub val_trace: Vec<f64>,
    /// Epoch whose parameters were kept (0-based).
    pub best_epoch: usize,
}

fn to_f32(z: &Tensor<f64>) -> Tensor<f32> {
    z.cast()
}

impl FrozenDecoder {
    pub fn reconstruct(&self, z: &Tensor<f64>) -> Result<Tensor<f32>> {
        self.mlp.forward_values(&self.params, &to_f32(z))
    }

    /// Mean squared error of every row against `targets`.
    pub fn per_item_mse(&self, z: &Tensor<f64>, targets: &Tensor<f32>) -> Result<Vec<f64>> {
        let rec = self.reconstruct(z)?;
        if rec.shape() != targets.shape() {
            return Err(Error::Dimension(format!(
                "targets {:?} do not match reconstructions {:?}",
                targets.shape(),
                rec.shape()
            )));
        }
        let (n, d) = rec.dims2()?;
        Ok((0..n)
            .map(|i| {
                rec.row(i)
                    .iter()
                    .zip(targets.row(i))
                    .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
                    .sum::<f64>()
                    / d as f64
            })
            .collect())
    }
}

/// Trains `spec` to map frozen representations to `targets` `[N, D]` by
/// MSE, stopping when the validation error plateaus. The best-validation
/// parameters are kept.
pub fn frozen_decoder_train(
    table: &RepresentationTable,
    targets: &Tensor<f32>,
    spec: MlpSpec,
    cfg: &DecoderConfig,
) -> Result<FrozenDecoder> {
    let (n, d) = targets.dims2()?;
    if n != table.len() || spec.input_dim() != table.dim() || spec.output_dim() != d {
        return Err(Error::Dimension(format!(
            "decoder {spec} cannot map {}-d representations of {} rows to {:?} targets",
            table.dim(),
            table.len(),
            targets.shape()
        )));
    }
    if cfg.batch_size == 0 || !(0.0..1.0).contains(&cfg.val_fraction) {
        return Err(Error::Config("decoder batch_size must be >= 1 and val_fraction in [0, 1)".into()));
    }
    let order = Rng::derive(cfg.seed, Stream::Eval, &[0xdec0]).permutation(n);
    let n_val = ((n as f64 * cfg.val_fraction).round() as usize).min(n.saturating_sub(1));
    let (val_idx, tr_idx) = order.split_at(n_val);
    let z = to_f32(&table.z);
    let (ztr, xtr) = (z.select_rows(tr_idx)?, targets.select_rows(tr_idx)?);
    let (zval, xval) = (z.select_rows(val_idx)?, targets.select_rows(val_idx)?);

    let mut params: ParamSet<f32> = ParamSet::new();
    init_params(&spec, "dec", &mut Rng::derive(cfg.seed, Stream::Init, &[0xdec1]), &mut params)?;
    let mlp = Mlp::locate(spec, "dec", &params)?;
    let mut opt = Adam::new(&params, AdamHyper::with_lr(cfg.lr));
    let mut best = (f64::INFINITY, 0usize, params.clone());
    let (mut train_trace, mut val_trace) = (Vec::new(), Vec::new());
    for epoch in 0..cfg.max_epochs {
        let perm = Rng::derive(cfg.seed, Stream::Eval, &[0xdec2, epoch as u64]).permutation(tr_idx.len());
        let (mut sum, mut count) = (0.0, 0usize);
        for chunk in perm.chunks(cfg.batch_size) {
            let mut g = Graph::<f32>::new();
            let vars = params.bind(&mut g);
            let zb = g.constant(ztr.select_rows(chunk)?);
            let xb = g.constant(xtr.select_rows(chunk)?);
            let rec = mlp.forward(&mut g, &vars, zb)?;
            let diff = g.sub(rec, xb)?;
            let sq = g.square(diff)?;
            let loss = g.mean_all(sq)?;
            sum += g.scalar_value(loss)? * chunk.len() as f64;
            count += chunk.len();
            g.backward(loss)?;
            let grads: Vec<Tensor<f32>> = vars.iter().map(|&v| g.grad_or_zeros(v)).collect();
            opt.step(&mut params, &grads)?;
        }
        train_trace.push(sum / count as f64);
        let val = if n_val > 0 {
            reconstruction_mse(&xval, &mlp.forward_values(&params, &zval)?)?
        } else {
            sum / count as f64
        };
        val_trace.push(val);
        if val < best.0 {
            best = (val, epoch, params.clone());
        } else if epoch - best.1 >= cfg.patience {
            break;
        }
    }
    Ok(FrozenDecoder {
        mlp,
        params: best.2,
        train_trace,
        val_trace,
        best_epoch: best.1,
    })
}

/// Full-covariance Gaussian fitted to the class-`c` rows of `table`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassGaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Ridge that had to be added to make the covariance positive definite.
    pub ridge: f64,
}

pub fn fit_class_gaussian(table: &RepresentationTable, c: usize) -> Result<ClassGaussian> {
    let idx: Vec<usize> = (0..table.len()).filter(|&i| table.labels[i] == c).collect();
    if idx.is_empty() {
        return Err(Error::Data(format!("class {c} has no rows")));
    }
    let d = table.dim();
    let n = idx.len() as f64;
    let mut mean = DVector::zeros(d);
    for &i in &idx {
        mean += DVector::from_row_slice(table.row(i));
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for &i in &idx {
        let diff = DVector::from_row_slice(table.row(i)) - &mean;
        cov.ger(1.0 / n, &diff, &diff, 1.0);
    }
    let mut ridge = 0.0;
    let base = (cov.trace() / d as f64).max(1e-12);
    while cov.clone().cholesky().is_none() {
        let add = if ridge == 0.0 { 1e-6 * base } else { ridge };
        for k in 0..d {
            cov[(k, k)] += add;
        }
        ridge += add;
    }
    if ridge > 0.0 {
        eprintln!("warning: class {c} covariance is singular; added ridge {ridge:.3e}");
    }
    Ok(ClassGaussian { mean, cov, ridge })
}

/// `n` latents drawn from the class-`c` Gaussian, `[n, d]`.
pub fn sample_class_latents(table: &RepresentationTable, c: usize, n: usize, seed: u64) -> Result<Tensor<f64>> {
    let fit = fit_class_gaussian(table, c)?;
    let d = table.dim();
    let l = fit.cov.clone().cholesky().expect("ridge made it positive definite").l();
    let mut rng = Rng::derive(seed, Stream::Generate, &[c as u64]);
    let mut out = Vec::with_capacity(n * d);
    for _ in 0..n {
        let e = DVector::from_iterator(d, (0..d).map(|_| rng.normal()));
        out.extend((&fit.mean + &l * e).iter());
    }
    Tensor::new(vec![n, d], out)
}

/// Samples class-`c` latents and decodes them with `decode`, clamping the
/// result to `[0, 1]`.
pub fn conditional_generate<F>(
    table: &RepresentationTable,
    decode: F,
    c: usize,
    n: usize,
    seed: u64,
) -> Result<(Tensor<f64>, Tensor<f32>)>
where
    F: Fn(&Tensor<f64>) -> Result<Tensor<f32>>,
{
    let z = sample_class_latents(table, c, n, seed)?;
    if n == 0 {
        return Ok((z, Tensor::zeros(&[0, 0])));
    }
    let imgs = decode(&z)?.map(|v| v.clamp(0.0, 1.0));
    Ok((z, imgs))
}

/// Writes a `[0, 1]` grayscale image as a PGM: binary `P5` or plain `P2`.
pub fn write_pgm(path: &Path, pixels: &[f32], h: usize, w: usize, binary: bool) -> Result<()> {
    if pixels.len() != h * w {
        return Err(Error::Dimension(format!("{} pixels for a {h}×{w} image", pixels.len())));
    }
    let bytes: Vec<u8> = pixels.iter().map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let mut out = Vec::new();
    if binary {
        write!(out, "P5\n{w} {h}\n255\n").expect("vec write");
        out.extend_from_slice(&bytes);
    } else {
        write!(out, "P2\n{w} {h}\n255\n").expect("vec write");
        for row in bytes.chunks(w) {
            let line: Vec<String> = row.iter().map(u8::to_string).collect();
            writeln!(out, "{}", line.join(" ")).expect("vec write");
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
