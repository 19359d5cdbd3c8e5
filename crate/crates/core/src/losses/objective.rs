use std::fmt;
use std::str::FromStr;

use super::{
    info_nce_views, instance_discrimination_loss, simvae_loss, vae_loss, LossBreakdown, LossOutput,
    SimvaeParams,
};
use crate::error::{Error, Result};
use crate::nn::{decode, encode, reparameterize, Architecture, MlpSpec, Model, ParamSet};
use crate::numerics::{grad_check, Float, Graph, Rng, Stream, Tensor, Var};

/// Which objective a run optimises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Simvae,
    Vae,
    BetaVae,
    InfoNce,
    InstanceDisc,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::Simvae,
        LossKind::Vae,
        LossKind::BetaVae,
        LossKind::InfoNce,
        LossKind::InstanceDisc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Simvae => "simvae",
            LossKind::Vae => "vae",
            LossKind::BetaVae => "beta_vae",
            LossKind::InfoNce => "infonce",
            LossKind::InstanceDisc => "instance_disc",
        }
    }

    pub fn needs_decoder(self) -> bool {
        matches!(self, LossKind::Simvae | LossKind::Vae | LossKind::BetaVae)
    }

    pub fn needs_class_table(self) -> bool {
        self == LossKind::InstanceDisc
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown loss `{s}` (expected simvae, vae, beta_vae, infonce or instance_disc)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SimvaeMode {
    #[default]
    ExactElbo,
    Algo1Literal,
}

impl SimvaeMode {
    pub fn name(self) -> &'static str {
        match self {
            SimvaeMode::ExactElbo => "exact_elbo",
            SimvaeMode::Algo1Literal => "algo1_literal",
        }
    }
}

impl fmt::Display for SimvaeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SimvaeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact_elbo" => Ok(SimvaeMode::ExactElbo),
            "algo1_literal" => Ok(SimvaeMode::Algo1Literal),
            _ => Err(Error::Config(format!(
                "unknown mode `{s}` (expected exact_elbo or algo1_literal)"
            ))),
        }
    }
}

/// Loss selector plus every weight the objectives read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub kind: LossKind,
    pub mode: SimvaeMode,
    pub prior_var: f64,
    pub gamma2: f64,
    pub likelihood_var: f64,
    /// Only read by `BetaVae`; `Vae` always uses 1.
    pub beta: f64,
    pub tau: f64,
}

impl LossConfig {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            mode: SimvaeMode::ExactElbo,
            prior_var: 0.15,
            gamma2: f64::INFINITY,
            likelihood_var: 0.02,
            beta: 1.0,
            tau: 0.7,
        }
    }

    pub fn validate(&self, views: usize) -> Result<()> {
        if self.kind == LossKind::InfoNce && views < 2 {
            return Err(Error::Config(format!("infonce needs views >= 2, got {views}")));
        }
        if views == 0 {
            return Err(Error::Config("views must be >= 1".into()));
        }
        Ok(())
    }
}

/// One minibatch: `views` rows per source, source-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub x: Tensor<T>,
    pub views: usize,
    /// Dataset index of each source in the batch.
    pub sources: Vec<usize>,
    /// One standard-normal draw `[rows, latent]` per Monte-Carlo sample.
    pub eps: Vec<Tensor<T>>,
}

impl<T: Float> Batch<T> {
    pub fn rows(&self) -> usize {
        self.x.shape().first().copied().unwrap_or(0)
    }

    /// Source index of every row.
    pub fn row_sources(&self) -> Vec<usize> {
        self.sources
            .iter()
            .flat_map(|&s| std::iter::repeat_n(s, self.views))
            .collect()
    }
}

/// Builds the selected loss for `batch` on `g`.
///
/// `vars` are the model's parameters bound on `g`, in [`ParamSet`] order.
/// Expectations over `q` average the per-sample losses over `batch.eps`.
pub fn objective<T: Float>(
    g: &mut Graph<T>,
    model: &Model<T>,
    vars: &[Var],
    batch: &Batch<T>,
    cfg: &LossConfig,
) -> Result<LossOutput> {
    cfg.validate(batch.views)?;
    if batch.rows() != batch.sources.len() * batch.views {
        return Err(Error::Dimension(format!(
            "batch has {} rows for {} sources × {} views",
            batch.rows(),
            batch.sources.len(),
            batch.views
        )));
    }
    let x = g.constant(batch.x.clone());
    let post = encode(g, &model.encoder, vars, x)?;
    match cfg.kind {
        LossKind::InfoNce => info_nce_views(g, post.mu, batch.views, cfg.tau),
        LossKind::InstanceDisc => {
            let idx = model
                .class_table_index()
                .ok_or_else(|| Error::Config("instance_disc needs a class table".into()))?;
            instance_discrimination_loss(g, post.mu, &batch.row_sources(), vars[idx])
        }
        LossKind::Simvae | LossKind::Vae | LossKind::BetaVae => {
            if batch.eps.is_empty() {
                return Err(Error::Precondition("generative losses need at least one noise draw".into()));
            }
            let dec = model.decoder()?;
            let w = 1.0 / batch.eps.len() as f64;
            let mut total: Option<Var> = None;
            let mut breakdown = LossBreakdown::default();
            for eps in &batch.eps {
                let e = g.constant(eps.clone());
                let z = reparameterize(g, post, e)?;
                let x_rec = decode(g, dec, vars, z)?;
                let out = match cfg.kind {
                    LossKind::Simvae => {
                        let p = SimvaeParams {
                            prior_var: cfg.prior_var,
                            gamma2: cfg.gamma2,
                            likelihood_var: cfg.likelihood_var,
                            mode: cfg.mode,
                        };
                        simvae_loss(g, x, x_rec, post, z, batch.views, &p)?
                    }
                    LossKind::Vae => vae_loss(g, x, x_rec, post, cfg.likelihood_var, 1.0)?,
                    _ => vae_loss(g, x, x_rec, post, cfg.likelihood_var, cfg.beta)?,
                };
                breakdown.accumulate(&out.breakdown, w);
                total = Some(match total {
                    None => out.total,
                    Some(acc) => g.add(acc, out.total)?,
                });
            }
            let mut total = total.expect("at least one sample");
            if batch.eps.len() > 1 {
                total = g.scale(total, w)?;
            }
            breakdown.total = g.scalar_value(total)?;
            Ok(LossOutput { total, breakdown })
        }
    }
}

/// Distance from the instance's forward pass to the nearest ReLU kink.
fn relu_margin(model: &Model<f64>, batch: &Batch<f64>) -> Result<f64> {
    let (head, mut margin) = model.encoder.relu_margin(&model.params, &batch.x)?;
    if let Some(dec) = &model.decoder {
        let (rows, two_d) = head.dims2()?;
        let d = two_d / 2;
        for eps in &batch.eps {
            let z: Vec<f64> = (0..rows * d)
                .map(|k| {
                    let (r, c) = (k / d, k % d);
                    head.at(r, c) + (0.5 * head.at(r, d + c)).exp() * eps.data()[k]
                })
                .collect();
            let (_, m) = dec.relu_margin(&model.params, &Tensor::new(vec![rows, d], z)?)?;
            margin = margin.min(m);
        }
    }
    Ok(margin)
}

/// A random small model and batch for `label`, redrawn until no ReLU input
/// lies within `1e-3` of its kink, where central differences are invalid.
fn random_instance(label: &str, cfg: LossConfig, seed: u64, index: u64) -> Result<(Model<f64>, Batch<f64>)> {
    let key = label.bytes().fold(0u64, |h, b| h.wrapping_mul(131).wrapping_add(b as u64));
    let mut rng = Rng::derive(seed, Stream::Init, &[key, index]);
    loop {
        let (model, batch) = draw_instance(cfg, &mut rng)?;
        if relu_margin(&model, &batch)? > 1e-3 {
            return Ok((model, batch));
        }
    }
}

fn draw_instance(cfg: LossConfig, rng: &mut Rng) -> Result<(Model<f64>, Batch<f64>)> {
    let input = 4 + rng.below(5);
    let latent = 2 + rng.below(2);
    let hidden: Vec<usize> = (0..1 + rng.below(2)).map(|_| 3 + rng.below(14)).collect();
    let sources = 3 + rng.below(2);
    let views = match cfg.kind {
        LossKind::Simvae | LossKind::InfoNce => 2 + rng.below(2),
        _ => 1 + rng.below(2),
    };
    let arch = Architecture {
        encoder: MlpSpec::gaussian_encoder(input, &hidden, latent),
        decoder: cfg
            .kind
            .needs_decoder()
            .then(|| MlpSpec::decoder(latent, &hidden, input)),
        class_table: cfg.kind.needs_class_table().then_some(sources + 2),
    };
    let mut model = Model::init(arch, rng)?;
    // Non-zero biases so bias gradients are exercised away from the origin.
    for (name, t) in model.params.names().to_vec().iter().zip(model.params.tensors_mut()) {
        if name.ends_with("bias") {
            t.data_mut().iter_mut().for_each(|v| *v = 0.1 * rng.normal());
        }
    }
    let rows = sources * views;
    let x = Tensor::new(vec![rows, input], (0..rows * input).map(|_| rng.uniform()).collect())?;
    let eps = vec![Tensor::new(vec![rows, latent], (0..rows * latent).map(|_| rng.normal()).collect())?];
    let batch = Batch {
        x,
        views,
        sources: (0..sources).rev().collect(),
        eps,
    };
    Ok((model, batch))
}

/// Loss settings exercised by [`gradcheck_suite`], with their labels.
pub fn gradcheck_cases() -> Vec<(String, LossConfig)> {
    let mut out = Vec::new();
    for kind in LossKind::ALL {
        match kind {
            LossKind::Simvae => {
                for mode in [SimvaeMode::ExactElbo, SimvaeMode::Algo1Literal] {
                    let mut c = LossConfig::new(kind);
                    c.mode = mode;
                    out.push((format!("simvae({mode})"), c));
                }
            }
            LossKind::BetaVae => {
                let mut c = LossConfig::new(kind);
                c.beta = 4.0;
                out.push((kind.to_string(), c));
            }
            _ => out.push((kind.to_string(), LossConfig::new(kind))),
        }
    }
    out
}

/// Finite-difference check of every loss on `instances` random small
/// models. Returns the worst relative error per loss label.
pub fn gradcheck_suite(instances: usize, seed: u64, h: f64) -> Result<Vec<(String, f64)>> {
    let mut report = Vec::new();
    for (label, cfg) in gradcheck_cases() {
        let mut worst: f64 = 0.0;
        for i in 0..instances {
            let (model, batch) = random_instance(&label, cfg, seed, i as u64)?;
            let names = model.params.names().to_vec();
            let arch = model.arch.clone();
            let f = |g: &mut Graph<f64>, vars: &[Var]| -> Result<Var> {
                let mut ps = ParamSet::new();
                for (n, v) in names.iter().zip(vars) {
                    ps.push(n.clone(), g.value(*v).clone())?;
                }
                let m = Model::from_params(arch.clone(), ps)?;
                Ok(objective(g, &m, vars, &batch, &cfg)?.total)
            };
            worst = worst.max(grad_check(f, model.params.tensors(), h)?);
        }
        report.push((label, worst));
    }
    Ok(report)
}
