//! Training objectives as scalar graph nodes with a per-term breakdown.
//!
//! Every loss is the negative of an objective to maximise. Batches hold one
//! row per view, source-major: the `J` views of source `i` are rows
//! `i*J .. i*J + J`.

mod objective;
mod pmi;

pub use objective::{gradcheck_cases, gradcheck_suite, objective, Batch, LossConfig, LossKind, SimvaeMode};
pub use pmi::{infonce_population_loss, pmi_table};

use crate::error::{Error, Result};
use crate::nn::PosteriorVars;
use crate::numerics::{Float, Graph, Tensor, Var};

const LOG_2PI: f64 = 1.837_877_066_409_345_3;

/// Logged values of one loss evaluation.
///
/// `total == recon + entropy + prior + Σ extra`. Extra entries hold their
/// weighted contribution (for β-VAE the `kl` entry is already `β·KL`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub recon: f64,
    pub entropy: f64,
    pub prior: f64,
    pub extra: Vec<(String, f64)>,
}

impl LossBreakdown {
    pub fn extra_sum(&self) -> f64 {
        self.extra.iter().map(|(_, v)| v).sum()
    }

    /// Sum of the sub-terms, which should reproduce `total`.
    pub fn combined(&self) -> f64 {
        self.recon + self.entropy + self.prior + self.extra_sum()
    }

    pub fn extra(&self, name: &str) -> Option<f64> {
        self.extra.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    /// `self += w * other`, matching extra terms by name.
    pub fn accumulate(&mut self, other: &LossBreakdown, w: f64) {
        self.total += w * other.total;
        self.recon += w * other.recon;
        self.entropy += w * other.entropy;
        self.prior += w * other.prior;
        for (name, v) in &other.extra {
            match self.extra.iter_mut().find(|(n, _)| n == name) {
                Some((_, acc)) => *acc += w * v,
                None => self.extra.push((name.clone(), w * v)),
            }
        }
    }
}

/// A loss node plus its logged breakdown.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub total: Var,
    pub breakdown: LossBreakdown,
}

fn assemble<T: Float>(
    g: &mut Graph<T>,
    recon: Option<Var>,
    entropy: Option<Var>,
    prior: Option<Var>,
    extra: Vec<(&str, Var)>,
) -> Result<LossOutput> {
    let mut parts = Vec::new();
    let mut b = LossBreakdown::default();
    let mut read = |g: &Graph<T>, v: Option<Var>| -> Result<f64> {
        match v {
            Some(v) => {
                parts.push(v);
                g.scalar_value(v)
            }
            None => Ok(0.0),
        }
    };
    b.recon = read(g, recon)?;
    b.entropy = read(g, entropy)?;
    b.prior = read(g, prior)?;
    for (name, v) in extra {
        let val = read(g, Some(v))?;
        b.extra.push((name.to_string(), val));
    }
    let mut total = *parts
        .first()
        .ok_or_else(|| Error::Contract("loss with no terms".into()))?;
    for &p in &parts[1..] {
        total = g.add(total, p)?;
    }
    b.total = g.scalar_value(total)?;
    Ok(LossOutput { total, breakdown: b })
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Domain(format!("{name} must be finite and > 0, got {v}")));
    }
    Ok(())
}

fn same_shape<T: Float>(g: &Graph<T>, a: Var, b: Var, what: &str) -> Result<(usize, usize)> {
    let (r, c) = g.value(a).dims2()?;
    if g.shape(a) != g.shape(b) {
        return Err(Error::Dimension(format!(
            "{what}: shapes {:?} and {:?} differ",
            g.shape(a),
            g.shape(b)
        )));
    }
    Ok((r, c))
}

/// `Σ ‖x − x̃‖²` over every row.
fn sq_residual<T: Float>(g: &mut Graph<T>, x: Var, x_rec: Var) -> Result<Var> {
    let r = g.sub(x, x_rec)?;
    let sq = g.square(r)?;
    g.sum_all(sq)
}

/// Summed Gaussian negative log-likelihood `Σ_rows [(D/2)log(2πσ²) + ‖r‖²/(2σ²)]`,
/// divided by `denom`.
fn gaussian_nll<T: Float>(
    g: &mut Graph<T>,
    x: Var,
    x_rec: Var,
    likelihood_var: f64,
    denom: f64,
) -> Result<Var> {
    let (rows, d) = same_shape(g, x, x_rec, "reconstruction")?;
    let s = sq_residual(g, x, x_rec)?;
    let scaled = g.scale(s, 1.0 / (2.0 * likelihood_var * denom))?;
    let floor = rows as f64 * 0.5 * d as f64 * (LOG_2PI + likelihood_var.ln()) / denom;
    g.add_scalar(scaled, floor)
}

/// β-weighted negative ELBO averaged over rows.
///
/// `recon` is the Gaussian negative log-likelihood under variance
/// `likelihood_var`; the `kl` extra is `β·KL(q ‖ N(0, I))`. With `beta = 1`
/// this is the plain VAE.
pub fn vae_loss<T: Float>(
    g: &mut Graph<T>,
    x: Var,
    x_rec: Var,
    post: PosteriorVars,
    likelihood_var: f64,
    beta: f64,
) -> Result<LossOutput> {
    positive("beta", beta)?;
    positive("likelihood variance", likelihood_var)?;
    let (rows, _) = same_shape(g, x, x_rec, "vae_loss")?;
    let (_, d) = same_shape(g, post.mu, post.logvar, "posterior")?;
    let n = rows as f64;
    let recon = gaussian_nll(g, x, x_rec, likelihood_var, n)?;

    let e = g.exp(post.logvar)?;
    let m2 = g.square(post.mu)?;
    let t = g.add(e, m2)?;
    let t = g.sub(t, post.logvar)?;
    let s = g.sum_all(t)?;
    let kl = g.scale(s, 0.5 * beta / n)?;
    let kl = g.add_scalar(kl, -0.5 * beta * d as f64)?;
    assemble(g, Some(recon), None, None, vec![("kl", kl)])
}

/// SimVAE loss for a batch of sources with `views` rows each, averaged over
/// sources.
///
/// `ExactElbo` is the negative evidence bound: Gaussian likelihood with
/// variance `σ_x²`, minus posterior entropy, minus the ψ-integrated prior.
/// `Algo1Literal` uses the mean squared error `(1/D)‖x − x̃‖²`, adds
/// `+½ Σ logvar` and keeps the same spread penalty.
pub fn simvae_loss<T: Float>(
    g: &mut Graph<T>,
    x: Var,
    x_rec: Var,
    post: PosteriorVars,
    z: Var,
    views: usize,
    cfg: &SimvaeParams,
) -> Result<LossOutput> {
    if views == 0 {
        return Err(Error::Precondition("SimVAE needs at least one view per source".into()));
    }
    positive("prior variance", cfg.prior_var)?;
    positive("likelihood variance", cfg.likelihood_var)?;
    if cfg.gamma2.is_nan() || cfg.gamma2 <= 0.0 {
        return Err(Error::Domain(format!("gamma2 must be > 0 or inf, got {}", cfg.gamma2)));
    }
    let (rows, dx) = same_shape(g, x, x_rec, "simvae_loss")?;
    let (zrows, d) = same_shape(g, post.mu, post.logvar, "posterior")?;
    if g.shape(z) != g.shape(post.mu) || zrows != rows {
        return Err(Error::Dimension(format!(
            "simvae_loss: x {:?}, mu {:?}, z {:?}",
            g.shape(x),
            g.shape(post.mu),
            g.shape(z)
        )));
    }
    if rows % views != 0 {
        return Err(Error::Dimension(format!(
            "{rows} rows do not split into sources of {views} views"
        )));
    }
    let n = (rows / views) as f64;

    let (recon, entropy) = match cfg.mode {
        SimvaeMode::ExactElbo => {
            let recon = gaussian_nll(g, x, x_rec, cfg.likelihood_var, n)?;
            let s = g.sum_all(post.logvar)?;
            let h = g.scale(s, -0.5 / n)?;
            let h = g.add_scalar(h, -(rows as f64) * 0.5 * d as f64 * (1.0 + LOG_2PI) / n)?;
            (recon, h)
        }
        SimvaeMode::Algo1Literal => {
            let s = sq_residual(g, x, x_rec)?;
            let recon = g.scale(s, 1.0 / (dx as f64 * n))?;
            let s = g.sum_all(post.logvar)?;
            (recon, g.scale(s, 0.5 / n)?)
        }
    };
    let prior = spread_penalty(g, z, views, cfg.prior_var, cfg.gamma2)?;
    let prior = g.scale(prior, 1.0 / n)?;
    assemble(g, Some(recon), Some(entropy), Some(prior), vec![])
}

/// `Σ_i −log p(z_i)` summed over sources, up to a constant.
///
/// Written as `(1/(2σ²)) [Σ_j ‖z^j − z̄‖² + J c/(c + J) ‖z̄‖²]` with
/// `c = σ²/γ²`, which equals the ψ-integrated form and is stable in f32.
pub fn spread_penalty<T: Float>(
    g: &mut Graph<T>,
    z: Var,
    views: usize,
    prior_var: f64,
    gamma2: f64,
) -> Result<Var> {
    let (rows, d) = g.value(z).dims2()?;
    if views == 0 || rows % views != 0 {
        return Err(Error::Dimension(format!(
            "{rows} latent rows do not split into sources of {views} views"
        )));
    }
    let n = rows / views;
    let wide = g.reshape(z, &[n, views * d])?;
    let cols: Vec<Var> = (0..views)
        .map(|j| g.slice_cols(wide, j * d, (j + 1) * d))
        .collect::<Result<_>>()?;
    let mut sum = cols[0];
    for &c in &cols[1..] {
        sum = g.add(sum, c)?;
    }
    let mean = g.scale(sum, 1.0 / views as f64)?;
    let mut spread: Option<Var> = None;
    for &c in &cols {
        let dev = g.sub(c, mean)?;
        let sq = g.square(dev)?;
        let s = g.sum_all(sq)?;
        spread = Some(match spread {
            None => s,
            Some(acc) => g.add(acc, s)?,
        });
    }
    let mut total = spread.expect("views >= 1");
    let c = if gamma2.is_infinite() { 0.0 } else { prior_var / gamma2 };
    if c > 0.0 {
        let j = views as f64;
        let m2 = g.square(mean)?;
        let m2 = g.sum_all(m2)?;
        let shrink = g.scale(m2, j * c / (c + j))?;
        total = g.add(total, shrink)?;
    }
    g.scale(total, 1.0 / (2.0 * prior_var))
}

/// Parameters of [`simvae_loss`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimvaeParams {
    pub prior_var: f64,
    /// Variance of the cluster means; infinity gives the flat limit.
    pub gamma2: f64,
    pub likelihood_var: f64,
    pub mode: SimvaeMode,
}

/// Rows scaled to unit length.
fn normalize_rows<T: Float>(g: &mut Graph<T>, z: Var) -> Result<Var> {
    let sq = g.square(z)?;
    let n2 = g.sum_axis(sq, 1, true)?;
    let n2 = g.add_scalar(n2, 1e-12)?;
    let norm = g.sqrt(n2)?;
    g.div(z, norm)
}

/// Symmetric in-batch InfoNCE on cosine similarity over temperature `τ`.
///
/// Anchors and positives are stacked into `2N` rows. Each row's positive is
/// its partner in the other half and its negatives are the remaining
/// `2N − 2` rows. The total is the mean cross-entropy over all `2N` rows.
pub fn info_nce_loss<T: Float>(g: &mut Graph<T>, za: Var, zb: Var, tau: f64) -> Result<LossOutput> {
    let infonce = info_nce_term(g, za, zb, tau)?;
    assemble(g, None, None, None, vec![("infonce", infonce)])
}

fn info_nce_term<T: Float>(g: &mut Graph<T>, za: Var, zb: Var, tau: f64) -> Result<Var> {
    positive("tau", tau)?;
    let (n, _) = same_shape(g, za, zb, "info_nce_loss")?;
    if n < 2 {
        return Err(Error::Precondition(format!(
            "InfoNCE needs a batch of at least 2 for negatives, got {n}"
        )));
    }
    let both = g.concat_rows(&[za, zb])?;
    let u = normalize_rows(g, both)?;
    let ut = g.transpose(u)?;
    let sim = g.matmul(u, ut)?;
    let sim = g.scale(sim, 1.0 / tau)?;
    let m = 2 * n;
    let mut mask = Tensor::<T>::zeros(&[m, m]);
    let mut pick = Tensor::<T>::zeros(&[m, m]);
    for i in 0..m {
        mask.data_mut()[i * m + i] = T::lit(-1e9);
        let partner = if i < n { i + n } else { i - n };
        pick.data_mut()[i * m + partner] = T::one();
    }
    let mask = g.constant(mask);
    let pick = g.constant(pick);
    let logits = g.add(sim, mask)?;
    let lsm = g.log_softmax(logits)?;
    let chosen = g.mul(lsm, pick)?;
    let s = g.sum_all(chosen)?;
    g.scale(s, -1.0 / m as f64)
}

/// InfoNCE over `J ≥ 2` views per source, averaged over all view pairs.
pub fn info_nce_views<T: Float>(g: &mut Graph<T>, z: Var, views: usize, tau: f64) -> Result<LossOutput> {
    if views < 2 {
        return Err(Error::Precondition(format!(
            "InfoNCE needs at least 2 views per source, got {views}"
        )));
    }
    let (rows, d) = g.value(z).dims2()?;
    if rows % views != 0 {
        return Err(Error::Dimension(format!(
            "{rows} rows do not split into sources of {views} views"
        )));
    }
    let wide = g.reshape(z, &[rows / views, views * d])?;
    let cols: Vec<Var> = (0..views)
        .map(|j| g.slice_cols(wide, j * d, (j + 1) * d))
        .collect::<Result<_>>()?;
    let mut acc: Option<Var> = None;
    let mut pairs = 0usize;
    for a in 0..views {
        for b in a + 1..views {
            let t = info_nce_term(g, cols[a], cols[b], tau)?;
            acc = Some(match acc {
                None => t,
                Some(s) => g.add(s, t)?,
            });
            pairs += 1;
        }
    }
    let mean = g.scale(acc.expect("at least one pair"), 1.0 / pairs as f64)?;
    assemble(g, None, None, None, vec![("infonce", mean)])
}

/// Single-anchor InfoNCE on plain vectors: the positive competes against the
/// listed negatives only.
pub fn info_nce_anchor(anchor: &[f64], positive: &[f64], negatives: &[Vec<f64>], tau: f64) -> Result<f64> {
    self::positive("tau", tau)?;
    let cos = |a: &[f64], b: &[f64]| -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::Dimension("InfoNCE vectors differ in length".into()));
        }
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        Ok(dot / (na * nb).max(1e-300))
    };
    let pos = cos(anchor, positive)? / tau;
    let mut logits = vec![pos];
    for n in negatives {
        logits.push(cos(anchor, n)? / tau);
    }
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    Ok(lse - pos)
}

/// Softmax cross-entropy of `Z W_ψᵀ` against each row's source index.
pub fn instance_discrimination_loss<T: Float>(
    g: &mut Graph<T>,
    z: Var,
    sources: &[usize],
    table: Var,
) -> Result<LossOutput> {
    let (rows, d) = g.value(z).dims2()?;
    let (classes, td) = g.value(table).dims2()?;
    if td != d {
        return Err(Error::Dimension(format!(
            "class table width {td} differs from representation width {d}"
        )));
    }
    if sources.len() != rows {
        return Err(Error::Dimension(format!(
            "{} source indices for {rows} rows",
            sources.len()
        )));
    }
    if let Some(bad) = sources.iter().find(|&&s| s >= classes) {
        return Err(Error::Data(format!(
            "source index {bad} out of range for {classes} classes"
        )));
    }
    let wt = g.transpose(table)?;
    let logits = g.matmul(z, wt)?;
    let lsm = g.log_softmax(logits)?;
    let mut pick = Tensor::<T>::zeros(&[rows, classes]);
    for (i, &s) in sources.iter().enumerate() {
        pick.data_mut()[i * classes + s] = T::one();
    }
    let pick = g.constant(pick);
    let chosen = g.mul(lsm, pick)?;
    let s = g.sum_all(chosen)?;
    let ce = g.scale(s, -1.0 / rows as f64)?;
    assemble(g, None, None, None, vec![("instance", ce)])
}

#[cfg(test)]
mod tests;
