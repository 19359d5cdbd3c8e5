//! Densities of the hierarchical model `y → z → x` with related views.
//!
//! A source `y` owns a cluster mean `ψ_y`; its `J` views draw latents
//! `z^j ~ N(ψ_y, σ²I)`. Integrating `ψ` out under `N(0, γ²I)` gives a joint
//! prior over the `J` latents that only depends on their spread and sum,
//! so no per-source parameters are stored. All priors here are log-densities
//! up to an additive constant.

use crate::error::{Error, Result};
use crate::numerics::Rng;

const LOG_2PI: f64 = 1.837_877_066_409_345_3;

/// Cluster variance `σ²` and the variance `γ²` of the cluster means.
///
/// `gamma2 = f64::INFINITY` is the flat (uniform-ψ) limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SslPriorParams {
    pub sigma2: f64,
    pub gamma2: f64,
    pub latent_dim: usize,
}

impl SslPriorParams {
    pub fn new(sigma2: f64, gamma2: f64, latent_dim: usize) -> Result<Self> {
        check_var("sigma2", sigma2)?;
        if gamma2.is_nan() || gamma2 <= 0.0 {
            return Err(Error::Domain(format!("gamma2 must be > 0 or inf, got {gamma2}")));
        }
        Ok(Self {
            sigma2,
            gamma2,
            latent_dim,
        })
    }

    pub fn uniform(sigma2: f64, latent_dim: usize) -> Result<Self> {
        Self::new(sigma2, f64::INFINITY, latent_dim)
    }

    /// `σ²/γ²`, zero in the flat limit.
    pub fn shrinkage(&self) -> f64 {
        if self.gamma2.is_infinite() {
            0.0
        } else {
            self.sigma2 / self.gamma2
        }
    }

    pub fn log_prior(&self, zs: &ZSet) -> Result<f64> {
        if zs.dim() != self.latent_dim {
            return Err(Error::Dimension(format!(
                "z-set has dimension {}, prior expects {}",
                zs.dim(),
                self.latent_dim
            )));
        }
        if self.gamma2.is_infinite() {
            log_prior_uniform_psi(zs, self.sigma2)
        } else {
            log_prior_gaussian_psi(zs, self.sigma2, self.gamma2)
        }
    }
}

fn check_var(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Domain(format!("{name} must be finite and > 0, got {v}")));
    }
    Ok(())
}

/// Latents of the `J` views of one source.
#[derive(Debug, Clone, PartialEq)]
pub struct ZSet {
    members: Vec<Vec<f64>>,
    mean: Vec<f64>,
}

impl ZSet {
    pub fn new(members: Vec<Vec<f64>>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::Precondition("a z-set needs at least one member".into()))?;
        let d = first.len();
        if members.iter().any(|z| z.len() != d) {
            return Err(Error::Dimension("z-set members differ in dimension".into()));
        }
        let j = members.len() as f64;
        let mut mean = vec![0.0; d];
        for z in &members {
            for (m, v) in mean.iter_mut().zip(z) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= j);
        Ok(Self { members, mean })
    }

    pub fn members(&self) -> &[Vec<f64>] {
        &self.members
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn sum_sq(&self) -> f64 {
        self.members.iter().flatten().map(|v| v * v).sum()
    }

    fn total_sq(&self) -> f64 {
        let j = self.len() as f64;
        self.mean.iter().map(|m| (j * m) * (j * m)).sum()
    }
}

/// `Σ_d [−½ log(2π σ²_d) − (x_d − μ_d)² / (2σ²_d)]`.
pub fn gaussian_log_pdf(x: &[f64], mu: &[f64], var: &[f64]) -> Result<f64> {
    if x.len() != mu.len() || x.len() != var.len() {
        return Err(Error::Dimension(format!(
            "gaussian_log_pdf: lengths {}, {}, {}",
            x.len(),
            mu.len(),
            var.len()
        )));
    }
    let mut acc = 0.0;
    for ((&xi, &mi), &vi) in x.iter().zip(mu).zip(var) {
        check_var("variance", vi)?;
        let r = xi - mi;
        acc -= 0.5 * (LOG_2PI + vi.ln()) + r * r / (2.0 * vi);
    }
    Ok(acc)
}

/// Isotropic variant of [`gaussian_log_pdf`].
pub fn gaussian_log_pdf_iso(x: &[f64], mu: &[f64], var: f64) -> Result<f64> {
    gaussian_log_pdf(x, mu, &vec![var; x.len()])
}

/// Differential entropy of `N(μ, diag(exp(logvar)))`.
pub fn posterior_entropy(logvar: &[f64]) -> f64 {
    let d = logvar.len() as f64;
    0.5 * d * (1.0 + LOG_2PI) + 0.5 * logvar.iter().sum::<f64>()
}

/// `KL(N(μ, diag(exp(logvar))) ‖ N(0, I))`.
pub fn kl_to_standard_normal(mu: &[f64], logvar: &[f64]) -> Result<f64> {
    if mu.len() != logvar.len() {
        return Err(Error::Dimension(format!(
            "kl: mu has {} entries, logvar {}",
            mu.len(),
            logvar.len()
        )));
    }
    Ok(0.5
        * mu
            .iter()
            .zip(logvar)
            .map(|(m, lv)| lv.exp() + m * m - 1.0 - lv)
            .sum::<f64>())
}

/// Flat-ψ limit: `−(1/(2σ²)) Σ_j ‖z^j − z̄‖²`.
pub fn log_prior_uniform_psi(zs: &ZSet, sigma2: f64) -> Result<f64> {
    check_var("sigma2", sigma2)?;
    let spread: f64 = zs
        .members
        .iter()
        .flat_map(|z| z.iter().zip(&zs.mean).map(|(v, m)| (v - m) * (v - m)))
        .sum();
    Ok(-spread / (2.0 * sigma2))
}

/// Gaussian-ψ form: `−(1/(2σ²)) [Σ_j ‖z^j‖² − ‖Σ_j z^j‖² / (σ²/γ² + J)]`.
pub fn log_prior_gaussian_psi(zs: &ZSet, sigma2: f64, gamma2: f64) -> Result<f64> {
    let p = SslPriorParams::new(sigma2, gamma2, zs.dim())?;
    let denom = p.shrinkage() + zs.len() as f64;
    Ok(-(zs.sum_sq() - zs.total_sq() / denom) / (2.0 * sigma2))
}

/// Pairwise dot-product form for unit-norm latents.
///
/// Returns `(1/(2σ²(σ²/γ²+J))) Σ_{j≠k} z^j·z^k`, which differs from
/// [`log_prior_gaussian_psi`] by a constant when every `‖z^j‖ = 1`. Aligned
/// members therefore score higher than orthogonal ones.
pub fn log_prior_dot_form(zs: &ZSet, sigma2: f64, gamma2: f64) -> Result<f64> {
    let p = SslPriorParams::new(sigma2, gamma2, zs.dim())?;
    for (j, z) in zs.members.iter().enumerate() {
        let n = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (n - 1.0).abs() > 1e-6 {
            return Err(Error::Precondition(format!(
                "member {j} has norm {n}, dot form needs unit vectors"
            )));
        }
    }
    let mut cross = 0.0;
    for (j, a) in zs.members.iter().enumerate() {
        for (k, b) in zs.members.iter().enumerate() {
            if j != k {
                cross += a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            }
        }
    }
    let denom = p.shrinkage() + zs.len() as f64;
    Ok(cross / (2.0 * sigma2 * denom))
}

/// Monte-Carlo estimate of `log p(a) − log p(b)`, where
/// `p(zs) = ∫ N(ψ; 0, γ²I) Π_j N(z^j; ψ, σ²I) dψ`.
///
/// Each integral is importance-sampled with `ψ ~ N(z̄, 2σ²/J · I)`. Drawing ψ
/// from the prior instead leaves almost no mass near z̄ for sets far from the
/// origin and the estimate turns heavy-tailed. The proposal is wider than the
/// posterior, so the weights have finite variance. Only meaningful for finite
/// `γ²`.
pub fn mc_log_prior_difference(
    a: &ZSet,
    b: &ZSet,
    sigma2: f64,
    gamma2: f64,
    samples: usize,
    rng: &mut Rng,
) -> Result<f64> {
    SslPriorParams::new(sigma2, gamma2, a.dim())?;
    if gamma2.is_infinite() {
        return Err(Error::Domain("the flat prior is improper; sample with finite gamma2".into()));
    }
    if a.dim() != b.dim() {
        return Err(Error::Dimension("z-sets differ in dimension".into()));
    }
    if samples == 0 {
        return Err(Error::Precondition("need at least one sample".into()));
    }
    Ok(mc_log_marginal(a, sigma2, gamma2, samples, rng) - mc_log_marginal(b, sigma2, gamma2, samples, rng))
}

fn mc_log_marginal(zs: &ZSet, sigma2: f64, gamma2: f64, samples: usize, rng: &mut Rng) -> f64 {
    let d = zs.dim();
    let mean = zs.mean().to_vec();
    let q2 = 2.0 * sigma2 / zs.len() as f64;
    let q = q2.sqrt();
    let sq = |x: &[f64], m: &[f64]| x.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let norm = |n: usize, v: f64| -0.5 * (n * d) as f64 * (LOG_2PI + v.ln());
    let zero = vec![0.0; d];
    let mut psi = vec![0.0; d];
    let mut lw = Vec::with_capacity(samples);
    for _ in 0..samples {
        psi.iter_mut().zip(&mean).for_each(|(p, m)| *p = m + q * rng.normal());
        let lik: f64 = zs.members.iter().map(|z| sq(z, &psi)).sum::<f64>() / (-2.0 * sigma2);
        let prior = sq(&psi, &zero) / (-2.0 * gamma2);
        let proposal = sq(&psi, &mean) / (-2.0 * q2);
        lw.push(lik + prior - proposal);
    }
    log_mean_exp(&lw) + norm(zs.len(), sigma2) + norm(1, gamma2) - norm(1, q2)
}

pub(crate) fn log_mean_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + (v.iter().map(|x| (x - m).exp()).sum::<f64>() / v.len() as f64).ln()
}

/// Draws a z-set from the model itself: `ψ ~ N(0, γ²I)`, `z^j ~ N(ψ, σ²I)`.
pub fn sample_zset(j: usize, d: usize, sigma2: f64, gamma2: f64, rng: &mut Rng) -> Result<ZSet> {
    let psi: Vec<f64> = (0..d).map(|_| gamma2.sqrt() * rng.normal()).collect();
    let s = sigma2.sqrt();
    ZSet::new(
        (0..j)
            .map(|_| psi.iter().map(|p| p + s * rng.normal()).collect())
            .collect(),
    )
}

/// Outcome of [`verify_prior`]: worst absolute errors over all pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorCheck {
    pub pairs: usize,
    /// Closed-form Gaussian-ψ difference against ψ-integration.
    pub max_mc_error: f64,
    /// Gaussian-ψ at `flat_gamma2` against the flat-ψ form.
    pub max_flat_error: f64,
}

/// Compares `log p(a) − log p(b)` from the closed form against Monte-Carlo
/// ψ-integration, and the near-flat Gaussian form against the flat form,
/// on `pairs` z-set pairs drawn from the model.
#[allow(clippy::too_many_arguments)]
pub fn verify_prior(
    pairs: usize,
    j: usize,
    d: usize,
    sigma2: f64,
    gamma2: f64,
    flat_gamma2: f64,
    samples: usize,
    seed: u64,
) -> Result<PriorCheck> {
    let mut rng = Rng::new(seed);
    let (mut mc_err, mut flat_err) = (0.0f64, 0.0f64);
    for _ in 0..pairs {
        let a = sample_zset(j, d, sigma2, gamma2, &mut rng)?;
        let b = sample_zset(j, d, sigma2, gamma2, &mut rng)?;
        let exact = log_prior_gaussian_psi(&a, sigma2, gamma2)? - log_prior_gaussian_psi(&b, sigma2, gamma2)?;
        let mc = mc_log_prior_difference(&a, &b, sigma2, gamma2, samples, &mut rng)?;
        mc_err = mc_err.max((exact - mc).abs());
        let near = log_prior_gaussian_psi(&a, sigma2, flat_gamma2)? - log_prior_gaussian_psi(&b, sigma2, flat_gamma2)?;
        let flat = log_prior_uniform_psi(&a, sigma2)? - log_prior_uniform_psi(&b, sigma2)?;
        flat_err = flat_err.max((near - flat).abs());
    }
    Ok(PriorCheck {
        pairs,
        max_mc_error: mc_err,
        max_flat_error: flat_err,
    })
}
