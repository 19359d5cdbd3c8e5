use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{Rng, Stream, Tensor};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmConfig {
    pub k: usize,
    pub n_init: usize,
    pub max_iter: usize,
    /// Ridge added to every covariance.
    pub reg: f64,
    /// Stop once the per-point objective gains less than this.
    pub tol: f64,
    pub seed: u64,
}

impl GmmConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            n_init: 10,
            max_iter: 300,
            reg: 1e-6,
            tol: 1e-9,
            seed: 0,
        }
    }
}

/// Full-covariance Gaussian mixture.
///
/// Each component's density carries the factor `exp(−reg·tr(Σ⁻¹)/2)`, the
/// expected log-density under `N(0, reg·I)` input jitter. With it the ridge
/// M-step `Σ = S + reg·I` is an exact EM step, so `trace` never decreases;
/// at `reg = 0` the objective is the plain log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
    pub reg: f64,
    /// Objective after every E-step of the kept run.
    pub trace: Vec<f64>,
    /// Final objective of every restart, in restart order.
    pub restarts: Vec<f64>,
}

struct Component {
    log_weight: f64,
    mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    /// `log|Σ| + reg·tr(Σ⁻¹)`.
    offset: f64,
}

fn components(weights: &[f64], means: &[DVector<f64>], covs: &[DMatrix<f64>], reg: f64) -> Result<Vec<Component>> {
    let mut out = Vec::with_capacity(weights.len());
    for (k, ((w, m), c)) in weights.iter().zip(means).zip(covs).enumerate() {
        let chol = Cholesky::new(c.clone()).ok_or_else(|| {
            Error::Numeric(format!("GMM component {k} covariance collapsed (not positive definite)"))
        })?;
        let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let tr_inv = if reg > 0.0 { chol.inverse().trace() } else { 0.0 };
        if !logdet.is_finite() {
            return Err(Error::Numeric(format!("GMM component {k} has a degenerate covariance")));
        }
        out.push(Component {
            log_weight: w.ln(),
            mean: m.clone(),
            chol,
            offset: logdet + reg * tr_inv,
        });
    }
    Ok(out)
}

fn log_joint(comps: &[Component], x: &DVector<f64>) -> Vec<f64> {
    let d = x.len() as f64;
    comps
        .iter()
        .map(|c| {
            let diff = x - &c.mean;
            let y = c.chol.l_dirty().solve_lower_triangular(&diff).expect("triangular solve");
            let maha = y.norm_squared();
            c.log_weight - 0.5 * (d * LN_2PI + c.offset + maha)
        })
        .collect()
}

fn lse(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Responsibilities `[N][K]` and the summed objective.
fn e_step(comps: &[Component], xs: &[DVector<f64>]) -> (Vec<Vec<f64>>, f64) {
    let mut total = 0.0;
    let resp = xs
        .iter()
        .map(|x| {
            let lj = log_joint(comps, x);
            let l = lse(&lj);
            total += l;
            lj.iter().map(|v| (v - l).exp()).collect()
        })
        .collect();
    (resp, total)
}

type Params = (Vec<f64>, Vec<DVector<f64>>, Vec<DMatrix<f64>>);

fn m_step(xs: &[DVector<f64>], resp: &[Vec<f64>], k: usize, reg: f64) -> Result<Params> {
    let d = xs[0].len();
    let n = xs.len() as f64;
    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut covs = Vec::with_capacity(k);
    for c in 0..k {
        let nk: f64 = resp.iter().map(|r| r[c]).sum();
        if !(nk > 1e-10) {
            return Err(Error::Numeric(format!("GMM component {c} lost all of its points")));
        }
        let mut mean = DVector::zeros(d);
        for (x, r) in xs.iter().zip(resp) {
            mean.axpy(r[c], x, 1.0);
        }
        mean /= nk;
        let mut cov = DMatrix::zeros(d, d);
        for (x, r) in xs.iter().zip(resp) {
            let diff = x - &mean;
            cov.ger(r[c], &diff, &diff, 1.0);
        }
        cov /= nk;
        for i in 0..d {
            cov[(i, i)] += reg;
        }
        weights.push(nk / n);
        means.push(mean);
        covs.push(cov);
    }
    Ok((weights, means, covs))
}

/// k-means++ seeding followed by a hard assignment to the nearest seed.
fn seed_responsibilities(xs: &[DVector<f64>], k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut centres = vec![xs[rng.below(n)].clone()];
    let mut d2: Vec<f64> = xs.iter().map(|x| (x - &centres[0]).norm_squared()).collect();
    while centres.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.uniform() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            rng.below(n)
        };
        centres.push(xs[pick].clone());
        let c = centres.last().expect("just pushed");
        for (slot, x) in d2.iter_mut().zip(xs) {
            *slot = slot.min((x - c).norm_squared());
        }
    }
    xs.iter()
        .map(|x| {
            let best = (0..k)
                .min_by(|&a, &b| (x - &centres[a]).norm_squared().total_cmp(&(x - &centres[b]).norm_squared()))
                .expect("k >= 1");
            (0..k).map(|c| if c == best { 1.0 } else { 0.0 }).collect()
        })
        .collect()
}

fn rows(z: &Tensor<f64>) -> Result<Vec<DVector<f64>>> {
    let (n, d) = z.dims2()?;
    Ok((0..n).map(|i| DVector::from_row_slice(&z.data()[i * d..(i + 1) * d])).collect())
}

fn run_once(xs: &[DVector<f64>], cfg: &GmmConfig, restart: usize) -> Result<(Params, Vec<f64>)> {
    let mut rng = Rng::derive(cfg.seed, Stream::Eval, &[0x6d6d, restart as u64]);
    let resp = seed_responsibilities(xs, cfg.k, &mut rng);
    let mut params = m_step(xs, &resp, cfg.k, cfg.reg)?;
    let mut trace = Vec::new();
    let n = xs.len() as f64;
    for _ in 0..cfg.max_iter {
        let comps = components(&params.0, &params.1, &params.2, cfg.reg)?;
        let (resp, obj) = e_step(&comps, xs);
        let prev = trace.last().copied();
        trace.push(obj);
        if let Some(p) = prev {
            if (obj - p) / n < cfg.tol {
                break;
            }
        }
        params = m_step(xs, &resp, cfg.k, cfg.reg)?;
    }
    Ok((params, trace))
}

/// Fits a full-covariance GMM by EM with `n_init` seeded restarts and keeps
/// the run with the highest final objective.
pub fn gmm_fit(z: &Tensor<f64>, cfg: &GmmConfig) -> Result<GmmModel> {
    let xs = rows(z)?;
    if cfg.k == 0 || cfg.n_init == 0 || cfg.max_iter == 0 {
        return Err(Error::Precondition("GMM needs k, n_init and max_iter >= 1".into()));
    }
    if xs.len() <= cfg.k {
        return Err(Error::Precondition(format!("GMM needs N > K (N = {}, K = {})", xs.len(), cfg.k)));
    }
    if !(cfg.reg >= 0.0) {
        return Err(Error::Precondition(format!("negative covariance ridge {}", cfg.reg)));
    }
    let runs: Vec<Result<(Params, Vec<f64>)>> =
        (0..cfg.n_init).into_par_iter().map(|r| run_once(&xs, cfg, r)).collect();
    let mut best: Option<(Params, Vec<f64>)> = None;
    let mut restarts = Vec::with_capacity(cfg.n_init);
    let mut last_err = None;
    for run in runs {
        match run {
            Ok((p, t)) => {
                let f = *t.last().expect("at least one iteration");
                restarts.push(f);
                let better = best.as_ref().is_none_or(|b| f > *b.1.last().expect("non-empty"));
                if better {
                    best = Some((p, t));
                }
            }
            Err(e) => {
                restarts.push(f64::NEG_INFINITY);
                last_err = Some(e);
            }
        }
    }
    let ((weights, means, covs), trace) = match best {
        Some(b) => b,
        None => return Err(last_err.expect("every restart failed")),
    };
    Ok(GmmModel {
        weights,
        means,
        covs,
        reg: cfg.reg,
        trace,
        restarts,
    })
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    /// Posterior component probabilities `[N][K]`.
    pub fn responsibilities(&self, z: &Tensor<f64>) -> Result<Vec<Vec<f64>>> {
        let comps = components(&self.weights, &self.means, &self.covs, self.reg)?;
        Ok(e_step(&comps, &rows(z)?).0)
    }

    /// Summed objective (log-likelihood when `reg = 0`).
    pub fn score(&self, z: &Tensor<f64>) -> Result<f64> {
        let comps = components(&self.weights, &self.means, &self.covs, self.reg)?;
        Ok(e_step(&comps, &rows(z)?).1)
    }

    /// Most probable component of every row; ties go to the lower index.
    pub fn predict(&self, z: &Tensor<f64>) -> Result<Vec<usize>> {
        Ok(self
            .responsibilities(z)?
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
                    .0
            })
            .collect())
    }
}
