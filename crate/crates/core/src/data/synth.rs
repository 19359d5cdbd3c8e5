use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::nn::container::{Array, Container};
use crate::numerics::{Rng, Stream, Tensor};

/// Generator settings for the hierarchical synthetic data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    /// Number of clusters (content classes).
    pub c: usize,
    pub n_per_class: usize,
    /// Views per source.
    pub j: usize,
    /// Standard deviation of the cluster means.
    pub gamma: f64,
    /// Within-cluster standard deviation.
    pub sigma: f64,
    pub d_z: usize,
    pub d_x: usize,
    /// Observation noise standard deviation.
    pub sigma_x: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            c: 10,
            n_per_class: 500,
            j: 2,
            gamma: 1.0,
            sigma: 0.2,
            d_z: 4,
            d_x: 20,
            sigma_x: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c == 0 || self.n_per_class == 0 || self.j == 0 || self.d_z == 0 || self.d_x == 0 {
            return Err(Error::Config("synthetic counts and dimensions must be positive".into()));
        }
        for (name, v) in [("gamma", self.gamma), ("sigma", self.sigma), ("sigma_x", self.sigma_x)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("synthetic {name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Samples and generator parameters of one synthetic draw.
///
/// Sources are ordered class-major: source `i` has label `i / n_per_class`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub config: SynthConfig,
    /// Cluster means `[C, d_z]`.
    pub psi: Tensor<f64>,
    /// Loading matrix `[d_x, d_z]` with unit-norm columns.
    pub w: Tensor<f64>,
    pub b: Tensor<f64>,
    /// True latents `[N, J, d_z]`.
    pub z: Tensor<f64>,
    /// Observations `[N, J, d_x]`.
    pub x: Tensor<f64>,
    /// Style offsets `z − ψ_y`, `[N, J, d_z]`.
    pub delta: Tensor<f64>,
    pub y: Vec<usize>,
}

/// Draws a synthetic dataset: `ψ_c ~ N(0, γ²I)`, `z ~ N(ψ_y, σ²I)` per view
/// and `x = Wz + b + ε` with `ε ~ N(0, σ_x²I)`.
pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let SynthConfig {
        c,
        n_per_class,
        j,
        gamma,
        sigma,
        d_z,
        d_x,
        sigma_x,
        seed,
    } = *cfg;
    let mut rng = Rng::derive(seed, Stream::Synth, &[0]);

    let psi: Vec<f64> = (0..c * d_z).map(|_| gamma * rng.normal()).collect();
    let mut w: Vec<f64> = (0..d_x * d_z).map(|_| rng.normal()).collect();
    for k in 0..d_z {
        let norm = (0..d_x).map(|r| w[r * d_z + k].powi(2)).sum::<f64>().sqrt();
        for r in 0..d_x {
            w[r * d_z + k] /= norm;
        }
    }
    let b: Vec<f64> = (0..d_x).map(|_| rng.normal()).collect();

    let n = c * n_per_class;
    let mut z = Vec::with_capacity(n * j * d_z);
    let mut delta = Vec::with_capacity(n * j * d_z);
    let mut x = Vec::with_capacity(n * j * d_x);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let class = i / n_per_class;
        y.push(class);
        let mut src = Rng::derive(seed, Stream::Synth, &[1, i as u64]);
        for _ in 0..j {
            let start = z.len();
            for k in 0..d_z {
                let d = sigma * src.normal();
                delta.push(d);
                z.push(psi[class * d_z + k] + d);
            }
            let zv = &z[start..];
            for r in 0..d_x {
                let mean: f64 = b[r] + (0..d_z).map(|k| w[r * d_z + k] * zv[k]).sum::<f64>();
                x.push(mean + sigma_x * src.normal());
            }
        }
    }
    Ok(SynthDataset {
        config: *cfg,
        psi: Tensor::new(vec![c, d_z], psi)?,
        w: Tensor::new(vec![d_x, d_z], w)?,
        b: Tensor::vector(b),
        z: Tensor::new(vec![n, j, d_z], z)?,
        x: Tensor::new(vec![n, j, d_x], x)?,
        delta: Tensor::new(vec![n, j, d_z], delta)?,
        y,
    })
}

impl SynthDataset {
    pub fn n_sources(&self) -> usize {
        self.y.len()
    }

    pub fn view(&self, i: usize, j: usize) -> &[f64] {
        let (jj, d) = (self.config.j, self.config.d_x);
        let at = (i * jj + j) * d;
        &self.x.data()[at..at + d]
    }

    pub fn latent(&self, i: usize, j: usize) -> &[f64] {
        let (jj, d) = (self.config.j, self.config.d_z);
        let at = (i * jj + j) * d;
        &self.z.data()[at..at + d]
    }

    pub fn delta_of(&self, i: usize, j: usize) -> &[f64] {
        let (jj, d) = (self.config.j, self.config.d_z);
        let at = (i * jj + j) * d;
        &self.delta.data()[at..at + d]
    }

    /// `(train, test)` sources; every fifth source is held out.
    pub fn split(&self) -> (Vec<usize>, Vec<usize>) {
        (0..self.n_sources()).partition(|i| i % 5 != 4)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        let g = &self.config;
        c.set_meta("kind", "synth");
        c.set_meta("c", g.c);
        c.set_meta("n_per_class", g.n_per_class);
        c.set_meta("j", g.j);
        c.set_meta("gamma", g.gamma);
        c.set_meta("sigma", g.sigma);
        c.set_meta("d_z", g.d_z);
        c.set_meta("d_x", g.d_x);
        c.set_meta("sigma_x", g.sigma_x);
        c.set_meta("seed", g.seed);
        c.push("x", Array::F64(self.x.clone()));
        c.push("z", Array::F64(self.z.clone()));
        c.push("psi", Array::F64(self.psi.clone()));
        c.push("delta", Array::F64(self.delta.clone()));
        c.push("w", Array::F64(self.w.clone()));
        c.push("b", Array::F64(self.b.clone()));
        c.push("y", Array::labels(&self.y));
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.meta("kind") != Some("synth") {
            return Err(Error::Data("container is not a synthetic dataset".into()));
        }
        let config = SynthConfig {
            c: c.meta_parse("c")?,
            n_per_class: c.meta_parse("n_per_class")?,
            j: c.meta_parse("j")?,
            gamma: c.meta_parse("gamma")?,
            sigma: c.meta_parse("sigma")?,
            d_z: c.meta_parse("d_z")?,
            d_x: c.meta_parse("d_x")?,
            sigma_x: c.meta_parse("sigma_x")?,
            seed: c.meta_parse("seed")?,
        };
        config.validate()?;
        let n = config.c * config.n_per_class;
        let ds = Self {
            config,
            psi: c.f64_array("psi")?,
            w: c.f64_array("w")?,
            b: c.f64_array("b")?,
            z: c.f64_array("z")?,
            x: c.f64_array("x")?,
            delta: c.f64_array("delta")?,
            y: c.label_array("y")?,
        };
        let expect: [(&str, &[usize], Vec<usize>); 7] = [
            ("psi", ds.psi.shape(), vec![config.c, config.d_z]),
            ("w", ds.w.shape(), vec![config.d_x, config.d_z]),
            ("b", ds.b.shape(), vec![config.d_x]),
            ("z", ds.z.shape(), vec![n, config.j, config.d_z]),
            ("x", ds.x.shape(), vec![n, config.j, config.d_x]),
            ("delta", ds.delta.shape(), vec![n, config.j, config.d_z]),
            ("y", &[ds.y.len()], vec![n]),
        ];
        for (name, got, want) in expect {
            if got != want.as_slice() {
                return Err(Error::ArrayMismatch {
                    name: name.into(),
                    reason: format!("shape {got:?}, metadata implies {want:?}"),
                });
            }
        }
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::read(path)?)
    }
}

/// Exact Gaussian posterior of a linear-Gaussian model.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianPosterior {
    pub mean: Vec<f64>,
    /// Row-major `[d_z, d_z]`.
    pub cov: Vec<f64>,
}

/// Posterior of `z ~ N(0, prior_var·I)` given `x = Wz + b + N(0, σ_x²I)`:
/// `Σ = (I/prior_var + WᵀW/σ_x²)⁻¹`, `μ = Σ Wᵀ(x − b)/σ_x²`.
pub fn exact_posterior_linear_gaussian(
    x: &[f64],
    w: &Tensor<f64>,
    b: &[f64],
    sigma_x2: f64,
    prior_var: f64,
) -> Result<LinearGaussianPosterior> {
    let (dx, dz) = w.dims2()?;
    if x.len() != dx || b.len() != dx {
        return Err(Error::Dimension(format!(
            "x has {} and b has {} entries, W is {dx}×{dz}",
            x.len(),
            b.len()
        )));
    }
    if !(sigma_x2 > 0.0 && prior_var > 0.0) {
        return Err(Error::Domain(format!(
            "variances must be positive (σ_x² = {sigma_x2}, prior = {prior_var})"
        )));
    }
    let wm = DMatrix::from_row_slice(dx, dz, w.data());
    let precision = DMatrix::identity(dz, dz) / prior_var + wm.transpose() * &wm / sigma_x2;
    let chol = precision
        .cholesky()
        .ok_or_else(|| Error::Numeric("posterior precision is not positive definite".into()))?;
    let cov = chol.inverse();
    if !cov.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("posterior covariance is not finite".into()));
    }
    let r = DVector::from_iterator(dx, x.iter().zip(b).map(|(a, c)| a - c));
    let mean = &cov * (wm.transpose() * r) / sigma_x2;
    Ok(LinearGaussianPosterior {
        mean: mean.iter().copied().collect(),
        cov: cov.transpose().iter().copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            c: 3,
            n_per_class: 4,
            j: 3,
            d_z: 2,
            d_x: 5,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn construction_is_exact() {
        let ds = synth_generate(&small(1)).unwrap();
        assert_eq!(ds.n_sources(), 12);
        for c in 0..3 {
            assert_eq!(ds.y.iter().filter(|&&y| y == c).count(), 4);
        }
        for i in 0..12 {
            for j in 0..3 {
                let psi = ds.psi.row(ds.y[i]);
                for k in 0..2 {
                    assert_eq!(ds.latent(i, j)[k], psi[k] + ds.delta_of(i, j)[k]);
                }
            }
        }
        for k in 0..2 {
            let norm: f64 = (0..5).map(|r| ds.w.at(r, k).powi(2)).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        assert_eq!(ds, synth_generate(&small(1)).unwrap());
        assert_ne!(ds, synth_generate(&small(2)).unwrap());
    }

    #[test]
    fn zero_style_variance_pins_views_to_cluster_mean() {
        let ds = synth_generate(&SynthConfig {
            sigma: 0.0,
            ..small(3)
        })
        .unwrap();
        for i in 0..ds.n_sources() {
            for j in 0..3 {
                assert_eq!(ds.latent(i, j), ds.psi.row(ds.y[i]));
            }
        }
    }

    #[test]
    fn latent_moments() {
        // 10⁵ draws split over many clusters so the ψ part is well sampled.
        let cfg = SynthConfig {
            c: 50_000,
            n_per_class: 2,
            j: 1,
            gamma: 1.0,
            sigma: 0.5,
            d_z: 2,
            d_x: 1,
            sigma_x: 0.1,
            seed: 11,
        };
        let ds = synth_generate(&cfg).unwrap();
        let n = ds.n_sources() as f64;
        for k in 0..2 {
            let col: Vec<f64> = (0..ds.n_sources()).map(|i| ds.latent(i, 0)[k]).collect();
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!((var / 1.25 - 1.0).abs() < 0.02, "var {var}");
            // E[z | y] = ψ_y: the offsets are centred.
            let dm: f64 = (0..ds.n_sources()).map(|i| ds.delta_of(i, 0)[k]).sum::<f64>() / n;
            assert!(dm.abs() < 0.01);
        }
    }

    #[test]
    fn container_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.simvae");
        let ds = synth_generate(&small(5)).unwrap();
        ds.save(&p).unwrap();
        assert_eq!(SynthDataset::load(&p).unwrap(), ds);
    }

    #[test]
    fn split_holds_out_every_fifth() {
        let ds = synth_generate(&small(1)).unwrap();
        let (tr, te) = ds.split();
        assert_eq!(te, vec![4, 9]);
        assert_eq!(tr.len() + te.len(), 12);
    }

    #[test]
    fn posterior_hand_case() {
        let w = Tensor::eye(2);
        let p = exact_posterior_linear_gaussian(&[2.0, 0.0], &w, &[0.0, 0.0], 1.0, 1.0).unwrap();
        assert!((p.mean[0] - 1.0).abs() < 1e-12 && p.mean[1].abs() < 1e-12);
        for (got, want) in p.cov.iter().zip([0.5, 0.0, 0.0, 0.5]) {
            assert!((got - want).abs() < 1e-12);
        }
        let sharp = exact_posterior_linear_gaussian(&[2.0, -1.0], &w, &[0.5, 0.5], 1e-10, 1.0).unwrap();
        assert!((sharp.mean[0] - 1.5).abs() < 1e-8 && (sharp.mean[1] + 1.5).abs() < 1e-8);
        assert!(matches!(
            exact_posterior_linear_gaussian(&[1.0, 1.0], &w, &[0.0, 0.0], 0.0, 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn posterior_matches_importance_sampling() {
        let w = Tensor::new(vec![3, 2], vec![0.6, -0.8, 0.8, 0.3, 0.0, 0.5]).unwrap();
        let (x, b) = ([1.2, -0.4, 0.7], [0.1, 0.0, -0.2]);
        let (sx2, pv) = (0.5, 1.0);
        let exact = exact_posterior_linear_gaussian(&x, &w, &b, sx2, pv).unwrap();
        let mut rng = Rng::new(4);
        let (mut sw, mut m) = (0.0, [0.0; 2]);
        for _ in 0..1_000_000 {
            let z = [pv.sqrt() * rng.normal(), pv.sqrt() * rng.normal()];
            let r2: f64 = (0..3)
                .map(|r| (x[r] - b[r] - w.at(r, 0) * z[0] - w.at(r, 1) * z[1]).powi(2))
                .sum();
            let wt = (-r2 / (2.0 * sx2)).exp();
            sw += wt;
            m[0] += wt * z[0];
            m[1] += wt * z[1];
        }
        for k in 0..2 {
            let mc = m[k] / sw;
            assert!((mc - exact.mean[k]).abs() <= 0.01 * exact.mean[k].abs(), "{mc} vs {}", exact.mean[k]);
        }
    }
}
