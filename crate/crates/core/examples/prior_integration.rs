//! The closed-form priors over a set of related latents, checked against
//! direct Monte-Carlo integration over the shared cluster mean ψ.

use simvae::numerics::Rng;
use simvae::ssl_model::{
    log_prior_dot_form, log_prior_gaussian_psi, log_prior_uniform_psi, mc_log_prior_difference, sample_zset,
    verify_prior, ZSet,
};

fn main() -> simvae::Result<()> {
    let (sigma2, gamma2) = (0.15, 1.0);
    let mut rng = Rng::new(3);
    let a = sample_zset(3, 2, sigma2, gamma2, &mut rng)?;
    let b = sample_zset(3, 2, sigma2, gamma2, &mut rng)?;
    let exact = log_prior_gaussian_psi(&a, sigma2, gamma2)? - log_prior_gaussian_psi(&b, sigma2, gamma2)?;
    for n in [1_000, 10_000, 100_000, 1_000_000] {
        let mc = mc_log_prior_difference(&a, &b, sigma2, gamma2, n, &mut rng)?;
        println!("{n:>9} samples: mc {mc:+.4}  closed form {exact:+.4}  |diff| {:.4}", (mc - exact).abs());
    }

    // As γ² grows the Gaussian form approaches the flat one.
    let flat = log_prior_uniform_psi(&a, sigma2)? - log_prior_uniform_psi(&b, sigma2)?;
    for g2 in [1.0, 1e2, 1e4, 1e8, 1e12] {
        let d = log_prior_gaussian_psi(&a, sigma2, g2)? - log_prior_gaussian_psi(&b, sigma2, g2)?;
        println!("gamma2 {g2:>6.0e}: {d:+.8}  (flat {flat:+.8})");
    }

    // On unit vectors the dot-product form only shifts by a constant.
    let unit = |v: &[f64]| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect::<Vec<_>>()
    };
    let p = ZSet::new(vec![unit(&[1.0, 0.2]), unit(&[0.9, 0.5]), unit(&[1.0, -0.1])])?;
    let q = ZSet::new(vec![unit(&[1.0, 0.0]), unit(&[-0.3, 1.0]), unit(&[0.2, -1.0])])?;
    for (name, z) in [("aligned", &p), ("spread", &q)] {
        let gauss = log_prior_gaussian_psi(z, sigma2, gamma2)?;
        let dot = log_prior_dot_form(z, sigma2, gamma2)?;
        println!("{name:>8}: gaussian {gauss:+.4}  dot {dot:+.4}  offset {:+.4}", gauss - dot);
    }

    let check = verify_prior(20, 3, 2, sigma2, gamma2, 1e12, 200_000, 0)?;
    println!("{check:?}");
    Ok(())
}
