//! GMM clustering, NMI/ARI and kNN on Gaussian blobs in a representation
//! table.

use simvae::eval::{ari, gmm_fit, knn_sweep, nmi, GmmConfig, Metric, RepresentationTable};
use simvae::numerics::{Rng, Tensor};

fn blobs(n: usize, spread: f64, rng: &mut Rng) -> simvae::Result<RepresentationTable> {
    let centres = [[0.0, 0.0], [4.0, 0.0], [0.0, 4.0], [4.0, 4.0]];
    let mut z = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let c = i % centres.len();
        z.push(centres[c][0] + spread * rng.normal());
        z.push(centres[c][1] + spread * rng.normal() * 0.5);
        y.push(c);
    }
    RepresentationTable::new(Tensor::new(vec![n, 2], z)?, y)
}

fn main() -> simvae::Result<()> {
    let mut rng = Rng::new(0);
    for spread in [0.5, 1.0, 1.5, 2.5] {
        let train = blobs(400, spread, &mut rng)?;
        let test = blobs(200, spread, &mut rng)?;
        let gmm = gmm_fit(&test.z, &GmmConfig::new(4))?;
        let pred = gmm.predict(&test.z)?;
        let (k, acc, _) = knn_sweep(&train, &test, 1..=15, Metric::Euclidean)?;
        println!(
            "spread {spread}: gmm nmi {:.3} ari {:.3} ({} EM steps)  knn k={k} acc {acc:.3}",
            nmi(&pred, &test.labels)?,
            ari(&pred, &test.labels)?,
            gmm.trace.len()
        );
    }
    Ok(())
}
