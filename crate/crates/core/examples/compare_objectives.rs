//! Every objective on the same synthetic data, encoder and views: content
//! accuracy, clustering and how much style survives in the representation.

use simvae::eval::{gmm_fit, knn_sweep, nmi, style_probe, GmmConfig, Metric};
use simvae::losses::LossKind;
use simvae::training::{export_split, load_data, train, DatasetKind, TrainConfig};

fn main() -> simvae::Result<()> {
    let mut cfg = TrainConfig {
        dataset: DatasetKind::Synth,
        views: 2,
        latent_dim: 4,
        lr: 1e-3,
        likelihood_var: 0.01,
        epochs: 30,
        ..TrainConfig::default()
    };
    let data = load_data(&cfg)?;

    println!("{:<14} {:>8} {:>8} {:>10}", "loss", "knn", "gmm nmi", "style r2");
    for kind in LossKind::ALL {
        cfg.loss = kind;
        let run = train::<f32>(&cfg, &data, None)?;
        let (tr, te) = export_split(&run.checkpoint.model, &data, true, 0)?;
        let (_, knn, _) = knn_sweep(&tr, &te, 1..=15, Metric::Euclidean)?;
        let gmm = gmm_fit(&te.z, &GmmConfig { n_init: 3, ..GmmConfig::new(te.n_classes()) })?;
        let score = nmi(&gmm.predict(&te.z)?, &te.labels)?;
        let r2 = style_probe(&tr, 1e-3)?;
        let mean_r2 = r2.iter().map(|(_, v)| v).sum::<f64>() / r2.len() as f64;
        println!("{:<14} {knn:>8.3} {score:>8.3} {mean_r2:>10.4}", kind.to_string());
    }
    Ok(())
}
