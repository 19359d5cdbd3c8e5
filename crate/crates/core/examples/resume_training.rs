//! Interrupting and resuming a run reproduces the uninterrupted trace.

use simvae::training::{checkpoint_path, load_data, resume, train, DatasetKind, TrainConfig};

fn main() -> simvae::Result<()> {
    let cfg = TrainConfig {
        dataset: DatasetKind::Synth,
        views: 2,
        latent_dim: 4,
        lr: 1e-3,
        epochs: 6,
        ..TrainConfig::default()
    };
    let data = load_data(&cfg)?;

    let straight = train::<f32>(&cfg, &data, None)?.metrics;

    let dir = std::env::temp_dir().join("simvae-resume-example");
    let mut first = cfg.clone();
    first.epochs = 3;
    train::<f32>(&first, &data, Some(&dir))?;
    let resumed = resume::<f32>(&checkpoint_path(&dir), &cfg, &data, Some(&dir))?;
    println!("{}", resumed.message);

    for (a, b) in straight[3..].iter().zip(&resumed.metrics) {
        println!(
            "epoch {}  straight {:.9}  resumed {:.9}  diff {:.1e}",
            a.epoch,
            a.loss.total,
            b.loss.total,
            (a.loss.total - b.loss.total).abs()
        );
    }

    // A changed key that affects training is refused.
    let mut changed = cfg.clone();
    changed.prior_var = 0.3;
    if let Err(e) = resume::<f32>(&checkpoint_path(&dir), &changed, &data, None) {
        println!("{e}");
    }
    Ok(())
}
