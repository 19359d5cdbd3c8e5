//! SimVAE on an MNIST subset with the 784-500-500-2000 encoder, followed by
//! a kNN sweep and GMM clustering on the test set.
//!
//! ```text
//! cargo run --release --example mnist_simvae -- [epochs] [train_subset]
//! ```

use simvae::eval::{ari, gmm_fit, knn_sweep, nmi, GmmConfig, Metric};
use simvae::training::{export_split, load_data, train, TrainConfig};

fn main() -> simvae::Result<()> {
    let mut args = std::env::args().skip(1);
    let cfg = TrainConfig {
        epochs: args.next().and_then(|a| a.parse().ok()).unwrap_or(5),
        train_subset: args.next().and_then(|a| a.parse().ok()).unwrap_or(10_000),
        views: 2,
        log_wall_time: true,
        ..TrainConfig::default()
    };
    let data = match load_data(&cfg) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("{e}");
            return Ok(());
        }
    };

    let run = train::<f32>(&cfg, &data, None)?;
    for m in &run.metrics {
        println!(
            "epoch {:>3}  loss {:9.3}  recon {:9.3}  prior {:7.3}  {:.1}s",
            m.epoch, m.loss.total, m.loss.recon, m.loss.prior, m.seconds
        );
    }
    let (tr, te) = export_split(&run.checkpoint.model, &data, true, 0)?;
    let (k, acc, per_k) = knn_sweep(&tr, &te, 1..=15, Metric::Euclidean)?;
    println!("knn: best k {k}, accuracy {acc:.4}");
    for (k, a) in per_k {
        print!("k={k}:{a:.3} ");
    }
    println!();
    let pred = gmm_fit(&te.z, &GmmConfig { n_init: 3, ..GmmConfig::new(10) })?.predict(&te.z)?;
    println!("gmm: nmi {:.4}, ari {:.4}", nmi(&pred, &te.labels)?, ari(&pred, &te.labels)?);
    Ok(())
}
