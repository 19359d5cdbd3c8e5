//! Class-conditional generation: fit a Gaussian to each class's latents,
//! sample, decode, and write the images.
//!
//! Uses MNIST when available, otherwise the synthetic dataset (written as
//! 1×d strips).

use std::path::Path;

use simvae::data::Dataset;
use simvae::eval::{conditional_generate, write_pgm};
use simvae::numerics::Tensor;
use simvae::training::{export_split, load_data, train, DatasetKind, TrainConfig};

fn main() -> simvae::Result<()> {
    let mut cfg = TrainConfig {
        views: 2,
        epochs: 3,
        train_subset: 5000,
        ..TrainConfig::default()
    };
    let data = match load_data(&cfg) {
        Ok(d) => d,
        Err(_) => {
            cfg.dataset = DatasetKind::Synth;
            cfg.latent_dim = 4;
            cfg.lr = 1e-3;
            cfg.epochs = 30;
            load_data(&cfg)?
        }
    };
    let (h, w) = match &data.train {
        Dataset::Images { data, .. } => data.hw(),
        Dataset::Synth(s) => (1, s.config.d_x),
    };
    let model = train::<f32>(&cfg, &data, None)?.checkpoint.model;
    let (tr, _) = export_split(&model, &data, true, 0)?;
    let dec = model.decoder()?;
    let decode = |z: &Tensor<f64>| dec.forward_values(&model.params, &z.cast::<f32>());

    let out = Path::new("out/generated");
    std::fs::create_dir_all(out).map_err(|e| simvae::Error::Data(e.to_string()))?;
    for c in 0..tr.n_classes() {
        let (_, imgs) = conditional_generate(&tr, decode, c, 4, c as u64)?;
        for i in 0..4 {
            write_pgm(&out.join(format!("class{c}_{i}.pgm")), imgs.row(i), h, w, true)?;
        }
    }
    println!("wrote {} images to {}", 4 * tr.n_classes(), out.display());
    Ok(())
}
