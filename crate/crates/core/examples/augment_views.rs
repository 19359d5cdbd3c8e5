//! Writes a few augmented views of one MNIST digit as PGM files.
//!
//! Reads IDX files from `$SIMVAE_DATA_DIR/mnist` (default `data/mnist`).

use std::path::Path;

use simvae::data::{data_root, load_mnist_split, locate_idx_dir, make_views, AugmentConfig, Split};
use simvae::eval::write_pgm;

fn main() -> simvae::Result<()> {
    let Some(dir) = locate_idx_dir(&data_root(), "mnist") else {
        eprintln!("no MNIST files under {}; run scripts/fetch_mnist.sh", data_root().display());
        return Ok(());
    };
    let ds = load_mnist_split(&dir, Split::Test, "mnist")?;
    let (h, w) = ds.hw();
    let out = Path::new("out/augment");
    std::fs::create_dir_all(out).map_err(|e| simvae::Error::Data(e.to_string()))?;

    let src = 0;
    write_pgm(&out.join("source.pgm"), ds.image(src), h, w, true)?;
    let cfg = AugmentConfig::mnist();
    let set = make_views(ds.image(src), (h, w), 8, &cfg, 0, 0, src)?;
    for (j, (view, style)) in set.views.iter().zip(&set.style).enumerate() {
        write_pgm(&out.join(format!("view{j}.pgm")), view, h, w, true)?;
        println!("view {j}: {style:?}");
    }
    println!("label {}; wrote {}", ds.labels[src], out.display());
    Ok(())
}
