//! Finite-difference check of every training objective on small random
//! models, in 64-bit mode.
//!
//! ```text
//! cargo run --release --example gradcheck
//! ```

use simvae::losses::gradcheck_suite;
use simvae::numerics::{grad_check, Graph, Tensor};

fn main() -> simvae::Result<()> {
    // A hand-built graph first: f(w) = sum(relu(x·w)²).
    let x = Tensor::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.3], vec![-0.7, 1.1]])?;
    let w = Tensor::from_rows(&[vec![0.2, -0.4, 0.9], vec![1.3, 0.6, -0.5]])?;
    let err = grad_check(
        |g: &mut Graph<f64>, v| {
            let xc = g.constant(x.clone());
            let h = g.matmul(xc, v[0])?;
            let h = g.relu(h)?;
            let h = g.square(h)?;
            g.sum_all(h)
        },
        &[w],
        1e-5,
    )?;
    println!("toy graph: max relative error {err:.2e}");

    for (name, worst) in gradcheck_suite(20, 0, 1e-5)? {
        println!("{name:<22} {worst:.2e} {}", if worst < 1e-4 { "ok" } else { "FAIL" });
    }
    Ok(())
}
