//! InfoNCE with a free similarity table is optimised by PMI plus a
//! constant. Starts from random similarities, descends, and compares.

use simvae::losses::{infonce_population_loss, pmi_table};
use simvae::nn::{Adam, AdamHyper, ParamSet};
use simvae::numerics::{Graph, Rng, Tensor};

fn main() -> simvae::Result<()> {
    let joint = vec![
        vec![0.10, 0.02, 0.03, 0.05],
        vec![0.01, 0.15, 0.04, 0.02],
        vec![0.04, 0.03, 0.12, 0.03],
        vec![0.02, 0.06, 0.03, 0.25],
    ];
    let pmi = pmi_table(&joint)?;

    let mut rng = Rng::new(5);
    let mut ps = ParamSet::new();
    ps.push("sim", Tensor::new(vec![4, 4], (0..16).map(|_| rng.normal()).collect())?)?;
    let mut opt = Adam::new(&ps, AdamHyper::with_lr(0.05));
    for step in 0..=4000 {
        let mut g = Graph::new();
        let v = ps.bind(&mut g);
        let loss = infonce_population_loss(&mut g, &joint, v[0])?;
        if step % 1000 == 0 {
            println!("step {step:>4}  loss {:.6}", g.scalar_value(loss)?);
        }
        g.backward(loss)?;
        let grads = vec![g.grad_or_zeros(v[0])];
        opt.step(&mut ps, &grads)?;
    }

    // The loss ignores per-row shifts, so compare within-row differences.
    let s = &ps.tensors()[0];
    let mut worst: f64 = 0.0;
    for (a, row) in pmi.iter().enumerate() {
        for b in 1..4 {
            let learned = s.at(a, b) - s.at(a, 0);
            let target = row[b] - row[0];
            worst = worst.max((learned - target).abs());
        }
    }
    println!("max |ΔS − ΔPMI| within rows: {worst:.2e}");
    Ok(())
}
