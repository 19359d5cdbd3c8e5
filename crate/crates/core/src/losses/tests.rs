use super::*;
use crate::numerics::Rng;
use crate::ssl_model::{kl_to_standard_normal, posterior_entropy};

fn t(rows: usize, cols: usize, v: &[f64]) -> Tensor<f64> {
    Tensor::from_f64(&[rows, cols], v).unwrap()
}

fn rand_t(rng: &mut Rng, rows: usize, cols: usize) -> Tensor<f64> {
    Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
}

fn post(g: &mut Graph<f64>, mu: Tensor<f64>, lv: Tensor<f64>) -> PosteriorVars {
    PosteriorVars {
        mu: g.constant(mu),
        logvar: g.constant(lv),
    }
}

fn exact(prior_var: f64) -> SimvaeParams {
    SimvaeParams {
        prior_var,
        gamma2: f64::INFINITY,
        likelihood_var: 0.02,
        mode: SimvaeMode::ExactElbo,
    }
}

#[test]
fn vae_floor_at_perfect_reconstruction() {
    let mut g = Graph::new();
    let x = g.constant(t(2, 3, &[0.1, 0.5, 0.9, 0.0, 1.0, 0.3]));
    let p = post(&mut g, Tensor::zeros(&[2, 4]), Tensor::zeros(&[2, 4]));
    let out = vae_loss(&mut g, x, x, p, 0.02, 1.0).unwrap();
    let floor = 1.5 * (2.0 * std::f64::consts::PI * 0.02).ln();
    assert!((out.breakdown.total - floor).abs() < 1e-12);
    assert_eq!(out.breakdown.extra("kl"), Some(0.0));
}

#[test]
fn beta_scales_only_the_kl() {
    let mut rng = Rng::new(2);
    let (x, xr, mu, lv) = (rand_t(&mut rng, 3, 4), rand_t(&mut rng, 3, 4), rand_t(&mut rng, 3, 2), rand_t(&mut rng, 3, 2));
    let run = |beta: f64| {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let xrv = g.constant(xr.clone());
        let p = post(&mut g, mu.clone(), lv.clone());
        vae_loss(&mut g, xv, xrv, p, 0.02, beta).unwrap().breakdown
    };
    let a = run(1.0);
    let b = run(3.0);
    assert_eq!(a.recon, b.recon);
    assert!((b.extra("kl").unwrap() - 3.0 * a.extra("kl").unwrap()).abs() < 1e-12);
    let kl: f64 = (0..3)
        .map(|i| kl_to_standard_normal(mu.row(i), lv.row(i)).unwrap())
        .sum::<f64>()
        / 3.0;
    assert!((a.extra("kl").unwrap() - kl).abs() < 1e-12);
    assert!(matches!(
        {
            let mut g = Graph::new();
            let xv = g.constant(x.clone());
            let p = post(&mut g, mu.clone(), lv.clone());
            vae_loss(&mut g, xv, xv, p, 0.02, 0.0)
        },
        Err(Error::Domain(_))
    ));
}

#[test]
fn simvae_single_view_has_no_prior_term() {
    let mut rng = Rng::new(3);
    let mut g = Graph::new();
    let x = g.constant(rand_t(&mut rng, 4, 5));
    let xr = g.constant(rand_t(&mut rng, 4, 5));
    let p = post(&mut g, rand_t(&mut rng, 4, 2), rand_t(&mut rng, 4, 2));
    let z = g.constant(rand_t(&mut rng, 4, 2));
    let out = simvae_loss(&mut g, x, xr, p, z, 1, &exact(0.15)).unwrap();
    assert_eq!(out.breakdown.prior, 0.0);
}

#[test]
fn simvae_prior_hand_case() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[2, 3]));
    let p = post(&mut g, Tensor::zeros(&[2, 2]), Tensor::zeros(&[2, 2]));
    let z = g.constant(t(2, 2, &[1.0, 0.0, 0.0, 1.0]));
    let out = simvae_loss(&mut g, x, x, p, z, 2, &exact(0.15)).unwrap();
    assert!((out.breakdown.prior - 1.0 / 0.3).abs() < 1e-12);
}

#[test]
fn simvae_recon_floor_in_both_modes() {
    let (j, d) = (3, 4);
    let mut g = Graph::new();
    let x = g.constant(Tensor::full(&[j, d], 0.5));
    let p = post(&mut g, Tensor::zeros(&[j, 2]), Tensor::zeros(&[j, 2]));
    let z = g.constant(Tensor::zeros(&[j, 2]));
    let e = simvae_loss(&mut g, x, x, p, z, j, &exact(0.15)).unwrap();
    let floor = j as f64 * 0.5 * d as f64 * (2.0 * std::f64::consts::PI * 0.02).ln();
    assert!((e.breakdown.recon - floor).abs() < 1e-12);
    assert!((e.breakdown.entropy + j as f64 * posterior_entropy(&[0.0, 0.0])).abs() < 1e-12);
    let mut lit = exact(0.15);
    lit.mode = SimvaeMode::Algo1Literal;
    let a = simvae_loss(&mut g, x, x, p, z, j, &lit).unwrap();
    assert_eq!(a.breakdown.recon, 0.0);
    assert_eq!(a.breakdown.entropy, 0.0);
}

#[test]
fn algo1_literal_terms_by_hand() {
    let mut g = Graph::new();
    let x = g.constant(t(2, 2, &[1.0, 0.0, 0.0, 0.0]));
    let xr = g.constant(Tensor::zeros(&[2, 2]));
    let p = post(&mut g, Tensor::zeros(&[2, 1]), t(2, 1, &[0.4, -1.0]));
    let z = g.constant(t(2, 1, &[1.0, -1.0]));
    let mut cfg = exact(0.5);
    cfg.mode = SimvaeMode::Algo1Literal;
    let b = simvae_loss(&mut g, x, xr, p, z, 2, &cfg).unwrap().breakdown;
    assert!((b.recon - 0.5).abs() < 1e-12);
    assert!((b.entropy - 0.5 * -0.6).abs() < 1e-12);
    assert!((b.prior - 2.0).abs() < 1e-12);
    assert!((b.total - b.combined()).abs() < 1e-12);
}

#[test]
fn simvae_single_view_matches_vae_when_prior_is_standard_normal() {
    // −H[q] + E_q[−log N(z; 0, I)] is exactly KL(q ‖ N(0, I)).
    let mut rng = Rng::new(9);
    let (x, xr, mu, lv, z) = (
        rand_t(&mut rng, 5, 6),
        rand_t(&mut rng, 5, 6),
        rand_t(&mut rng, 5, 3),
        rand_t(&mut rng, 5, 3),
        rand_t(&mut rng, 5, 3),
    );
    let mut g = Graph::new();
    let (xv, xrv, zv) = (g.constant(x), g.constant(xr), g.constant(z));
    let p = post(&mut g, mu.clone(), lv.clone());
    let s = simvae_loss(&mut g, xv, xrv, p, zv, 1, &exact(0.15)).unwrap().breakdown;
    let v = vae_loss(&mut g, xv, xrv, p, 0.02, 1.0).unwrap().breakdown;
    let cross: f64 = (0..5)
        .map(|i| {
            let m = mu.row(i);
            let l = lv.row(i);
            m.iter().zip(l).map(|(a, b)| 0.5 * (a * a + b.exp())).sum::<f64>()
                + 1.5 * (2.0 * std::f64::consts::PI).ln()
        })
        .sum::<f64>()
        / 5.0;
    assert!((s.recon + s.entropy + cross - v.total).abs() < 1e-6);
}

#[test]
fn simvae_is_view_permutation_invariant() {
    let mut rng = Rng::new(10);
    let (n, j) = (3, 4);
    let rows = n * j;
    let (x, xr, mu, lv, z) = (
        rand_t(&mut rng, rows, 5),
        rand_t(&mut rng, rows, 5),
        rand_t(&mut rng, rows, 2),
        rand_t(&mut rng, rows, 2),
        rand_t(&mut rng, rows, 2),
    );
    let perm: Vec<usize> = (0..n).flat_map(|i| [3, 0, 2, 1].map(|k| i * j + k)).collect();
    let run = |idx: &[usize]| {
        let mut g = Graph::new();
        let pick = |t: &Tensor<f64>| t.select_rows(idx).unwrap();
        let (a, b, c) = (g.constant(pick(&x)), g.constant(pick(&xr)), g.constant(pick(&z)));
        let p = post(&mut g, pick(&mu), pick(&lv));
        simvae_loss(&mut g, a, b, p, c, j, &exact(0.15)).unwrap().breakdown.total
    };
    let ident: Vec<usize> = (0..rows).collect();
    assert!((run(&ident) - run(&perm)).abs() < 1e-9);
}

#[test]
fn simvae_rejects_zero_views() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[2, 2]));
    let p = post(&mut g, Tensor::zeros(&[2, 1]), Tensor::zeros(&[2, 1]));
    let z = g.constant(Tensor::zeros(&[2, 1]));
    assert!(matches!(
        simvae_loss(&mut g, x, x, p, z, 0, &exact(0.15)),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn gaussian_psi_spread_penalty_matches_closed_form() {
    use crate::ssl_model::{log_prior_gaussian_psi, ZSet};
    let mut rng = Rng::new(12);
    let z = rand_t(&mut rng, 6, 2);
    let mut g = Graph::new();
    let zv = g.constant(z.clone());
    let pen = spread_penalty(&mut g, zv, 3, 0.15, 0.7).unwrap();
    let got = g.scalar_value(pen).unwrap();
    // The penalty drops the constant, so compare against −log p + log p(0).
    let zero = ZSet::new(vec![vec![0.0; 2]; 3]).unwrap();
    let expect: f64 = (0..2)
        .map(|i| {
            let s = ZSet::new((0..3).map(|k| z.row(i * 3 + k).to_vec()).collect()).unwrap();
            log_prior_gaussian_psi(&zero, 0.15, 0.7).unwrap() - log_prior_gaussian_psi(&s, 0.15, 0.7).unwrap()
        })
        .sum();
    assert!((got - expect).abs() < 1e-12);
}

#[test]
fn infonce_identical_representations() {
    for n in [2usize, 3, 7] {
        let mut g = Graph::new();
        let z = g.constant(Tensor::full(&[n, 3], 0.4));
        let out = info_nce_loss(&mut g, z, z, 0.7).unwrap();
        assert!((out.breakdown.total - ((2 * n - 1) as f64).ln()).abs() < 1e-9);
    }
}

#[test]
fn infonce_anchor_hand_case() {
    let v = info_nce_anchor(&[1.0, 0.0], &[2.0, 0.0], &[vec![0.0, 1.0], vec![0.0, -3.0]], 1.0).unwrap();
    let e = std::f64::consts::E;
    assert!((v + (e / (e + 2.0)).ln()).abs() < 1e-12);
    assert!((v - 0.551_444_713_932_051).abs() < 1e-5);
}

#[test]
fn infonce_scale_invariance_and_small_batch() {
    let mut rng = Rng::new(13);
    let a = rand_t(&mut rng, 4, 3);
    let b = rand_t(&mut rng, 4, 3);
    let run = |s: f64| {
        let mut g = Graph::new();
        let av = g.constant(a.map(|v| v * s));
        let bv = g.constant(b.map(|v| v * s));
        info_nce_loss(&mut g, av, bv, 0.5).unwrap().breakdown.total
    };
    assert!((run(1.0) - run(37.0)).abs() < 1e-9);
    let mut g = Graph::<f64>::new();
    let one = g.constant(Tensor::zeros(&[1, 3]));
    assert!(matches!(info_nce_loss(&mut g, one, one, 0.7), Err(Error::Precondition(_))));
}

#[test]
fn infonce_views_two_views_equals_pair_form() {
    let mut rng = Rng::new(14);
    let z = rand_t(&mut rng, 6, 3);
    let mut g = Graph::new();
    let zv = g.constant(z.clone());
    let multi = info_nce_views(&mut g, zv, 2, 0.7).unwrap().breakdown.total;
    let a = g.constant(z.select_rows(&[0, 2, 4]).unwrap());
    let b = g.constant(z.select_rows(&[1, 3, 5]).unwrap());
    let pair = info_nce_loss(&mut g, a, b, 0.7).unwrap().breakdown.total;
    assert!((multi - pair).abs() < 1e-12);
}

#[test]
fn instance_discrimination_cases() {
    let mut g = Graph::new();
    let z = g.constant(t(2, 2, &[1.0, 2.0, -1.0, 0.5]));
    let w = g.constant(Tensor::zeros(&[5, 2]));
    let out = instance_discrimination_loss(&mut g, z, &[0, 3], w).unwrap();
    assert!((out.breakdown.total - 5f64.ln()).abs() < 1e-12);
    assert!(matches!(
        instance_discrimination_loss(&mut g, z, &[0, 5], w),
        Err(Error::Data(_))
    ));
    let w = g.constant(t(2, 2, &[50.0, 0.0, -50.0, 0.0]));
    let z = g.constant(t(1, 2, &[1.0, 0.0]));
    let out = instance_discrimination_loss(&mut g, z, &[0], w).unwrap();
    assert!(out.breakdown.total < 1e-40);
}

#[test]
fn pmi_cases() {
    let pa = [0.1, 0.2, 0.3, 0.4];
    let pb = [0.25, 0.25, 0.4, 0.1];
    let indep: Vec<Vec<f64>> = pa.iter().map(|a| pb.iter().map(|b| a * b).collect()).collect();
    for row in pmi_table(&indep).unwrap() {
        for v in row {
            assert!(v.abs() < 1e-12);
        }
    }
    let c = 3;
    let diag: Vec<Vec<f64>> = (0..c)
        .map(|i| (0..c).map(|k| if i == k { 1.0 / c as f64 } else { 0.0 }).collect())
        .collect();
    let p = pmi_table(&diag).unwrap();
    for i in 0..c {
        for k in 0..c {
            if i == k {
                assert!((p[i][k] - (c as f64).ln()).abs() < 1e-12);
            } else {
                assert_eq!(p[i][k], f64::NEG_INFINITY);
            }
        }
    }
    let sym = vec![vec![0.2, 0.1], vec![0.1, 0.6]];
    let p = pmi_table(&sym).unwrap();
    assert_eq!(p[0][1], p[1][0]);
    assert!(matches!(pmi_table(&[vec![0.5, 0.6], vec![0.0, 0.0]]), Err(Error::Data(_))));
}

#[test]
fn population_infonce_is_stationary_at_pmi() {
    let joint = vec![
        vec![0.10, 0.02, 0.03, 0.05],
        vec![0.01, 0.15, 0.04, 0.02],
        vec![0.04, 0.03, 0.12, 0.03],
        vec![0.02, 0.06, 0.03, 0.25],
    ];
    let pmi = pmi_table(&joint).unwrap();
    let flat: Vec<f64> = pmi.iter().flatten().map(|v| v + 0.3).collect();
    let s0 = Tensor::from_f64(&[4, 4], &flat).unwrap();
    let mut g = Graph::new();
    let sv = g.param(s0.clone());
    let loss = infonce_population_loss(&mut g, &joint, sv).unwrap();
    g.backward(loss).unwrap();
    let grad = g.grad(sv).unwrap();
    assert!(grad.data().iter().all(|v| v.abs() < 1e-12), "{grad:?}");
    let base = g.scalar_value(loss).unwrap();
    let mut rng = Rng::new(21);
    for _ in 0..10 {
        let noise: Vec<f64> = (0..16).map(|_| 0.1 * rng.uniform_range(-1.0, 1.0)).collect();
        let pert = Tensor::from_f64(&[4, 4], &flat.iter().zip(&noise).map(|(a, b)| a + b).collect::<Vec<_>>()).unwrap();
        let mut g = Graph::new();
        let sv = g.constant(pert);
        let l = infonce_population_loss(&mut g, &joint, sv).unwrap();
        assert!(g.scalar_value(l).unwrap() > base);
    }
}

#[test]
fn breakdown_sums_to_total_for_every_loss() {
    let mut rng = Rng::new(31);
    for (label, cfg) in objective::gradcheck_cases() {
        let arch = crate::nn::Architecture {
            encoder: crate::nn::MlpSpec::gaussian_encoder(5, &[6], 2),
            decoder: cfg.kind.needs_decoder().then(|| crate::nn::MlpSpec::decoder(2, &[6], 5)),
            class_table: cfg.kind.needs_class_table().then_some(4),
        };
        let model = crate::nn::Model::<f64>::init(arch, &mut rng).unwrap();
        let batch = Batch {
            x: rand_t(&mut rng, 6, 5),
            views: 2,
            sources: vec![0, 1, 3],
            eps: vec![rand_t(&mut rng, 6, 2), rand_t(&mut rng, 6, 2)],
        };
        let mut g = Graph::new();
        let vars = model.params.bind(&mut g);
        let out = objective(&mut g, &model, &vars, &batch, &cfg).unwrap();
        let b = &out.breakdown;
        assert!((b.total - b.combined()).abs() < 1e-6 * b.total.abs().max(1.0), "{label}: {b:?}");
        assert!(b.total.is_finite());
    }
}

#[test]
fn gradients_match_finite_differences() {
    for (label, err) in gradcheck_suite(3, 77, 1e-5).unwrap() {
        assert!(err < 1e-4, "{label}: {err}");
    }
}
