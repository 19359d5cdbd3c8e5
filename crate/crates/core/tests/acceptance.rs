//! Acceptance run: prints one PASS/FAIL line per criterion, in order.
//!
//! The MNIST criteria (7 and 8) need the IDX files under `SIMVAE_DATA_DIR`
//! or `<workspace>/data`; they print SKIP when the files are missing or
//! `SIMVAE_SKIP_MNIST` is set. Those two are benchmark reports and do not
//! change the exit status. Every other criterion does.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use simvae::eval::{ari, gmm_fit, knn_predict, knn_sweep, nmi, style_probe, GmmConfig, Metric, RepresentationTable};
use simvae::losses::{gradcheck_suite, infonce_population_loss, pmi_table, LossKind};
use simvae::numerics::{Graph, Rng, Tensor};
use simvae::ssl_model::verify_prior;
use simvae::training::{checkpoint_path, export_split, load_data, resume, train, DatasetKind, LoadedData, TrainConfig};

type Check = simvae::Result<(bool, String)>;

fn io<T>(r: std::io::Result<T>) -> simvae::Result<T> {
    r.map_err(|e| simvae::Error::Data(e.to_string()))
}

#[derive(PartialEq)]
enum Verdict {
    Pass,
    Fail,
    Skip,
}

struct Line {
    id: usize,
    name: &'static str,
    verdict: Verdict,
    detail: String,
    secs: f64,
    gating: bool,
}

fn report(line: &Line) {
    let tag = match line.verdict {
        Verdict::Pass => "PASS",
        Verdict::Fail => "FAIL",
        Verdict::Skip => "SKIP",
    };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "criterion {:>2} {tag} {} ({:.1}s): {}",
        line.id, line.name, line.secs, line.detail
    );
    let _ = out.flush();
}

fn run(id: usize, name: &'static str, gating: bool, f: impl FnOnce() -> Check) -> Line {
    let t = Instant::now();
    let (verdict, detail) = match f() {
        Ok((true, d)) => (Verdict::Pass, d),
        Ok((false, d)) => (Verdict::Fail, d),
        Err(e) => (Verdict::Fail, format!("error: {e}")),
    };
    let line = Line {
        id,
        name,
        verdict,
        detail,
        secs: t.elapsed().as_secs_f64(),
        gating,
    };
    report(&line);
    line
}

fn gradients() -> Check {
    let t = Instant::now();
    let per_loss = gradcheck_suite(20, 0, 1e-5)?;
    let secs = t.elapsed().as_secs_f64();
    let worst = per_loss.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    let list: Vec<String> = per_loss.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    Ok((
        worst < 1e-4 && secs < 120.0,
        format!("max rel error {worst:.2e} < 1e-4 over 20 instances [{}]", list.join(", ")),
    ))
}

fn prior_integration() -> Check {
    let t = Instant::now();
    let r = verify_prior(20, 3, 2, 0.15, 1.0, 1e12, 1_000_000, 0)?;
    let secs = t.elapsed().as_secs_f64();
    Ok((
        r.max_mc_error < 0.05 && r.max_flat_error < 1e-6 && secs < 300.0,
        format!(
            "20 pairs: |closed form - integration| {:.2e} < 0.05, |gamma2=1e12 - flat| {:.2e} < 1e-6",
            r.max_mc_error, r.max_flat_error
        ),
    ))
}

fn population_loss(joint: &[Vec<f64>], s: &[f64]) -> simvae::Result<(f64, Vec<f64>)> {
    let mut g = Graph::new();
    let v = g.param(Tensor::new(vec![4, 4], s.to_vec())?);
    let l = infonce_population_loss(&mut g, joint, v)?;
    let value = g.scalar_value(l)?;
    g.backward(l)?;
    Ok((value, g.grad_or_zeros(v).data().to_vec()))
}

fn pmi_stationarity() -> Check {
    let joint = vec![
        vec![0.10, 0.02, 0.03, 0.05],
        vec![0.01, 0.15, 0.04, 0.02],
        vec![0.04, 0.03, 0.12, 0.03],
        vec![0.02, 0.06, 0.03, 0.25],
    ];
    let pmi = pmi_table(&joint)?;
    let start: Vec<f64> = pmi.iter().flatten().map(|v| v + 0.7).collect();
    let (l0, g0) = population_loss(&joint, &start)?;
    let grad_norm = g0.iter().map(|g| g * g).sum::<f64>().sqrt();

    // Plain gradient descent from the PMI table.
    let mut s = start.clone();
    for _ in 0..5000 {
        let (_, grad) = population_loss(&joint, &s)?;
        s.iter_mut().zip(&grad).for_each(|(v, g)| *v -= 0.5 * g);
    }
    let mut drift: f64 = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            for c in b + 1..4 {
                let before = start[a * 4 + b] - start[a * 4 + c];
                let after = s[a * 4 + b] - s[a * 4 + c];
                drift = drift.max((before - after).abs());
            }
        }
    }

    let mut rng = Rng::new(3);
    let mut worse = 0;
    for _ in 0..10 {
        let p: Vec<f64> = start.iter().map(|v| v + 0.1 * rng.normal()).collect();
        if population_loss(&joint, &p)?.0 > l0 {
            worse += 1;
        }
    }
    Ok((
        drift < 1e-3 && worse == 10,
        format!(
            "|grad| at PMI {grad_norm:.1e}; pairwise drift {drift:.1e} < 1e-3 after 5000 steps; {worse}/10 perturbations raise the loss"
        ),
    ))
}

fn entropy_of(labels: &[usize]) -> f64 {
    let n = labels.len() as f64;
    let mut h = 0.0;
    for v in 0..=labels.iter().copied().max().unwrap_or(0) {
        let c = labels.iter().filter(|&&x| x == v).count() as f64;
        if c > 0.0 {
            h -= c / n * (c / n).ln();
        }
    }
    h
}

fn oracle_nmi(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let (ha, hb) = (entropy_of(a), entropy_of(b));
    if ha * hb <= 0.0 {
        return 0.0;
    }
    let mut mi = 0.0;
    for x in 0..=*a.iter().max().unwrap() {
        for y in 0..=*b.iter().max().unwrap() {
            let pxy = a.iter().zip(b).filter(|&(&p, &q)| p == x && q == y).count() as f64 / n;
            let px = a.iter().filter(|&&p| p == x).count() as f64 / n;
            let py = b.iter().filter(|&&q| q == y).count() as f64 / n;
            if pxy > 0.0 {
                mi += pxy * (pxy / (px * py)).ln();
            }
        }
    }
    mi / (ha * hb).sqrt()
}

fn oracle_ari(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut both, mut in_a, mut in_b, mut total) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let (sa, sb) = (a[i] == a[j], b[i] == b[j]);
            both += (sa && sb) as u8 as f64;
            in_a += sa as u8 as f64;
            in_b += sb as u8 as f64;
            total += 1.0;
        }
    }
    if total == 0.0 {
        return 1.0;
    }
    let expected = in_a * in_b / total;
    let max = 0.5 * (in_a + in_b);
    if max == expected {
        return 1.0;
    }
    (both - expected) / (max - expected)
}

fn oracle_knn(train: &[Vec<f64>], labels: &[usize], q: &[f64], k: usize) -> usize {
    let mut d: Vec<(f64, usize)> = train
        .iter()
        .enumerate()
        .map(|(i, x)| (x.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(), i))
        .collect();
    d.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    let mut best: Option<(usize, usize, f64)> = None;
    for y in 0..=*labels.iter().max().unwrap() {
        let hits: Vec<f64> = d[..k].iter().filter(|(_, i)| labels[*i] == y).map(|(dist, _)| *dist).collect();
        if hits.is_empty() {
            continue;
        }
        let cand = (y, hits.len(), hits.iter().sum::<f64>());
        best = match best {
            Some(b) if b.1 > cand.1 || (b.1 == cand.1 && b.2 <= cand.2) => Some(b),
            _ => Some(cand),
        };
    }
    best.unwrap().0
}

fn labelings(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0..k.pow(n as u32))
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let v = code % k;
                    code /= k;
                    v
                })
                .collect()
        })
        .collect()
}

fn metric_oracles() -> Check {
    let mut worst_nmi: f64 = 0.0;
    let mut worst_ari: f64 = 0.0;
    let all = labelings(5, 3);
    for a in &all {
        for b in &all {
            worst_nmi = worst_nmi.max((nmi(a, b)? - oracle_nmi(a, b)).abs());
            worst_ari = worst_ari.max((ari(a, b)? - oracle_ari(a, b)).abs());
        }
    }
    let mut rng = Rng::new(11);
    let mut knn_mismatch = 0;
    for _ in 0..100 {
        let n = 40;
        let a: Vec<usize> = (0..n).map(|_| rng.below(4)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.below(3)).collect();
        worst_nmi = worst_nmi.max((nmi(&a, &b)? - oracle_nmi(&a, &b)).abs());
        worst_ari = worst_ari.max((ari(&a, &b)? - oracle_ari(&a, &b)).abs());

        // Integer coordinates make distance ties common.
        let train: Vec<Vec<f64>> = (0..25).map(|_| (0..2).map(|_| rng.below(5) as f64).collect()).collect();
        let labels: Vec<usize> = (0..25).map(|_| rng.below(3)).collect();
        let test: Vec<Vec<f64>> = (0..10).map(|_| (0..2).map(|_| rng.below(5) as f64).collect()).collect();
        let tr = RepresentationTable::new(Tensor::from_rows(&train)?, labels.clone())?;
        let te = RepresentationTable::new(Tensor::from_rows(&test)?, vec![0; 10])?;
        for k in 1..=15 {
            let got = knn_predict(&tr, &te, k, Metric::Euclidean)?;
            for (q, &g) in test.iter().zip(&got) {
                knn_mismatch += (oracle_knn(&train, &labels, q, k) != g) as usize;
            }
        }
    }

    // Responsibilities of an 8-point fit recomputed from the fitted parameters.
    let pts: Vec<Vec<f64>> = (0..8)
        .map(|i| {
            let c = if i < 4 { -2.0 } else { 2.0 };
            vec![c + rng.normal(), 0.5 * c + rng.normal()]
        })
        .collect();
    let z = Tensor::from_rows(&pts)?;
    let model = gmm_fit(&z, &GmmConfig::new(2))?;
    let resp = model.responsibilities(&z)?;
    let mut worst_resp: f64 = 0.0;
    for (x, r) in pts.iter().zip(&resp) {
        let x = DVector::from_column_slice(x);
        let logs: Vec<f64> = (0..2)
            .map(|c| {
                let cov: &DMatrix<f64> = &model.covs[c];
                let inv = cov.clone().try_inverse().unwrap();
                let dx = &x - &model.means[c];
                let quad = (dx.transpose() * &inv * &dx)[(0, 0)];
                model.weights[c].ln()
                    - 0.5 * (quad + cov.determinant().ln() + 2.0 * (2.0 * std::f64::consts::PI).ln() + model.reg * inv.trace())
            })
            .collect();
        let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let norm: f64 = logs.iter().map(|l| (l - m).exp()).sum();
        for c in 0..2 {
            worst_resp = worst_resp.max(((logs[c] - m).exp() / norm - r[c]).abs());
        }
    }

    // EM never decreases its objective.
    let mut worst_drop: f64 = 0.0;
    for (trial, reg) in [(0u64, 0.0), (1, 0.0), (2, 1e-6), (3, 1e-3)] {
        let mut r = Rng::new(100 + trial);
        let pts: Vec<Vec<f64>> = (0..300)
            .map(|i| {
                let c = (i % 3) as f64 * 2.5;
                vec![c + r.normal(), c * 0.3 + 0.6 * r.normal()]
            })
            .collect();
        let fit = gmm_fit(
            &Tensor::from_rows(&pts)?,
            &GmmConfig { reg, n_init: 3, tol: 0.0, max_iter: 100, seed: trial, ..GmmConfig::new(3) },
        )?;
        for w in fit.trace.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
    }

    let pass = worst_nmi < 1e-12 && worst_ari < 1e-12 && knn_mismatch == 0 && worst_resp < 1e-12 && worst_drop <= 1e-9;
    Ok((
        pass,
        format!(
            "nmi {worst_nmi:.1e}, ari {worst_ari:.1e} (59049 exhaustive + 100 random pairs); knn mismatches {knn_mismatch}/15000; \
             gmm responsibilities {worst_resp:.1e}; largest EM objective drop {worst_drop:.1e}"
        ),
    ))
}

fn synth_config(loss: LossKind, seed: u64) -> TrainConfig {
    TrainConfig {
        dataset: DatasetKind::Synth,
        loss,
        seed,
        views: 2,
        latent_dim: 4,
        lr: 1e-3,
        likelihood_var: 0.01,
        epochs: 50,
        ..TrainConfig::default()
    }
}

struct SynthRun {
    knn: f64,
    nmi: f64,
    style_r2: f64,
}

fn synth_run(data: &LoadedData, loss: LossKind, seed: u64) -> simvae::Result<SynthRun> {
    let cfg = synth_config(loss, seed);
    let run = train::<f32>(&cfg, data, None)?;
    let (tr, te) = export_split(&run.checkpoint.model, data, true, seed)?;
    let (_, knn, _) = knn_sweep(&tr, &te, 1..=15, Metric::Euclidean)?;
    let gmm = gmm_fit(&te.z, &GmmConfig { seed, ..GmmConfig::new(te.n_classes()) })?;
    let nmi = nmi(&gmm.predict(&te.z)?, &te.labels)?;
    let r2 = style_probe(&tr, 1e-3)?;
    let style_r2 = r2.iter().map(|(_, v)| v).sum::<f64>() / r2.len() as f64;
    Ok(SynthRun { knn, nmi, style_r2 })
}

fn synth_content(sim: &[SynthRun], secs: f64) -> Check {
    let ok = sim.iter().filter(|r| r.nmi >= 0.90 && r.knn >= 0.95).count();
    let per: Vec<String> = sim.iter().map(|r| format!("nmi {:.3} knn {:.3}", r.nmi, r.knn)).collect();
    Ok((
        ok == 3 && secs < 600.0,
        format!("{ok}/3 seeds with nmi >= 0.90 and knn >= 0.95 [{}]; 3 runs in {secs:.0}s", per.join("; ")),
    ))
}

fn synth_style(sim: &[SynthRun], nce: &[SynthRun], secs: f64) -> Check {
    let wins = sim.iter().zip(nce).filter(|(s, n)| s.style_r2 > n.style_r2).count();
    let per: Vec<String> = sim
        .iter()
        .zip(nce)
        .map(|(s, n)| format!("{:.4} vs {:.4}", s.style_r2, n.style_r2))
        .collect();
    Ok((
        wins >= 2 && secs < 1200.0,
        format!("simvae style r2 above infonce on {wins}/3 seeds [{}]; 6 runs in {secs:.0}s", per.join("; ")),
    ))
}

fn mnist_root() -> Option<PathBuf> {
    if std::env::var_os("SIMVAE_SKIP_MNIST").is_some() {
        return None;
    }
    let root = std::env::var_os("SIMVAE_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data")));
    simvae::data::locate_idx_dir(&root, "mnist").map(|_| root)
}

fn mnist_config(root: &std::path::Path, loss: LossKind, seed: u64) -> TrainConfig {
    TrainConfig {
        dataset: DatasetKind::Mnist,
        data_path: root.display().to_string(),
        train_subset: 10_000,
        loss,
        views: if loss == LossKind::Simvae { 2 } else { 1 },
        latent_dim: 10,
        prior_var: 0.15,
        likelihood_var: 0.02,
        lr: 8e-5,
        batch_size: 128,
        epochs: 40,
        seed,
        ..TrainConfig::default()
    }
}

/// kNN test accuracy (k swept over 1..=15) and wall time of one run.
fn mnist_run(root: &std::path::Path, loss: LossKind, seed: u64) -> simvae::Result<(f64, f64)> {
    let t = Instant::now();
    let cfg = mnist_config(root, loss, seed);
    let data = load_data(&cfg)?;
    let run = train::<f32>(&cfg, &data, None)?;
    let (tr, te) = export_split(&run.checkpoint.model, &data, true, seed)?;
    let (_, knn, _) = knn_sweep(&tr, &te, 1..=15, Metric::Euclidean)?;
    Ok((knn, t.elapsed().as_secs_f64()))
}

fn reproducibility() -> Check {
    let mut cfg = synth_config(LossKind::Simvae, 4);
    cfg.synth.n_per_class = 100;
    cfg.epochs = 6;
    let data = load_data(&cfg)?;
    let dir = io(tempfile::tempdir())?;
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    train::<f32>(&cfg, &data, Some(&a))?;
    train::<f32>(&cfg, &data, Some(&b))?;
    let identical = io(fs::read(a.join("metrics.csv")))? == io(fs::read(b.join("metrics.csv")))?;

    let straight = train::<f32>(&cfg, &data, None)?.metrics;
    let mut first = cfg.clone();
    first.epochs = 3;
    train::<f32>(&first, &data, Some(&c))?;
    let resumed = resume::<f32>(&checkpoint_path(&c), &cfg, &data, Some(&c))?.metrics;
    let post: Vec<_> = resumed.iter().filter(|m| m.epoch > 3).collect();
    let diff = straight[3..]
        .iter()
        .zip(&post)
        .map(|(x, y)| (x.loss.total - y.loss.total).abs())
        .fold(0.0, f64::max);
    Ok((
        identical && post.len() == 3 && diff < 1e-6,
        format!(
            "metrics csv byte-identical: {identical}; {} post-resume epochs, max loss diff {diff:.1e} < 1e-6",
            post.len()
        ),
    ))
}

fn cli_pipeline() -> Check {
    let dir = io(tempfile::tempdir())?;
    let out = dir.path().to_str().unwrap().to_string();
    let cfg = dir.path().join("run.txt");
    io(fs::write(&cfg, "dataset = synth\nviews = 2\nlatent_dim = 4\nlr = 0.001\nlikelihood_var = 0.01\nepochs = 10\n"))?;
    let cfg = cfg.to_str().unwrap().to_string();
    let data = format!("data_path={out}/synth.simvae");
    let steps: Vec<Vec<&str>> = vec![
        vec!["synth"],
        vec!["train", "--set", &data],
        vec!["export-reps"],
        vec!["eval"],
        vec!["generate", "--n", "4"],
    ];
    let t = Instant::now();
    let mut codes = Vec::new();
    for s in &steps {
        let args = std::iter::once("simvae")
            .chain(s.iter().copied())
            .chain(["--config", &cfg, "--out", &out]);
        codes.push(simvae::cli::run(args.map(String::from)));
    }
    let secs = t.elapsed().as_secs_f64();
    let report = fs::read_to_string(dir.path().join("report.csv")).unwrap_or_default();
    let images: Vec<u64> = fs::read_dir(dir.path().join("generated"))
        .map(|rd| rd.filter_map(|e| e.ok()?.metadata().ok()).map(|m| m.len()).collect())
        .unwrap_or_default();
    let rows = report.lines().count().saturating_sub(1);
    let pass = codes.iter().all(|&c| c == 0) && rows > 0 && !images.is_empty() && images.iter().all(|&n| n > 0) && secs < 300.0;
    Ok((
        pass,
        format!("exit codes {codes:?}; report rows {rows}; {} non-empty images", images.iter().filter(|&&n| n > 0).count()),
    ))
}

fn main() {
    let mut lines = vec![
        run(1, "gradient correctness", true, gradients),
        run(2, "psi-integration oracle", true, prior_integration),
        run(3, "infonce-pmi stationarity", true, pmi_stationarity),
    ];
    lines.push(run(4, "metric oracles", true, metric_oracles));

    let synth = load_data(&synth_config(LossKind::Simvae, 0)).map_err(|e| e.to_string());
    let data = || synth.as_ref().map_err(|e| simvae::Error::Data(e.clone()));
    let mut simvae_runs: Option<(Vec<SynthRun>, f64)> = None;
    lines.push(run(5, "synthetic content recovery", true, || {
        let t = Instant::now();
        let sim = (0..3).map(|s| synth_run(data()?, LossKind::Simvae, s)).collect::<simvae::Result<Vec<_>>>()?;
        let secs = t.elapsed().as_secs_f64();
        let check = synth_content(&sim, secs);
        simvae_runs = Some((sim, secs));
        check
    }));
    lines.push(run(6, "synthetic style retention", true, || {
        let t = Instant::now();
        let (sim, sim_secs) = match simvae_runs.take() {
            Some(r) => r,
            None => ((0..3).map(|s| synth_run(data()?, LossKind::Simvae, s)).collect::<simvae::Result<Vec<_>>>()?, 0.0),
        };
        let nce = (0..3).map(|s| synth_run(data()?, LossKind::InfoNce, s)).collect::<simvae::Result<Vec<_>>>()?;
        synth_style(&sim, &nce, sim_secs + t.elapsed().as_secs_f64())
    }));

    match mnist_root() {
        None => {
            for (id, name) in [(7, "mnist content"), (8, "mnist ordering")] {
                let line = Line {
                    id,
                    name,
                    verdict: Verdict::Skip,
                    detail: "no MNIST IDX files (or SIMVAE_SKIP_MNIST set)".into(),
                    secs: 0.0,
                    gating: false,
                };
                report(&line);
                lines.push(line);
            }
        }
        Some(root) => {
            let sim: Vec<_> = (0..3).map(|s| mnist_run(&root, LossKind::Simvae, s)).collect();
            let vae: Vec<_> = (0..3).map(|s| mnist_run(&root, LossKind::Vae, s)).collect();
            let sim_ok: Option<Vec<(f64, f64)>> = sim.iter().map(|r| r.as_ref().ok().copied()).collect();
            let vae_ok: Option<Vec<(f64, f64)>> = vae.iter().map(|r| r.as_ref().ok().copied()).collect();
            let first_err = sim.iter().chain(&vae).find_map(|r| r.as_ref().err().map(|e| e.to_string()));
            let c7 = run(7, "mnist content", false, || match (&sim_ok, &first_err) {
                (Some(s), _) => {
                    let ok = s.iter().filter(|(k, t)| *k >= 0.92 && *t <= 3600.0).count();
                    let per: Vec<String> = s.iter().map(|(k, t)| format!("{:.2}% in {:.0}s", 100.0 * k, t)).collect();
                    Ok((ok == 3, format!("simvae knn >= 92% on {ok}/3 seeds [{}]", per.join("; "))))
                }
                (None, e) => Err(simvae::Error::Data(e.clone().unwrap_or_default())),
            });
            lines.push(c7);
            let c8 = run(8, "mnist ordering", false, || match (&sim_ok, &vae_ok, &first_err) {
                (Some(s), Some(v), _) => {
                    let ok = s.iter().zip(v).filter(|(a, b)| a.0 >= b.0 - 0.005).count();
                    let per: Vec<String> =
                        s.iter().zip(v).map(|(a, b)| format!("{:.2}% vs {:.2}%", 100.0 * a.0, 100.0 * b.0)).collect();
                    Ok((ok == 3, format!("simvae >= vae - 0.5pt on {ok}/3 seeds [{}]", per.join("; "))))
                }
                (_, _, e) => Err(simvae::Error::Data(e.clone().unwrap_or_default())),
            });
            lines.push(c8);
        }
    }

    lines.push(run(9, "reproducibility", true, reproducibility));
    lines.push(run(10, "end-to-end cli", true, cli_pipeline));

    let passed = lines.iter().filter(|l| l.verdict == Verdict::Pass).count();
    let gating_failures: Vec<usize> = lines
        .iter()
        .filter(|l| l.gating && l.verdict != Verdict::Pass)
        .map(|l| l.id)
        .collect();
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "acceptance: {passed}/{} criteria pass", lines.len());
    if !gating_failures.is_empty() {
        let _ = writeln!(out, "acceptance: failing criteria {gating_failures:?}");
        drop(out);
        std::process::exit(1);
    }
}
