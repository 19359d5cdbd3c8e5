use super::RepresentationTable;
use crate::error::{Error, Result};
use crate::nn::{init_params, Adam, AdamHyper, Mlp, MlpSpec, ParamSet};
use crate::numerics::{Graph, Rng, Stream, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Hidden width of the MLP probe.
    pub hidden: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            epochs: 200,
            batch_size: 128,
            hidden: 256,
            seed: 0,
        }
    }
}

/// Per-feature mean and std of the training rows; test rows reuse them.
fn standardizer(t: &RepresentationTable) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (t.len() as f64, t.dim());
    let mean: Vec<f64> = (0..d).map(|k| (0..t.len()).map(|i| t.z.at(i, k)).sum::<f64>() / n).collect();
    let std: Vec<f64> = (0..d)
        .map(|k| {
            let v = (0..t.len()).map(|i| (t.z.at(i, k) - mean[k]).powi(2)).sum::<f64>() / n;
            if v > 1e-24 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

fn features(t: &RepresentationTable, mean: &[f64], std: &[f64]) -> Tensor<f32> {
    let d = t.dim();
    let data = (0..t.len() * d)
        .map(|i| ((t.z.data()[i] - mean[i % d]) / std[i % d]) as f32)
        .collect();
    Tensor::new(vec![t.len(), d], data).expect("shape matches")
}

/// Trains `spec` with softmax cross-entropy and returns test accuracy.
fn fit_classifier(spec: MlpSpec, train: &RepresentationTable, test: &RepresentationTable, cfg: &ProbeConfig) -> Result<f64> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Data("probe needs non-empty train and test tables".into()));
    }
    if train.dim() != test.dim() {
        return Err(Error::Dimension(format!("train is {}-d, test is {}-d", train.dim(), test.dim())));
    }
    let first = train.labels[0];
    if train.labels.iter().all(|&y| y == first) {
        return Err(Error::Data("probe training set has a single class".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("probe batch_size must be >= 1".into()));
    }
    let classes = spec.output_dim();
    let (mean, std) = standardizer(train);
    let xtr = features(train, &mean, &std);
    let xte = features(test, &mean, &std);

    let mut params: ParamSet<f32> = ParamSet::new();
    init_params(&spec, "probe", &mut Rng::derive(cfg.seed, Stream::Eval, &[0x9b0e]), &mut params)?;
    let mlp = Mlp::locate(spec, "probe", &params)?;
    let mut opt = Adam::new(&params, AdamHyper::with_lr(cfg.lr));
    let n = train.len();
    for epoch in 0..cfg.epochs {
        let order = Rng::derive(cfg.seed, Stream::Eval, &[0x9b0f, epoch as u64]).permutation(n);
        for chunk in order.chunks(cfg.batch_size) {
            let x = xtr.select_rows(chunk)?;
            let mut onehot = vec![0.0f32; chunk.len() * classes];
            for (r, &i) in chunk.iter().enumerate() {
                onehot[r * classes + train.labels[i]] = 1.0;
            }
            let mut g = Graph::<f32>::new();
            let vars = params.bind(&mut g);
            let xv = g.constant(x);
            let logits = mlp.forward(&mut g, &vars, xv)?;
            let lsm = g.log_softmax(logits)?;
            let mask = g.constant(Tensor::new(vec![chunk.len(), classes], onehot)?);
            let picked = g.mul(lsm, mask)?;
            let s = g.sum_all(picked)?;
            let loss = g.scale(s, -1.0 / chunk.len() as f64)?;
            g.backward(loss)?;
            let grads: Vec<Tensor<f32>> = vars.iter().map(|&v| g.grad_or_zeros(v)).collect();
            opt.step(&mut params, &grads)?;
        }
    }
    let logits = mlp.forward_values(&params, &xte)?;
    let correct = (0..test.len())
        .filter(|&i| {
            let row = logits.row(i);
            let pred = (0..classes).fold(0, |b, c| if row[c] > row[b] { c } else { b });
            pred == test.labels[i]
        })
        .count();
    Ok(correct as f64 / test.len() as f64)
}

fn n_classes(train: &RepresentationTable, test: &RepresentationTable) -> usize {
    train.n_classes().max(test.n_classes())
}

/// Single affine layer on standardised representations.
pub fn linear_probe(train: &RepresentationTable, test: &RepresentationTable, cfg: &ProbeConfig) -> Result<f64> {
    let spec = MlpSpec::relu_trunk(vec![train.dim(), n_classes(train, test)])?;
    fit_classifier(spec, train, test, cfg)
}

/// One hidden ReLU layer of width `cfg.hidden`.
pub fn mlp_probe(train: &RepresentationTable, test: &RepresentationTable, cfg: &ProbeConfig) -> Result<f64> {
    let spec = MlpSpec::relu_trunk(vec![train.dim(), cfg.hidden, n_classes(train, test)])?;
    fit_classifier(spec, train, test, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(seed: u64, n: usize, centres: &[[f64; 2]], labels: &[usize], s: f64) -> RepresentationTable {
        let mut rng = Rng::new(seed);
        let mut z = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = i % centres.len();
            z.push(centres[c][0] + s * rng.normal());
            z.push(centres[c][1] + s * rng.normal());
            y.push(labels[c]);
        }
        RepresentationTable::new(Tensor::new(vec![n, 2], z).unwrap(), y).unwrap()
    }

    fn quick() -> ProbeConfig {
        ProbeConfig {
            lr: 1e-2,
            epochs: 40,
            ..ProbeConfig::default()
        }
    }

    #[test]
    fn separable_blobs() {
        let c = [[-2.0, 0.0], [2.0, 0.0]];
        let tr = blobs(1, 400, &c, &[0, 1], 0.5);
        let te = blobs(2, 200, &c, &[0, 1], 0.5);
        let lin = linear_probe(&tr, &te, &quick()).unwrap();
        assert!(lin >= 0.99, "{lin}");
        let mlp = mlp_probe(&tr, &te, &quick()).unwrap();
        assert!(mlp >= lin - 0.01);
        assert_eq!(lin, linear_probe(&tr, &te, &quick()).unwrap());
    }

    #[test]
    fn xor_needs_a_hidden_layer() {
        let c = [[-1.0, -1.0], [1.0, 1.0], [-1.0, 1.0], [1.0, -1.0]];
        let tr = blobs(3, 800, &c, &[0, 0, 1, 1], 0.25);
        let te = blobs(4, 400, &c, &[0, 0, 1, 1], 0.25);
        let lin = linear_probe(&tr, &te, &quick()).unwrap();
        let mlp = mlp_probe(&tr, &te, &quick()).unwrap();
        assert!(mlp >= 0.95, "mlp {mlp}");
        assert!(lin <= 0.6, "linear {lin}");
    }

    #[test]
    fn shuffled_labels_are_at_chance() {
        let c = [[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]];
        let tr = blobs(5, 800, &c, &[0, 1, 2, 3], 1.0);
        let mut rng = Rng::new(9);
        let y: Vec<usize> = (0..800).map(|_| rng.below(4)).collect();
        let tr = RepresentationTable::new(tr.z.clone(), y).unwrap();
        let te = blobs(6, 800, &c, &[0, 1, 2, 3], 1.0);
        let acc = linear_probe(&tr, &te, &quick()).unwrap();
        assert!((acc - 0.25).abs() <= 0.05, "{acc}");
    }

    #[test]
    fn single_class_is_an_error() {
        let c = [[0.0, 0.0]];
        let tr = blobs(1, 10, &c, &[0], 1.0);
        assert!(matches!(linear_probe(&tr, &tr, &quick()), Err(Error::Data(_))));
    }
}
