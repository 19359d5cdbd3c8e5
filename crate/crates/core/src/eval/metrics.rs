use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::{Float, Tensor};

/// Contingency counts keyed by `(a, b)` plus both marginals.
struct Contingency {
    n: f64,
    cells: Vec<f64>,
    rows: Vec<f64>,
    cols: Vec<f64>,
}

fn contingency(a: &[usize], b: &[usize]) -> Result<Contingency> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("labelings have lengths {} and {}", a.len(), b.len())));
    }
    let mut cells: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, f64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *cells.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    Ok(Contingency {
        n: a.len() as f64,
        cells: cells.into_values().collect(),
        rows: rows.into_values().collect(),
        cols: cols.into_values().collect(),
    })
}

fn entropy(counts: &[f64], n: f64) -> f64 {
    -counts.iter().map(|&c| (c / n) * (c / n).ln()).sum::<f64>()
}

/// Normalised mutual information `I(a;b) / sqrt(H(a)·H(b))` in nats.
/// A zero denominator gives 0.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = contingency(a, b)?;
    if t.n == 0.0 {
        return Ok(0.0);
    }
    let (ha, hb) = (entropy(&t.rows, t.n), entropy(&t.cols, t.n));
    let denom = (ha * hb).sqrt();
    if denom <= 0.0 {
        return Ok(0.0);
    }
    // I = H(a) + H(b) − H(a, b)
    let mi = ha + hb - entropy(&t.cells, t.n);
    Ok((mi / denom).clamp(0.0, 1.0))
}

fn pairs(c: f64) -> f64 {
    c * (c - 1.0) / 2.0
}

/// Adjusted Rand index over pair counts. When both labelings are trivial
/// (the adjustment's denominator vanishes) the result is 1.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = contingency(a, b)?;
    let index: f64 = t.cells.iter().map(|&c| pairs(c)).sum();
    let sa: f64 = t.rows.iter().map(|&c| pairs(c)).sum();
    let sb: f64 = t.cols.iter().map(|&c| pairs(c)).sum();
    let total = pairs(t.n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sa * sb / total;
    let max = 0.5 * (sa + sb);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Mean squared error over every element.
pub fn reconstruction_mse<T: Float>(x: &Tensor<T>, x_rec: &Tensor<T>) -> Result<f64> {
    if x.shape() != x_rec.shape() {
        return Err(Error::Dimension(format!(
            "reconstruction shape {:?} differs from input {:?}",
            x_rec.shape(),
            x.shape()
        )));
    }
    if x.numel() == 0 {
        return Err(Error::Precondition("MSE of an empty tensor".into()));
    }
    let s: f64 = x
        .data()
        .iter()
        .zip(x_rec.data())
        .map(|(&a, &b)| (a.as_f64() - b.as_f64()).powi(2))
        .sum();
    Ok(s / x.numel() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    /// Rand index and its expectation by enumerating every pair.
    fn ari_brute(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len();
        let (mut both, mut in_a, mut in_b, mut total) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                let sa = a[i] == a[j];
                let sb = b[i] == b[j];
                total += 1.0;
                if sa && sb {
                    both += 1.0;
                }
                if sa {
                    in_a += 1.0;
                }
                if sb {
                    in_b += 1.0;
                }
            }
        }
        if total == 0.0 {
            return 1.0;
        }
        let expected = in_a * in_b / total;
        let max = (in_a + in_b) / 2.0;
        if max == expected {
            1.0
        } else {
            (both - expected) / (max - expected)
        }
    }

    /// Mutual information from explicit joint probabilities.
    fn nmi_brute(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len() as f64;
        let ka = a.iter().max().unwrap() + 1;
        let kb = b.iter().max().unwrap() + 1;
        let mut joint = vec![vec![0.0; kb]; ka];
        for (&x, &y) in a.iter().zip(b) {
            joint[x][y] += 1.0 / n;
        }
        let pa: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
        let pb: Vec<f64> = (0..kb).map(|j| joint.iter().map(|r| r[j]).sum()).collect();
        let h = |p: &[f64]| -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>();
        let mut mi = 0.0;
        for x in 0..ka {
            for y in 0..kb {
                if joint[x][y] > 0.0 {
                    mi += joint[x][y] * (joint[x][y] / (pa[x] * pb[y])).ln();
                }
            }
        }
        let d = (h(&pa) * h(&pb)).sqrt();
        if d <= 0.0 {
            0.0
        } else {
            mi / d
        }
    }

    #[test]
    fn hand_cases() {
        assert_eq!(nmi(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert!((nmi(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap().abs() < 1e-12);
        assert_eq!(ari(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert!((ari(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap() + 0.5).abs() < 1e-12);
        assert!(nmi(&[0, 1], &[0]).is_err());
        assert!(ari(&[0, 1], &[0]).is_err());
        assert_eq!(nmi(&[0, 0, 0], &[0, 1, 2]).unwrap(), 0.0);
    }

    #[test]
    fn exhaustive_small_instances() {
        // Every pair of labelings of length 4 over 3 symbols.
        let all: Vec<Vec<usize>> = (0..81)
            .map(|mut v| {
                (0..4)
                    .map(|_| {
                        let d = v % 3;
                        v /= 3;
                        d
                    })
                    .collect()
            })
            .collect();
        for a in &all {
            for b in &all {
                assert!((nmi(a, b).unwrap() - nmi_brute(a, b)).abs() < 1e-12);
                assert!((ari(a, b).unwrap() - ari_brute(a, b)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn random_instances_and_permutation_invariance() {
        let mut rng = Rng::new(8);
        for _ in 0..100 {
            let n = 1 + rng.below(10);
            let a: Vec<usize> = (0..n).map(|_| rng.below(4)).collect();
            let b: Vec<usize> = (0..n).map(|_| rng.below(4)).collect();
            assert!((ari(&a, &b).unwrap() - ari_brute(&a, &b)).abs() < 1e-12);
            assert!((nmi(&a, &b).unwrap() - nmi_brute(&a, &b)).abs() < 1e-12);
            let perm = rng.permutation(4);
            let pa: Vec<usize> = a.iter().map(|&x| perm[x]).collect();
            assert!((nmi(&pa, &b).unwrap() - nmi(&a, &b).unwrap()).abs() < 1e-12);
            assert!((ari(&pa, &b).unwrap() - ari(&a, &b).unwrap()).abs() < 1e-12);
        }
        for _ in 0..100 {
            let n = 20 + rng.below(200);
            let a: Vec<usize> = (0..n).map(|_| rng.below(6)).collect();
            let b: Vec<usize> = (0..n).map(|_| rng.below(5)).collect();
            assert!((ari(&a, &b).unwrap() - ari_brute(&a, &b)).abs() < 1e-12);
            assert!((nmi(&a, &b).unwrap() - nmi_brute(&a, &b)).abs() < 1e-12);
        }
    }

    #[test]
    fn mse_cases() {
        let x = Tensor::new(vec![2, 2], vec![0.0, 0.5, 1.0, 0.2]).unwrap();
        assert_eq!(reconstruction_mse(&x, &x).unwrap(), 0.0);
        let y = x.map(|v| v + 0.1);
        assert!((reconstruction_mse(&x, &y).unwrap() - 0.01).abs() < 1e-12);
        assert_eq!(reconstruction_mse(&x, &y).unwrap(), reconstruction_mse(&y, &x).unwrap());
        assert!(reconstruction_mse(&x, &Tensor::zeros(&[4])).is_err());
    }
}
