use nalgebra::{DMatrix, DVector};

use super::RepresentationTable;
use crate::error::{Error, Result};

/// Closed-form ridge fit with an unpenalised intercept.
///
/// Returns `(weights, intercept)`. `lambda = 0` with a singular Gram matrix
/// is a numeric error.
pub fn ridge_fit(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<(DVector<f64>, f64)> {
    if !(lambda >= 0.0) {
        return Err(Error::Precondition(format!("ridge penalty must be >= 0, got {lambda}")));
    }
    let (n, d) = x.shape();
    if n == 0 || y.len() != n {
        return Err(Error::Dimension(format!("ridge: {n} rows, {} targets", y.len())));
    }
    let xm = DVector::from_iterator(d, x.column_iter().map(|c| c.mean()));
    let ym = y.mean();
    let mut xc = x.clone();
    for (mut col, m) in xc.column_iter_mut().zip(xm.iter()) {
        col.add_scalar_mut(-m);
    }
    let yc = y.add_scalar(-ym);
    let mut gram = xc.transpose() * &xc;
    for i in 0..d {
        gram[(i, i)] += lambda;
    }
    let rhs = xc.transpose() * yc;
    let w = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => {
            return Err(Error::Numeric(format!(
                "ridge Gram matrix is singular at lambda = {lambda}"
            )))
        }
    };
    // Cholesky can succeed on numerically singular matrices; reject those too.
    let diag = gram.diagonal();
    let scale = diag.iter().copied().fold(0.0, f64::max);
    let ev = gram.symmetric_eigenvalues();
    let min_ev = ev.iter().copied().fold(f64::INFINITY, f64::min);
    if lambda == 0.0 && min_ev <= scale * 1e-12 {
        return Err(Error::Numeric("ridge Gram matrix is singular at lambda = 0".into()));
    }
    let b = ym - w.dot(&xm);
    Ok((w, b))
}

/// `1 − SS_res / SS_tot` on held-out targets; a constant target scores 0.
pub fn r_squared(y: &[f64], pred: &[f64]) -> f64 {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    let tot: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
    let res: f64 = y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum();
    if tot == 0.0 {
        0.0
    } else {
        1.0 - res / tot
    }
}

fn matrix(t: &RepresentationTable, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), t.dim(), |r, c| t.z.at(idx[r], c))
}

/// Held-out R² of a ridge regression from `Z` to each style variable.
///
/// Rows with `i % 5 != 4` fit, the rest score.
pub fn style_probe(table: &RepresentationTable, lambda: f64) -> Result<Vec<(String, f64)>> {
    let (names, s) = table
        .style
        .as_ref()
        .ok_or_else(|| Error::Data("representation table has no style variables".into()))?;
    let (tr, te): (Vec<usize>, Vec<usize>) = (0..table.len()).partition(|i| i % 5 != 4);
    if tr.is_empty() || te.is_empty() {
        return Err(Error::Data(format!("style probe needs at least 5 rows, got {}", table.len())));
    }
    let xtr = matrix(table, &tr);
    let xte = matrix(table, &te);
    names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let ytr = DVector::from_iterator(tr.len(), tr.iter().map(|&i| s.at(i, k)));
            let (w, b) = ridge_fit(&xtr, &ytr, lambda)?;
            let pred: Vec<f64> = (&xte * &w).iter().map(|v| v + b).collect();
            let yte: Vec<f64> = te.iter().map(|&i| s.at(i, k)).collect();
            Ok((name.clone(), r_squared(&yte, &pred)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Rng, Tensor};

    fn table(n: usize, d: usize, seed: u64, style: impl Fn(&[f64], &mut Rng) -> f64) -> RepresentationTable {
        let mut rng = Rng::new(seed);
        let z: Vec<f64> = (0..n * d).map(|_| rng.normal()).collect();
        let s: Vec<f64> = (0..n).map(|i| style(&z[i * d..(i + 1) * d], &mut rng)).collect();
        RepresentationTable::new(Tensor::new(vec![n, d], z).unwrap(), vec![0; n])
            .unwrap()
            .with_style(vec!["s".into()], Tensor::new(vec![n, 1], s).unwrap())
            .unwrap()
    }

    #[test]
    fn realizable_target() {
        let t = table(200, 3, 1, |z, _| 2.0 * z[0] - 0.5 * z[2] + 3.0);
        let r = style_probe(&t, 1e-12).unwrap();
        assert!((r[0].1 - 1.0).abs() < 1e-6, "{r:?}");
        assert_eq!(r, style_probe(&t, 1e-12).unwrap());
    }

    #[test]
    fn independent_noise() {
        let t = table(2000, 3, 2, |_, rng| rng.normal());
        let r = style_probe(&t, 1.0).unwrap();
        assert!(r[0].1 <= 0.05, "{r:?}");
    }

    #[test]
    fn invariant_to_target_scale() {
        let a = table(300, 2, 3, |z, rng| z[0] + 0.5 * rng.normal());
        let mut b = a.clone();
        if let Some((_, s)) = &mut b.style {
            s.data_mut().iter_mut().for_each(|v| *v = 7.0 * *v - 2.0);
        }
        let (ra, rb) = (style_probe(&a, 0.0).unwrap(), style_probe(&b, 0.0).unwrap());
        assert!((ra[0].1 - rb[0].1).abs() < 1e-9);
    }

    #[test]
    fn singular_without_ridge() {
        // Duplicate column.
        let n = 50;
        let mut rng = Rng::new(4);
        let z: Vec<f64> = (0..n).flat_map(|_| {
            let v = rng.normal();
            [v, v]
        }).collect();
        let t = RepresentationTable::new(Tensor::new(vec![n, 2], z).unwrap(), vec![0; n])
            .unwrap()
            .with_style(vec!["s".into()], Tensor::new(vec![n, 1], vec![1.0; n]).unwrap())
            .unwrap();
        assert!(matches!(style_probe(&t, 0.0), Err(Error::Numeric(_))));
        assert!(style_probe(&t, 0.1).is_ok());
    }
}
