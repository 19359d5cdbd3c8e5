use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor, Var};

fn marginals(joint: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let c = joint.len();
    if c == 0 || joint.iter().any(|r| r.len() != c) {
        return Err(Error::Dimension("joint table must be square and non-empty".into()));
    }
    if joint.iter().flatten().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::Data("joint table has negative or non-finite cells".into()));
    }
    let total: f64 = joint.iter().flatten().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Data(format!("joint table sums to {total}, not 1")));
    }
    let pa: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let pb: Vec<f64> = (0..c).map(|b| joint.iter().map(|r| r[b]).sum()).collect();
    if pa.iter().chain(&pb).any(|&p| p <= 0.0) {
        return Err(Error::Data("joint table has an empty marginal".into()));
    }
    Ok((pa, pb))
}

/// Pointwise mutual information `log p(a,b) − log p(a) − log p(b)`;
/// zero cells map to `−∞`.
pub fn pmi_table(joint: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let (pa, pb) = marginals(joint)?;
    Ok(joint
        .iter()
        .enumerate()
        .map(|(a, row)| {
            row.iter()
                .enumerate()
                .map(|(b, &p)| {
                    if p == 0.0 {
                        f64::NEG_INFINITY
                    } else {
                        p.ln() - pa[a].ln() - pb[b].ln()
                    }
                })
                .collect()
        })
        .collect())
}

/// InfoNCE in the limit of many negatives, with the similarity as a free
/// `C×C` table `S`:
///
/// `−Σ_{a,b} p(a,b) [S(a,b) − log Σ_b' p(b') exp S(a,b')]`.
///
/// `sim` must be a `[C, C]` node; the joint enters as constants.
pub fn infonce_population_loss(g: &mut Graph<f64>, joint: &[Vec<f64>], sim: Var) -> Result<Var> {
    let (_, pb) = marginals(joint)?;
    let c = joint.len();
    if g.shape(sim) != [c, c] {
        return Err(Error::Dimension(format!(
            "similarity table {:?} does not match a {c}×{c} joint",
            g.shape(sim)
        )));
    }
    let log_pb = g.constant(Tensor::vector(pb.iter().map(|p| p.ln()).collect()));
    let shifted = g.add(sim, log_pb)?;
    let lsm = g.log_softmax(shifted)?;
    // S − lse(S + log p(b')) = log_softmax(S + log p(b)) − log p(b)
    let inner = g.sub(lsm, log_pb)?;
    let weights = g.constant(Tensor::from_rows(joint)?);
    let weighted = g.mul(inner, weights)?;
    let s = g.sum_all(weighted)?;
    g.neg(s)
}
