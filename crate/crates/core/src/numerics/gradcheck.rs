use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Compares reverse-mode gradients with central differences.
///
/// `f` builds a scalar loss on a fresh graph from the parameter leaves it is
/// handed. Returns the maximum over all coordinates of
/// `|analytic - numeric| / (|analytic| + |numeric| + tau)`, where
/// `tau = 1e4 * f64::EPSILON * max(1, |L|) / h` is the resolution of the
/// central difference at loss value `L`. Without it, coordinates whose true
/// gradient is zero would score ~1 from round-off alone.
pub fn grad_check<F>(f: F, params: &[Tensor<f64>], h: f64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let analytic = analytic_grads(&f, params)?;
    let center = eval(&f, params)?;
    let tau = 1e4 * f64::EPSILON * center.abs().max(1.0) / h + 1e-12;
    let mut worst: f64 = 0.0;
    let mut probe: Vec<Tensor<f64>> = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        for k in 0..p.numel() {
            let orig = p.data()[k];
            probe[pi].data_mut()[k] = orig + h;
            let up = eval(&f, &probe)?;
            probe[pi].data_mut()[k] = orig - h;
            let down = eval(&f, &probe)?;
            probe[pi].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[pi].data()[k];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs() + tau);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

fn analytic_grads<F>(f: &F, params: &[Tensor<f64>]) -> Result<Vec<Tensor<f64>>>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let loss = f(&mut g, &vars)?;
    check_finite(g.scalar_value(loss)?)?;
    g.backward(loss)?;
    Ok(vars.iter().map(|&v| g.grad_or_zeros(v)).collect())
}

fn eval<F>(f: &F, params: &[Tensor<f64>]) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let loss = f(&mut g, &vars)?;
    check_finite(g.scalar_value(loss)?)
}

fn check_finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!("objective evaluated to {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_at_one() {
        let x = Tensor::from_f64(&[1], &[1.0]).unwrap();
        let err = grad_check(
            |g, p| {
                let s = g.square(p[0])?;
                g.sum_all(s)
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn linear_is_exact_to_round_off() {
        let x = Tensor::from_f64(&[3], &[0.3, -1.2, 2.0]).unwrap();
        let w = Tensor::from_f64(&[3], &[1.5, 2.5, -0.5]).unwrap();
        let err = grad_check(
            move |g, p| {
                let wc = g.constant(w.clone());
                let m = g.mul(p[0], wc)?;
                g.sum_all(m)
            },
            &[x],
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn a_missing_gradient_path_is_caught() {
        // x * stop_grad(x): the tape sees only one factor, so the analytic
        // gradient is half the true one.
        let x = Tensor::from_f64(&[2], &[0.7, -1.3]).unwrap();
        let err = grad_check(
            |g, p| {
                let frozen = g.constant(g.value(p[0]).clone());
                let m = g.mul(p[0], frozen)?;
                g.sum_all(m)
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(err > 0.3, "{err}");
    }

    #[test]
    fn zero_gradient_coordinates_do_not_score_round_off() {
        // The loss ignores the second coordinate entirely but is large, so
        // both differences carry round-off of order eps * |L| / h.
        let x = Tensor::from_f64(&[2], &[0.37, 1.0]).unwrap();
        let err = grad_check(
            |g, p| {
                let s = g.square(p[0])?;
                let w = g.constant(Tensor::from_f64(&[2], &[300.0, 0.0])?);
                let m = g.mul(s, w)?;
                g.sum_all(m)
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn non_finite_objective_is_reported() {
        let x = Tensor::from_f64(&[1], &[800.0]).unwrap();
        let r = grad_check(
            |g, p| {
                let e = g.exp(p[0])?;
                g.sum_all(e)
            },
            &[x],
            1e-5,
        );
        assert!(matches!(r, Err(Error::Numeric(_))));
    }
}
