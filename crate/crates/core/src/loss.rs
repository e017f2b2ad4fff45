use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-sample loss with its target.
#[derive(Debug, Clone, PartialEq)]
pub enum Loss<'a> {
    /// `||f - y||^2`
    Squared(&'a [f64]),
    /// `-f_y + log sum_j exp(f_j)` for a 0-based class label.
    Logistic(usize),
}

/// Loss family selector used in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Squared,
    Logistic,
}

/// Loss value and its gradient with respect to the network output.
pub fn loss_and_grad(output: &[f64], loss: &Loss<'_>) -> Result<(f64, Vec<f64>)> {
    if let Some(i) = output.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("output component {i}")));
    }
    match *loss {
        Loss::Squared(y) => {
            if y.len() != output.len() {
                return Err(Error::dim("squared-loss target", output.len(), y.len()));
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("squared-loss target".into()));
            }
            let mut value = 0.0;
            let grad = output
                .iter()
                .zip(y)
                .map(|(f, t)| {
                    let r = f - t;
                    value += r * r;
                    2.0 * r
                })
                .collect();
            Ok((value, grad))
        }
        Loss::Logistic(label) => {
            if output.len() < 2 {
                return Err(Error::InvalidArgument("logistic loss needs K >= 2".into()));
            }
            if label >= output.len() {
                return Err(Error::InvalidArgument(format!(
                    "label {label} out of range for K = {}",
                    output.len()
                )));
            }
            let max = output.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = output.iter().map(|v| (v - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            let value = -output[label] + max + z.ln();
            let grad = exps
                .iter()
                .enumerate()
                .map(|(j, e)| e / z - if j == label { 1.0 } else { 0.0 })
                .collect();
            Ok((value, grad))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn squared_at_target_is_zero() {
        let (v, g) = loss_and_grad(&[1.5, -2.0], &Loss::Squared(&[1.5, -2.0])).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn squared_direct_value() {
        let (v, g) = loss_and_grad(&[1.0, 2.0], &Loss::Squared(&[0.0, 0.0])).unwrap();
        assert_eq!(v, 5.0);
        assert_eq!(g, vec![2.0, 4.0]);
    }

    #[test]
    fn logistic_symmetric_logits() {
        let (v, g) = loss_and_grad(&[0.0, 0.0], &Loss::Logistic(1)).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
        assert_eq!(g, vec![0.5, -0.5]);
    }

    #[test]
    fn logistic_is_stable_for_large_logits() {
        let (v, g) = loss_and_grad(&[1000.0, 0.0], &Loss::Logistic(0)).unwrap();
        assert!(v.abs() < 1e-12);
        assert!(g.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn logistic_gradient_matches_finite_differences() {
        let f = [0.3, -1.2, 2.0];
        let (_, g) = loss_and_grad(&f, &Loss::Logistic(2)).unwrap();
        for i in 0..3 {
            let h = 1e-6;
            let mut p = f;
            let mut m = f;
            p[i] += h;
            m[i] -= h;
            let fd = (loss_and_grad(&p, &Loss::Logistic(2)).unwrap().0
                - loss_and_grad(&m, &Loss::Logistic(2)).unwrap().0)
                / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn logistic_errors() {
        assert!(loss_and_grad(&[0.0, 0.0], &Loss::Logistic(2)).is_err());
        assert!(loss_and_grad(&[0.0], &Loss::Logistic(0)).is_err());
    }
}
