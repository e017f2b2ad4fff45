//! The `l_{a,b}` regularizer family and its importance-weighted form.
//!
//! For a layer matrix `W` (`m_out x m_in`, rows on the output side):
//!
//! ```text
//! R(W) = (1/m_in) sum_k ( (1/m_out) sum_j |w_{j,k}|^o1 )^o2
//! R_u(U) = (1/m_L) sum_j ||u_j||^o3
//! ```
//!
//! Under importance weights `p`, every `w_{j,k}` becomes `w_{j,k}/p_in_k`,
//! every `u_j` becomes `u_j/p_j`, and uniform averages over a layer become
//! averages weighted by `p`. The input layer always has `p = 1`.

use serde::{Deserialize, Serialize};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::net::Network;
use crate::repopulation::ImportanceWeights;

/// Exponents `(o1, o2, o3)` of `r1(w) = |w|^o1`, `r2(s) = s^o2`, `r_u(u) = ||u||^o3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub o1: f64,
    pub o2: f64,
    pub o3: f64,
}

/// Named exponent presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    /// `(1, 2, 2)`: the variance-derived regularizer.
    L12,
    /// `(2, 1, 2)`: plain weight decay.
    L21,
    /// `(0.5, 4, 2)`
    #[serde(rename = "L_half_4")]
    LHalf4,
}

impl Preset {
    pub fn exponents(self) -> Exponents {
        match self {
            Preset::L12 => Exponents {
                o1: 1.0,
                o2: 2.0,
                o3: 2.0,
            },
            Preset::L21 => Exponents {
                o1: 2.0,
                o2: 1.0,
                o3: 2.0,
            },
            Preset::LHalf4 => Exponents {
                o1: 0.5,
                o2: 4.0,
                o3: 2.0,
            },
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L12" | "l12" => Ok(Preset::L12),
            "L21" | "l21" => Ok(Preset::L21),
            "L_half_4" | "l_half_4" => Ok(Preset::LHalf4),
            other => Err(Error::InvalidArgument(format!(
                "unknown regularizer preset `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizerSpec {
    pub exponents: Exponents,
    /// `lambda^(1..L)`, one per hidden layer.
    pub lambdas: Vec<f64>,
    pub lambda_u: f64,
}

impl RegularizerSpec {
    pub fn new(exponents: Exponents, lambdas: Vec<f64>, lambda_u: f64) -> Self {
        Self {
            exponents,
            lambdas,
            lambda_u,
        }
    }

    /// Same penalty `lambda` on every hidden layer and on the top layer.
    pub fn preset(preset: Preset, depth: usize, lambda: f64) -> Self {
        Self::new(preset.exponents(), vec![lambda; depth], lambda)
    }

    pub fn validate(&self, depth: usize) -> Result<()> {
        let Exponents { o1, o2, o3 } = self.exponents;
        if !(o1 > 0.0 && o1.is_finite()) {
            return Err(Error::InvalidArgument(format!("o1 must be > 0, got {o1}")));
        }
        if !(o2 >= 1.0 && o2.is_finite()) || !(o3 >= 1.0 && o3.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "o2 and o3 must be >= 1, got {o2}, {o3}"
            )));
        }
        if self.lambdas.len() != depth {
            return Err(Error::dim("regularizer lambdas", depth, self.lambdas.len()));
        }
        if self
            .lambdas
            .iter()
            .chain(std::iter::once(&self.lambda_u))
            .any(|l| !(l.is_finite() && *l >= 0.0))
        {
            return Err(Error::InvalidArgument(
                "penalties must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Copy with every penalty multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            exponents: self.exponents,
            lambdas: self.lambdas.iter().map(|l| l * c).collect(),
            lambda_u: self.lambda_u * c,
        }
    }
}

/// `|x|^e` with exact fast paths for the common exponents.
#[inline]
pub(crate) fn pow_abs(x: f64, e: f64) -> f64 {
    let a = x.abs();
    if e == 1.0 {
        a
    } else if e == 2.0 {
        a * a
    } else if e == 0.5 {
        a.sqrt()
    } else {
        a.powf(e)
    }
}

/// `s^e` for `s >= 0`, exact for small integer exponents.
#[inline]
fn pow_pos(s: f64, e: f64) -> f64 {
    if e == 1.0 {
        s
    } else if e == 2.0 {
        s * s
    } else if e == 0.0 {
        1.0
    } else {
        s.powf(e)
    }
}

/// Layer regularizer, optionally importance weighted. `None` means `p = 1`.
fn weighted_layer_reg(
    w: &Matrix,
    o1: f64,
    o2: f64,
    p_in: Option<&[f64]>,
    p_out: Option<&[f64]>,
) -> f64 {
    let (m_out, m_in) = w.shape();
    let mut col = vec![0.0; m_in];
    for j in 0..m_out {
        let pj = p_out.map_or(1.0, |p| p[j]);
        for (k, (c, &wjk)) in col.iter_mut().zip(w.row(j)).enumerate() {
            let pk = p_in.map_or(1.0, |p| p[k]);
            *c += pow_abs(wjk / pk, o1) * pj;
        }
    }
    let mut total = 0.0;
    for (k, c) in col.iter().enumerate() {
        let pk = p_in.map_or(1.0, |p| p[k]);
        total += pow_pos(c / m_out as f64, o2) * pk;
    }
    total / m_in as f64
}

/// `(1/m_in) sum_k ((1/m_out) sum_j |w_{j,k}|^o1)^o2`.
pub fn layer_reg(w: &Matrix, o1: f64, o2: f64) -> f64 {
    weighted_layer_reg(w, o1, o2, None, None)
}

fn weighted_top_reg(u: &Matrix, o3: f64, p: Option<&[f64]>) -> f64 {
    let m = u.rows();
    let mut total = 0.0;
    for j in 0..m {
        let pj = p.map_or(1.0, |p| p[j]);
        let sq: f64 = u.row(j).iter().map(|v| (v / pj) * (v / pj)).sum();
        total += pow_abs(sq.sqrt(), o3) * pj;
    }
    total / m as f64
}

/// `(1/m) sum_j ||u_j||^o3` with the Euclidean norm.
pub fn top_reg(u: &Matrix, o3: f64) -> f64 {
    weighted_top_reg(u, o3, None)
}

/// `sum_l lambda^(l) R(W^(l)) + lambda_u R_u(U)`.
pub fn total_reg(net: &Network, spec: &RegularizerSpec) -> f64 {
    let Exponents { o1, o2, o3 } = spec.exponents;
    let mut total = 0.0;
    for (w, &lambda) in net.weights().iter().zip(&spec.lambdas) {
        if lambda != 0.0 {
            total += lambda * layer_reg(w, o1, o2);
        }
    }
    if spec.lambda_u != 0.0 {
        total += spec.lambda_u * top_reg(net.top(), o3);
    }
    total
}

/// Importance-weighted regularizer `R(p; w, u)`.
pub fn weighted_reg(net: &Network, spec: &RegularizerSpec, p: &ImportanceWeights) -> Result<f64> {
    p.validate_for(net)?;
    let Exponents { o1, o2, o3 } = spec.exponents;
    let mut total = 0.0;
    for (i, (w, &lambda)) in net.weights().iter().zip(&spec.lambdas).enumerate() {
        if lambda != 0.0 {
            let p_in = (i > 0).then(|| p.layer(i));
            total += lambda * weighted_layer_reg(w, o1, o2, p_in, Some(p.layer(i + 1)));
        }
    }
    if spec.lambda_u != 0.0 {
        total += spec.lambda_u * weighted_top_reg(net.top(), o3, Some(p.layer(net.depth())));
    }
    Ok(total)
}

/// Subgradient of `total_reg`; the subgradient of `|w|^o1` at `w = 0` is 0.
pub fn reg_grad(net: &Network, spec: &RegularizerSpec) -> (Vec<Matrix>, Matrix) {
    let Exponents { o1, o2, o3 } = spec.exponents;
    let d_weights = net
        .weights()
        .iter()
        .zip(&spec.lambdas)
        .map(|(w, &lambda)| {
            let mut g = Matrix::zeros(w.rows(), w.cols());
            if lambda != 0.0 {
                layer_reg_grad_into(w, o1, o2, lambda, &mut g);
            }
            g
        })
        .collect();
    let u = net.top();
    let mut d_top = Matrix::zeros(u.rows(), u.cols());
    if spec.lambda_u != 0.0 {
        top_reg_grad_into(u, o3, spec.lambda_u, &mut d_top);
    }
    (d_weights, d_top)
}

/// `out += lambda * dR/dW` (overwrites when `out` is zero).
pub(crate) fn layer_reg_grad_into(w: &Matrix, o1: f64, o2: f64, lambda: f64, out: &mut Matrix) {
    let (m_out, m_in) = w.shape();
    let mut col = vec![0.0; m_in];
    for j in 0..m_out {
        let row = w.row(j);
        match o1 {
            1.0 => col.iter_mut().zip(row).for_each(|(c, v)| *c += v.abs()),
            2.0 => col.iter_mut().zip(row).for_each(|(c, v)| *c += v * v),
            _ => col
                .iter_mut()
                .zip(row)
                .for_each(|(c, &v)| *c += pow_abs(v, o1)),
        }
    }
    // outer[k] = lambda (1/m_in) o2 S_k^(o2-1) (1/m_out) o1
    let outer: Vec<f64> = col
        .iter()
        .map(|c| {
            lambda * o2 * pow_pos(c / m_out as f64, o2 - 1.0) * o1 / (m_in as f64 * m_out as f64)
        })
        .collect();
    // d|w|^o1 / dw, taken as 0 at w = 0.
    let sign = |v: f64| {
        if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        }
    };
    for j in 0..m_out {
        let terms = out.row_mut(j).iter_mut().zip(w.row(j)).zip(&outer);
        match o1 {
            1.0 => terms.for_each(|((g, &v), &ok)| *g += ok * sign(v)),
            2.0 => terms.for_each(|((g, &v), &ok)| *g += ok * v),
            _ => terms
                .filter(|((_, &v), _)| v != 0.0)
                .for_each(|((g, &v), &ok)| {
                    *g += ok * v.abs().powf(o1 - 1.0) * sign(v);
                }),
        }
    }
}

pub(crate) fn top_reg_grad_into(u: &Matrix, o3: f64, lambda: f64, out: &mut Matrix) {
    let m = u.rows() as f64;
    for j in 0..u.rows() {
        let norm = u.row(j).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let c = lambda * o3 * pow_pos(norm, o3 - 2.0) / m;
        for (g, &v) in out.row_mut(j).iter_mut().zip(u.row(j)) {
            *g += c * v;
        }
    }
}

/// Gradient of `weighted_reg` with respect to each hidden layer's weights `p^(l)`.
///
/// Entry `i` of the result belongs to hidden layer `i + 1`.
pub fn weighted_reg_grad_p(
    net: &Network,
    spec: &RegularizerSpec,
    p: &ImportanceWeights,
) -> Result<Vec<Vec<f64>>> {
    p.validate_for(net)?;
    let Exponents { o1, o2, o3 } = spec.exponents;
    let depth = net.depth();
    let mut grads: Vec<Vec<f64>> = net.widths().iter().map(|&m| vec![0.0; m]).collect();

    for (i, (w, &lambda)) in net.weights().iter().zip(&spec.lambdas).enumerate() {
        if lambda == 0.0 {
            continue;
        }
        let (m_out, m_in) = w.shape();
        let p_out = p.layer(i + 1);
        let p_in: Option<&[f64]> = (i > 0).then(|| p.layer(i));
        // A_k = (1/m_out) sum_j |w_jk|^o1 p_out_j ; inner_k = A_k p_in_k^-o1
        let mut a = vec![0.0; m_in];
        for j in 0..m_out {
            for (ak, &wjk) in a.iter_mut().zip(w.row(j)) {
                *ak += pow_abs(wjk, o1) * p_out[j];
            }
        }
        let pin = |k: usize| p_in.map_or(1.0, |p| p[k]);
        let inner: Vec<f64> = a
            .iter()
            .enumerate()
            .map(|(k, ak)| ak / m_out as f64 * pin(k).powf(-o1))
            .collect();
        // d/dp_out_j = (1/m_in) sum_k o2 inner_k^(o2-1) p_in_k^(1-o1) (1/m_out) |w_jk|^o1
        let coef: Vec<f64> = inner
            .iter()
            .enumerate()
            .map(|(k, &s)| {
                o2 * pow_pos(s, o2 - 1.0) * pin(k).powf(1.0 - o1) / (m_in as f64 * m_out as f64)
            })
            .collect();
        for j in 0..m_out {
            let mut s = 0.0;
            for (&wjk, &ck) in w.row(j).iter().zip(&coef) {
                s += ck * pow_abs(wjk, o1);
            }
            grads[i][j] += lambda * s;
        }
        // d/dp_in_k = (1/m_in) inner_k^o2 (1 - o1 o2)
        if i > 0 {
            for (k, &s) in inner.iter().enumerate() {
                grads[i - 1][k] += lambda * pow_pos(s, o2) * (1.0 - o1 * o2) / m_in as f64;
            }
        }
    }

    if spec.lambda_u != 0.0 {
        let u = net.top();
        let m = u.rows() as f64;
        let p_top = p.layer(depth);
        for j in 0..u.rows() {
            let norm = u.row(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            grads[depth - 1][j] +=
                spec.lambda_u * (1.0 - o3) * pow_abs(norm, o3) * p_top[j].powf(-o3) / m;
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;

    fn w_fixture() -> Matrix {
        Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]])
    }

    #[test]
    fn layer_reg_oracle_values() {
        let l12 = Preset::L12.exponents();
        let l21 = Preset::L21.exponents();
        assert_eq!(layer_reg(&w_fixture(), l12.o1, l12.o2), 6.5);
        assert_eq!(layer_reg(&w_fixture(), l21.o1, l21.o2), 7.5);
        assert_eq!(layer_reg(&Matrix::zeros(3, 2), 0.5, 4.0), 0.0);
    }

    #[test]
    fn top_reg_oracle_values() {
        assert_eq!(
            top_reg(&Matrix::from_rows(&[[1.0, 0.0], [0.0, 2.0]]), 2.0),
            2.5
        );
        assert_eq!(top_reg(&Matrix::from_rows(&[[3.0, 4.0]]), 2.0), 25.0);
        assert_eq!(top_reg(&Matrix::zeros(4, 3), 2.0), 0.0);
    }

    #[test]
    fn presets_map_to_tuples() {
        assert_eq!(
            Preset::L12.exponents(),
            Exponents {
                o1: 1.0,
                o2: 2.0,
                o3: 2.0
            }
        );
        assert_eq!(
            Preset::L21.exponents(),
            Exponents {
                o1: 2.0,
                o2: 1.0,
                o3: 2.0
            }
        );
        assert_eq!(
            Preset::LHalf4.exponents(),
            Exponents {
                o1: 0.5,
                o2: 4.0,
                o3: 2.0
            }
        );
        assert_eq!("L_half_4".parse::<Preset>().unwrap(), Preset::LHalf4);
    }

    #[test]
    fn total_reg_sums_terms() {
        let u = Matrix::from_rows(&[[1.0, 0.0], [0.0, 2.0]]);
        let net = Network::from_parts(2, Activation::Tanh, vec![w_fixture()], u).unwrap();
        let spec = RegularizerSpec::preset(Preset::L12, 1, 1.0);
        assert_eq!(total_reg(&net, &spec), 6.5 + 2.5);
        assert_eq!(total_reg(&net, &spec.scaled(0.0)), 0.0);
        assert!((total_reg(&net, &spec.scaled(3.0)) - 3.0 * 9.0).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_l21_have_zero_gradient() {
        let net = Network::from_parts(
            2,
            Activation::Tanh,
            vec![Matrix::zeros(3, 2)],
            Matrix::zeros(3, 1),
        )
        .unwrap();
        let (dw, du) = reg_grad(&net, &RegularizerSpec::preset(Preset::L21, 1, 1.0));
        assert_eq!(dw[0].max_abs(), 0.0);
        assert_eq!(du.max_abs(), 0.0);
    }

    #[test]
    fn zero_weights_with_sub_unit_exponent_stay_finite() {
        let w = Matrix::from_rows(&[[0.0, 1.0], [2.0, 0.0]]);
        let net = Network::from_parts(2, Activation::Tanh, vec![w], Matrix::zeros(2, 1)).unwrap();
        let (dw, _) = reg_grad(&net, &RegularizerSpec::preset(Preset::LHalf4, 1, 1.0));
        assert!(dw[0].is_finite());
        assert_eq!(dw[0].get(0, 0), 0.0);
    }

    #[test]
    fn top_gradient_is_two_u() {
        let net = Network::from_parts(
            1,
            Activation::Tanh,
            vec![Matrix::from_rows(&[[1.0]])],
            Matrix::from_rows(&[[3.0, 4.0]]),
        )
        .unwrap();
        let mut spec = RegularizerSpec::preset(Preset::L12, 1, 0.0);
        spec.lambda_u = 1.0;
        let (_, du) = reg_grad(&net, &spec);
        assert_eq!(du.row(0), &[6.0, 8.0]);
    }

    #[test]
    fn validate_rejects_bad_specs() {
        let mut s = RegularizerSpec::preset(Preset::L12, 2, 1.0);
        assert!(s.validate(2).is_ok());
        assert!(s.validate(3).is_err());
        s.lambdas[0] = -1.0;
        assert!(s.validate(2).is_err());
        let bad = RegularizerSpec::new(
            Exponents {
                o1: 1.0,
                o2: 0.5,
                o3: 2.0,
            },
            vec![1.0],
            1.0,
        );
        assert!(bad.validate(1).is_err());
    }
}
