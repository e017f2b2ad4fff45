//! The one-dimensional synthetic regression task and its CSV form.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::{fmt_f64, read_float_csv, CsvOut};

/// `2 (2 cos^2 x - 1)^2 - 1`, which equals `cos 4x`.
pub fn target(x: f64) -> f64 {
    let c = x.cos();
    let inner = 2.0 * c * c - 1.0;
    2.0 * inner * inner - 1.0
}

/// Scalar-input regression samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Network inputs, row-major `len x d`: `x` alone, or `(x, 1)` when
    /// `bias_input` is set.
    pub fn inputs(&self, bias_input: bool) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * input_dim(bias_input));
        for &x in &self.x {
            out.extend_from_slice(&featurize(x, bias_input));
        }
        out
    }

    /// Writes `x,y` rows.
    pub fn write_csv(&self, path: &Path, force: bool) -> Result<()> {
        let mut out = CsvOut::create(path, force, &["x", "y"])?;
        for (x, y) in self.x.iter().zip(&self.y) {
            out.row(&[fmt_f64(*x), fmt_f64(*y)])?;
        }
        out.finish()
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let (header, rows) = read_float_csv(path)?;
        if header != ["x", "y"] {
            return Err(Error::InvalidArgument(format!(
                "{}: expected header x,y, found {}",
                path.display(),
                header.join(",")
            )));
        }
        let (x, y) = rows.into_iter().map(|r| (r[0], r[1])).unzip();
        Ok(Self { x, y })
    }
}

/// Network input dimension for the scalar task.
pub fn input_dim(bias_input: bool) -> usize {
    if bias_input {
        2
    } else {
        1
    }
}

/// Input vector for scalar `x`; the constant second coordinate lets the
/// bias-free network represent even functions.
pub fn featurize(x: f64, bias_input: bool) -> Vec<f64> {
    if bias_input {
        vec![x, 1.0]
    } else {
        vec![x]
    }
}

/// `n` points with `x ~ Uniform[lo, hi]` and `y = target(x)`.
pub fn gen_data(n: usize, lo: f64, hi: f64, seed: u64) -> Result<Dataset> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "need finite lo < hi, got [{lo}, {hi}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    let y = x.iter().map(|&v| target(v)).collect();
    Ok(Dataset { x, y })
}

/// `n` evenly spaced points covering `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn target_values() {
        assert_eq!(target(0.0), 1.0);
        assert!((target(FRAC_PI_4) + 1.0).abs() < 1e-15);
        assert!((target(FRAC_PI_2) - 1.0).abs() < 1e-15);
        for i in 0..50 {
            let x = -6.0 + 0.25 * i as f64;
            assert!((target(x) - (4.0 * x).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_and_in_range() {
        let a = gen_data(200, -1.0, 3.0, 9).unwrap();
        assert_eq!(a, gen_data(200, -1.0, 3.0, 9).unwrap());
        assert_ne!(a, gen_data(200, -1.0, 3.0, 10).unwrap());
        assert!(a.x.iter().all(|&x| (-1.0..3.0).contains(&x)));
        assert!(gen_data(1, 2.0, 2.0, 0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let a = gen_data(17, -6.0, 6.0, 1).unwrap();
        a.write_csv(&path, false).unwrap();
        assert_eq!(Dataset::read_csv(&path).unwrap(), a);
    }

    #[test]
    fn inputs_layout() {
        let d = Dataset {
            x: vec![0.5, -2.0],
            y: vec![0.0, 0.0],
        };
        assert_eq!(d.inputs(true), vec![0.5, 1.0, -2.0, 1.0]);
        assert_eq!(d.inputs(false), vec![0.5, -2.0]);
    }
}
