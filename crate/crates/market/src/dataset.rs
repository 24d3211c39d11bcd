//! Seeded synthetic datasets and their CSV form.
//!
//! Files have a header `u1,…,uβ` and one integer row per contributor.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution as _, StandardNormal, Zipf};
use serde::{Deserialize, Serialize};
use tpdm::services::ServiceKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    Uniform,
    /// Rating `r` drawn with weight `(r + 1)^-exponent`.
    Zipf {
        exponent: f64,
    },
    /// Multivariate normal draws, rounded and clamped to `[0, θ]`.
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
    },
}

impl Distribution {
    /// Mean `θ/2`, standard deviation `θ/6` and correlation `0.5^|j−k|`.
    pub fn default_gaussian(beta: usize, theta: u64) -> Self {
        let sd = theta as f64 / 6.0;
        let cov = (0..beta)
            .map(|j| (0..beta).map(|k| sd * sd * 0.5f64.powi((j as i32 - k as i32).abs())).collect())
            .collect();
        Distribution::Gaussian { mean: vec![theta as f64 / 2.0; beta], cov }
    }

    pub fn default_for(kind: ServiceKind, beta: usize, theta: u64) -> Self {
        match kind {
            ServiceKind::Matching => Distribution::Uniform,
            ServiceKind::Fitting => Self::default_gaussian(beta, theta),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub theta: u64,
    pub rows: Vec<Vec<i64>>,
}

impl Dataset {
    pub fn beta(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record((1..=self.beta()).map(|j| format!("u{j}")))?;
        for row in &self.rows {
            w.write_record(row.iter().map(i64::to_string))?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, theta: u64) -> Result<Self, DatasetError> {
        let mut r = csv::Reader::from_reader(input);
        let beta = r.headers()?.len();
        let mut rows = Vec::new();
        for rec in r.deserialize::<Vec<i64>>() {
            let row = rec?;
            if row.len() != beta {
                return Err(DatasetError::Shape(format!(
                    "row {} has {} columns, header has {beta}",
                    rows.len() + 1,
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|&&v| v < 0 || v as u64 > theta) {
                return Err(DatasetError::Shape(format!("rating {v} outside [0, {theta}]")));
            }
            rows.push(row);
        }
        Ok(Dataset { theta, rows })
    }
}

/// `n` profiles of `β` ratings in `[0, θ]`, fully determined by `seed`.
pub fn gen_synthetic(
    n: usize,
    beta: usize,
    theta: u64,
    dist: &Distribution,
    seed: u64,
) -> Result<Dataset, DatasetError> {
    if n == 0 || beta == 0 {
        return Err(DatasetError::Shape("n and beta must be positive".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let t = theta as i64;
    let rows = match dist {
        Distribution::Uniform => (0..n).map(|_| (0..beta).map(|_| rng.gen_range(0..=t)).collect()).collect(),
        Distribution::Zipf { exponent } => {
            let z = Zipf::new(theta + 1, *exponent).map_err(|e| DatasetError::Shape(e.to_string()))?;
            (0..n).map(|_| (0..beta).map(|_| z.sample(&mut rng) as i64 - 1).collect()).collect()
        }
        Distribution::Gaussian { mean, cov } => {
            if mean.len() != beta || cov.len() != beta || cov.iter().any(|r| r.len() != beta) {
                return Err(DatasetError::Shape(format!("gaussian parameters must be {beta}-dimensional")));
            }
            let sigma = DMatrix::from_fn(beta, beta, |j, k| cov[j][k]);
            let l =
                sigma.cholesky().ok_or_else(|| DatasetError::Shape("covariance is not positive definite".into()))?.l();
            let mu = DVector::from_column_slice(mean);
            (0..n)
                .map(|_| {
                    let z = DVector::from_fn(beta, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let x = &mu + &l * z;
                    x.iter().map(|v| (v.round() as i64).clamp(0, t)).collect()
                })
                .collect()
        }
    };
    Ok(Dataset { theta, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_generation_is_byte_identical() {
        let d = Distribution::Zipf { exponent: 1.1 };
        let mut a = Vec::new();
        let mut b = Vec::new();
        gen_synthetic(200, 5, 10, &d, 3).unwrap().write_csv(&mut a).unwrap();
        gen_synthetic(200, 5, 10, &d, 3).unwrap().write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with(b"u1,u2,u3,u4,u5\n"));
        let back = Dataset::read_csv(a.as_slice(), 10).unwrap();
        assert_eq!(back, gen_synthetic(200, 5, 10, &d, 3).unwrap());
    }

    #[test]
    fn zipf_is_skewed_towards_low_ratings() {
        let data = gen_synthetic(2000, 1, 10, &Distribution::Zipf { exponent: 1.5 }, 1).unwrap();
        let zeros = data.rows.iter().filter(|r| r[0] == 0).count();
        let tens = data.rows.iter().filter(|r| r[0] == 10).count();
        assert!(zeros > 10 * tens.max(1));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(gen_synthetic(0, 2, 10, &Distribution::Uniform, 1).is_err());
        let not_pd = Distribution::Gaussian { mean: vec![5.0, 5.0], cov: vec![vec![1.0, 2.0], vec![2.0, 1.0]] };
        assert!(gen_synthetic(5, 2, 10, &not_pd, 1).is_err());
        let wrong_dim = Distribution::Gaussian { mean: vec![5.0], cov: vec![vec![1.0]] };
        assert!(gen_synthetic(5, 2, 10, &wrong_dim, 1).is_err());
        assert!(Dataset::read_csv("u1,u2\n1,2\n3\n".as_bytes(), 10).is_err());
        assert!(Dataset::read_csv("u1\n11\n".as_bytes(), 10).is_err());
    }
}
