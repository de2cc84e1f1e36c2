use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

/// Floor applied to per-dimension standard deviations.
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Per-dimension centering and scaling fitted on the training partition.
///
/// Standard deviations use the population convention (divide by N).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer<T> {
    pub mu: Vec<T>,
    pub sigma: Vec<T>,
    pub epsilon: T,
}

impl<T: Scalar> Standardizer<T> {
    pub fn fit<V: AsRef<[T]>>(rows: &[V]) -> Result<Self> {
        Self::fit_with_epsilon(rows, T::of(DEFAULT_EPSILON))
    }

    pub fn fit_with_epsilon<V: AsRef<[T]>>(rows: &[V], epsilon: T) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::EmptyInput(format!(
                "standardizer needs at least 2 rows, got {}",
                rows.len()
            )));
        }
        if !(epsilon > T::zero()) {
            return Err(Error::InvalidParameter("epsilon must be positive".into()));
        }
        let dim = rows[0].as_ref().len();
        // Accumulate in f64 so the fit is insensitive to row order at f32.
        let mut sum = vec![0.0_f64; dim];
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            check_dim(dim, row.len(), &format!("standardizer row {i}"))?;
            for (s, &v) in sum.iter_mut().zip(row) {
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("standardizer row {i}")));
                }
                *s += v.as_f64();
            }
        }
        let n = rows.len() as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let mut sq = vec![0.0_f64; dim];
        for row in rows {
            for ((acc, &v), m) in sq.iter_mut().zip(row.as_ref()).zip(&mean) {
                let d = v.as_f64() - m;
                *acc += d * d;
            }
        }
        let sigma = sq
            .iter()
            .map(|s| T::of((s / n).sqrt()).max(epsilon))
            .collect();
        Ok(Self {
            mu: mean.into_iter().map(T::of).collect(),
            sigma,
            epsilon,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn standardize(&self, h: &[T]) -> Result<Vec<T>> {
        check_dim(self.dim(), h.len(), "standardize")?;
        Ok(h.iter()
            .zip(self.mu.iter().zip(&self.sigma))
            .map(|(&x, (&m, &s))| (x - m) / s)
            .collect())
    }

    /// Inverse map `h' * sigma + mu`.
    pub fn unstandardize(&self, h: &[T]) -> Result<Vec<T>> {
        check_dim(self.dim(), h.len(), "unstandardize")?;
        Ok(h.iter()
            .zip(self.mu.iter().zip(&self.sigma))
            .map(|(&x, (&m, &s))| x * s + m)
            .collect())
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.mu.len(), self.sigma.len(), "standardizer sigma")?;
        if !(self.epsilon > T::zero()) {
            return Err(Error::Invariant("standardizer epsilon must be positive".into()));
        }
        if self.sigma.iter().any(|&s| !s.is_finite() || s <= T::zero()) {
            return Err(Error::Invariant("standardizer sigma must be positive".into()));
        }
        if self.mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::Invariant("standardizer mu must be finite".into()));
        }
        Ok(())
    }
}
