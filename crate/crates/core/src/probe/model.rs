use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::scalar::{dot, sigmoid, Scalar};
use crate::store::Standardizer;

/// A hidden state as extracted from the model, before standardization.
#[derive(Debug, Clone, Copy)]
pub struct Raw<'a, T>(pub &'a [T]);

/// A hidden state mapped through the training-split [`Standardizer`].
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized<T>(Vec<T>);

impl<T: Scalar> Standardized<T> {
    pub fn new(standardizer: &Standardizer<T>, raw: Raw<'_, T>) -> Result<Self> {
        standardizer.standardize(raw.0).map(Self)
    }

    /// Wraps a vector the caller has already standardized.
    pub fn assume(v: Vec<T>) -> Self {
        Self(v)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }
}

/// Multinomial linear domain router over standardized states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Router<T> {
    pub weights: Vec<Vec<T>>,
    pub bias: Vec<T>,
    pub domain_order: Vec<String>,
}

impl<T: Scalar> Router<T> {
    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.domain_order.len() || self.bias.len() != self.domain_order.len() {
            return Err(Error::Invariant(format!(
                "router has {} rows and {} biases for {} domains",
                self.weights.len(),
                self.bias.len(),
                self.domain_order.len()
            )));
        }
        let d = self.dim();
        for row in &self.weights {
            check_dim(d, row.len(), "router row")?;
        }
        if self.weights.iter().flatten().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::Invariant("router parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn logits(&self, h: &Standardized<T>) -> Result<Vec<T>> {
        check_dim(self.dim(), h.0.len(), "route")?;
        Ok(self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(w, &b)| dot(w, &h.0) + b)
            .collect())
    }

    /// Index of the arg-max class; ties go to the lowest index. Softmax is
    /// monotone, so the arg-max over logits equals the arg-max over
    /// probabilities.
    pub fn route_index(&self, h: &Standardized<T>) -> Result<usize> {
        let z = self.logits(h)?;
        Ok((1..z.len()).fold(0, |best, k| if z[k] > z[best] { k } else { best }))
    }

    pub fn route(&self, h: &Standardized<T>) -> Result<&str> {
        Ok(&self.domain_order[self.route_index(h)?])
    }

    pub fn probabilities(&self, h: &Standardized<T>) -> Result<Vec<T>> {
        let mut z = self.logits(h)?;
        let max = z.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let mut sum = T::zero();
        for v in &mut z {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        Ok(z.into_iter().map(|v| v / sum).collect())
    }
}

/// Binary linear intent probe over raw states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe<T> {
    pub w: Vec<T>,
    pub b: T,
    pub domain: String,
}

impl<T: Scalar> Probe<T> {
    pub fn margin(&self, h: Raw<'_, T>) -> Result<T> {
        check_dim(self.w.len(), h.0.len(), "probe")?;
        Ok(dot(&self.w, h.0) + self.b)
    }

    pub fn probability(&self, h: Raw<'_, T>) -> Result<T> {
        self.margin(h).map(sigmoid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.w.iter().chain(std::iter::once(&self.b)).any(|v| !v.is_finite()) {
            return Err(Error::Invariant(format!("probe {:?} has non-finite weights", self.domain)));
        }
        Ok(())
    }
}
