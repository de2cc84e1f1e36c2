//! Mean-difference intent directions, their control counterparts and the
//! cross-domain interference diagnostic.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::scalar::{dot, norm, Scalar};
use crate::store::{check_access, ActivationRecord, Purpose};

/// Directions with a smaller raw norm are rejected as degenerate.
pub const DEGENERATE_NORM: f64 = 1e-8;

pub const GLOBAL: &str = "global";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scope {
    Global,
    Domain(String),
}

impl Scope {
    pub fn name(&self) -> &str {
        match self {
            Scope::Global => GLOBAL,
            Scope::Domain(d) => d,
        }
    }

    fn admits(&self, r: &ActivationRecord) -> bool {
        match self {
            Scope::Global => true,
            Scope::Domain(d) => &r.domain == d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringVector<T> {
    pub name: String,
    pub raw: Vec<T>,
    pub unit: Vec<T>,
    /// (positives, negatives) the means were taken over.
    pub source_counts: (usize, usize),
}

impl<T: Scalar> SteeringVector<T> {
    pub fn dim(&self) -> usize {
        self.unit.len()
    }
}

/// `mean(h | label = 1) - mean(h | label = 0)` over calibration records in
/// `scope`, together with its unit-norm direction.
pub fn build_vector<T: Scalar>(
    records: &[&ActivationRecord],
    scope: &Scope,
) -> Result<SteeringVector<T>> {
    check_access(Purpose::SteeringVectors, records.iter().copied())?;
    let Some(first) = records.first() else {
        return Err(Error::EmptyInput("no calibration records".into()));
    };
    let dim = first.dim();
    let mut pos = vec![0.0_f64; dim];
    let mut neg = vec![0.0_f64; dim];
    let (mut n_pos, mut n_neg) = (0usize, 0usize);
    for r in records.iter().filter(|r| scope.admits(r)) {
        check_dim(dim, r.dim(), &format!("calibration record {:?}", r.id))?;
        let acc = if r.is_positive() {
            n_pos += 1;
            &mut pos
        } else {
            n_neg += 1;
            &mut neg
        };
        for (a, &v) in acc.iter_mut().zip(&r.hidden) {
            *a += f64::from(v);
        }
    }
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass(format!(
            "calibration scope {:?} ({n_pos} positive, {n_neg} negative)",
            scope.name()
        )));
    }
    let raw: Vec<T> = pos
        .iter()
        .zip(&neg)
        .map(|(p, q)| T::of(p / n_pos as f64 - q / n_neg as f64))
        .collect();
    let len = norm(&raw);
    if !(len.as_f64() >= DEGENERATE_NORM) {
        return Err(Error::DegenerateDirection {
            scope: scope.name().to_string(),
            norm: len.as_f64(),
        });
    }
    let unit = raw.iter().map(|&v| v / len).collect();
    Ok(SteeringVector {
        name: scope.name().to_string(),
        raw,
        unit,
        source_counts: (n_pos, n_neg),
    })
}

/// Pairwise cosines between domain directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceMatrix<T> {
    pub domains: Vec<String>,
    pub cells: Vec<Vec<T>>,
}

impl<T: Scalar> InterferenceMatrix<T> {
    pub fn get(&self, a: &str, b: &str) -> Option<T> {
        let i = self.domains.iter().position(|d| d == a)?;
        let j = self.domains.iter().position(|d| d == b)?;
        Some(self.cells[i][j])
    }
}

pub fn interference_matrix<T: Scalar>(vectors: &[SteeringVector<T>]) -> Result<InterferenceMatrix<T>> {
    if vectors.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "interference matrix needs at least 2 domain vectors, got {}",
            vectors.len()
        )));
    }
    let dim = vectors[0].dim();
    for v in vectors {
        check_dim(dim, v.dim(), &format!("vector {:?}", v.name))?;
    }
    let n = vectors.len();
    let mut cells = vec![vec![T::one(); n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let c = dot(&vectors[i].unit, &vectors[j].unit).max(-T::one()).min(T::one());
            cells[i][j] = c;
            cells[j][i] = c;
        }
    }
    Ok(InterferenceMatrix {
        domains: vectors.iter().map(|v| v.name.clone()).collect(),
        cells,
    })
}

/// An isotropic direction from the seeded generator, scaled to `norm_target`.
pub fn random_control<T: Scalar>(norm_target: T, dim: usize, seed: u64) -> Result<Vec<T>> {
    if !(norm_target > T::zero()) || !norm_target.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "random control norm must be positive, got {norm_target}"
        )));
    }
    if dim == 0 {
        return Err(Error::InvalidParameter("random control dim must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let draw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let len = draw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if len > 1e-12 {
            let scale = norm_target.as_f64() / len;
            return Ok(draw.into_iter().map(|v| T::of(v * scale)).collect());
        }
    }
}

/// Fixed derangement used by the mismatch ablation: each domain maps to the
/// next one in `domains`, the last wrapping to the first.
pub fn mismatch_map(domains: &[String]) -> Result<BTreeMap<String, String>> {
    if domains.len() < 2 {
        return Err(Error::InvalidParameter(
            "mismatch mapping needs at least 2 domains".into(),
        ));
    }
    Ok(domains
        .iter()
        .enumerate()
        .map(|(i, d)| (d.clone(), domains[(i + 1) % domains.len()].clone()))
        .collect())
}

/// Standalone export of a set of steering vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorSet {
    pub dim: usize,
    pub layer: u32,
    pub vectors: Vec<ExportedVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportedVector {
    pub name: String,
    pub dim: usize,
    pub unit: Vec<f64>,
    pub source_counts: (usize, usize),
}

impl VectorSet {
    pub fn from_vectors<T: Scalar>(layer: u32, vectors: &[SteeringVector<T>]) -> Self {
        Self {
            dim: vectors.first().map_or(0, |v| v.dim()),
            layer,
            vectors: vectors
                .iter()
                .map(|v| ExportedVector {
                    name: v.name.clone(),
                    dim: v.dim(),
                    unit: v.unit.iter().map(|x| x.as_f64()).collect(),
                    source_counts: v.source_counts,
                })
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&ExportedVector> {
        self.vectors.iter().find(|v| v.name == name)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let set: Self = serde_json::from_str(&text)?;
        for v in &set.vectors {
            check_dim(set.dim, v.unit.len(), &format!("vector {:?}", v.name))?;
        }
        Ok(set)
    }
}
