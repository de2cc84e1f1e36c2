//! The portable controller bundle and its JSON file format.
//!
//! Arrays are stored either as plain number lists (`f32`, `f64`) or as
//! base64-encoded little-endian half floats (`f16`). Scalar hyperparameters
//! and biases of the probes are always plain numbers. Standardizer statistics
//! use the population convention.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use half::f16;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::decide::check_tau;
use crate::error::{Error, Result};
use crate::probe::{Probe, Router};
use crate::scalar::{all_finite, norm, Scalar};
use crate::store::Standardizer;

pub const BUNDLE_VERSION: &str = "asa/1";
/// Allowed deviation of a stored steering vector from unit norm.
pub const UNIT_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F16,
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn as_str(self) -> &'static str {
        match self {
            Precision::F16 => "f16",
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Precision {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f16" => Ok(Precision::F16),
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(Error::InvalidParameter(format!("unknown precision {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssetBundle<T> {
    pub dim: usize,
    pub layer: u32,
    pub alpha: T,
    pub beta: T,
    pub tau: T,
    pub domain_order: Vec<String>,
    pub v_global: Vec<T>,
    pub v_domain: BTreeMap<String, Vec<T>>,
    pub router: Router<T>,
    pub probes: BTreeMap<String, Probe<T>>,
    pub standardizer: Standardizer<T>,
    /// Encoding used when the bundle is written to disk.
    pub precision: Precision,
}

impl<T: Scalar> AssetBundle<T> {
    pub fn validate(&self) -> Result<()> {
        let d = self.dim;
        let bad = |msg: String| Err(Error::Invariant(msg));
        if d == 0 {
            return bad("bundle dim is 0".into());
        }
        if !(self.alpha >= T::zero()) || !(self.beta >= T::zero()) {
            return bad(format!("alpha {} and beta {} must be >= 0", self.alpha, self.beta));
        }
        check_tau(self.tau).map_err(|e| Error::Invariant(e.to_string()))?;
        if self.domain_order.is_empty() {
            return bad("bundle has no domains".into());
        }
        let check_unit = |name: &str, v: &[T]| -> Result<()> {
            if v.len() != d {
                return bad(format!("vector {name:?} has length {}, expected {d}", v.len()));
            }
            let n = norm(v).as_f64();
            if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
                return bad(format!("vector {name:?} has norm {n}, expected 1 ± {UNIT_TOLERANCE}"));
            }
            Ok(())
        };
        check_unit("global", &self.v_global)?;
        for name in &self.domain_order {
            let v = self
                .v_domain
                .get(name)
                .ok_or_else(|| Error::Invariant(format!("no steering vector for domain {name:?}")))?;
            check_unit(name, v)?;
            let p = self
                .probes
                .get(name)
                .ok_or_else(|| Error::Invariant(format!("no probe for domain {name:?}")))?;
            if p.w.len() != d || p.domain != *name {
                return bad(format!("probe for {name:?} is malformed"));
            }
            p.validate().map_err(|e| Error::Invariant(e.to_string()))?;
        }
        if self.v_domain.len() != self.domain_order.len() || self.probes.len() != self.domain_order.len() {
            return bad("vectors or probes present for domains outside domain_order".into());
        }
        if self.router.domain_order != self.domain_order || self.router.dim() != d {
            return bad("router does not match bundle domains or dim".into());
        }
        self.router.validate().map_err(|e| Error::Invariant(e.to_string()))?;
        if self.standardizer.dim() != d {
            return bad(format!("standardizer dim {} != {d}", self.standardizer.dim()));
        }
        self.standardizer.validate().map_err(|e| Error::Invariant(e.to_string()))?;
        if !all_finite(&self.v_global) {
            return bad("non-finite global vector".into());
        }
        Ok(())
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        Ok(match self.precision {
            Precision::F16 => serde_json::to_string(&BundleFile::<Packed>::encode(self))?,
            Precision::F32 => serde_json::to_string(&BundleFile::<Vec<f32>>::encode(self))?,
            Precision::F64 => serde_json::to_string(&BundleFile::<Vec<f64>>::encode(self))?,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let header: Header = serde_json::from_str(text)
            .map_err(|e| Error::CorruptedPayload(format!("bundle header: {e}")))?;
        if header.version != BUNDLE_VERSION {
            return Err(Error::Version(header.version));
        }
        let precision: Precision = header
            .precision
            .parse()
            .map_err(|_| Error::CorruptedPayload(format!("unknown precision tag {:?}", header.precision)))?;
        let bundle = match precision {
            Precision::F16 => parse_file::<Packed>(text)?.decode(precision)?,
            Precision::F32 => parse_file::<Vec<f32>>(text)?.decode(precision)?,
            Precision::F64 => parse_file::<Vec<f64>>(text)?.decode(precision)?,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub fn save_bundle<T: Scalar>(bundle: &AssetBundle<T>, path: impl AsRef<Path>) -> Result<()> {
    bundle.save(path)
}

pub fn load_bundle<T: Scalar>(path: impl AsRef<Path>) -> Result<AssetBundle<T>> {
    AssetBundle::load(path)
}

#[derive(Deserialize)]
struct Header {
    version: String,
    precision: String,
}

fn parse_file<P: Codec>(text: &str) -> Result<BundleFile<P>> {
    serde_json::from_str(text).map_err(|e| Error::CorruptedPayload(e.to_string()))
}

/// On-disk array encoding.
trait Codec: Serialize + DeserializeOwned {
    fn encode<T: Scalar>(v: &[T]) -> Self;
    fn decode<T: Scalar>(&self, what: &str) -> Result<Vec<T>>;
}

impl Codec for Vec<f32> {
    fn encode<T: Scalar>(v: &[T]) -> Self {
        v.iter().map(|x| x.as_f32()).collect()
    }
    fn decode<T: Scalar>(&self, _: &str) -> Result<Vec<T>> {
        Ok(self.iter().map(|&x| T::of_f32(x)).collect())
    }
}

impl Codec for Vec<f64> {
    fn encode<T: Scalar>(v: &[T]) -> Self {
        v.iter().map(|x| x.as_f64()).collect()
    }
    fn decode<T: Scalar>(&self, _: &str) -> Result<Vec<T>> {
        Ok(self.iter().map(|&x| T::of(x)).collect())
    }
}

/// Base64 of little-endian IEEE half floats.
#[derive(Serialize, Deserialize)]
#[serde(transparent)]
struct Packed(String);

impl Codec for Packed {
    fn encode<T: Scalar>(v: &[T]) -> Self {
        let bytes: Vec<u8> = v
            .iter()
            .flat_map(|x| f16::from_f64(x.as_f64()).to_le_bytes())
            .collect();
        Packed(B64.encode(bytes))
    }
    fn decode<T: Scalar>(&self, what: &str) -> Result<Vec<T>> {
        let bytes = B64
            .decode(&self.0)
            .map_err(|e| Error::CorruptedPayload(format!("{what}: {e}")))?;
        if bytes.len() % 2 != 0 {
            return Err(Error::CorruptedPayload(format!("{what}: odd f16 byte count")));
        }
        Ok(bytes
            .chunks_exact(2)
            .map(|c| T::of(f16::from_le_bytes([c[0], c[1]]).to_f64()))
            .collect())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RouterFile<P> {
    rows: usize,
    cols: usize,
    /// Row-major, one row per domain in `domain_order`.
    weights: P,
    bias: P,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProbeFile<P> {
    w: P,
    b: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StandardizerFile<P> {
    convention: String,
    mu: P,
    sigma: P,
    epsilon: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleFile<P> {
    version: String,
    precision: String,
    dim: usize,
    layer: u32,
    alpha: f64,
    beta: f64,
    tau: f64,
    domain_order: Vec<String>,
    v_global: P,
    v_domain: BTreeMap<String, P>,
    router: RouterFile<P>,
    probes: BTreeMap<String, ProbeFile<P>>,
    standardizer: StandardizerFile<P>,
}

impl<P: Codec> BundleFile<P> {
    fn encode<T: Scalar>(b: &AssetBundle<T>) -> Self {
        let flat: Vec<T> = b.router.weights.iter().flatten().copied().collect();
        BundleFile {
            version: BUNDLE_VERSION.into(),
            precision: b.precision.as_str().into(),
            dim: b.dim,
            layer: b.layer,
            alpha: b.alpha.as_f64(),
            beta: b.beta.as_f64(),
            tau: b.tau.as_f64(),
            domain_order: b.domain_order.clone(),
            v_global: P::encode(&b.v_global),
            v_domain: b.v_domain.iter().map(|(k, v)| (k.clone(), P::encode(v))).collect(),
            router: RouterFile {
                rows: b.router.weights.len(),
                cols: b.dim,
                weights: P::encode(&flat),
                bias: P::encode(&b.router.bias),
            },
            probes: b
                .probes
                .iter()
                .map(|(k, p)| (k.clone(), ProbeFile { w: P::encode(&p.w), b: p.b.as_f64() }))
                .collect(),
            standardizer: StandardizerFile {
                convention: "population".into(),
                mu: P::encode(&b.standardizer.mu),
                sigma: P::encode(&b.standardizer.sigma),
                epsilon: b.standardizer.epsilon.as_f64(),
            },
        }
    }

    fn decode<T: Scalar>(self, precision: Precision) -> Result<AssetBundle<T>> {
        let d = self.dim;
        let sized = |what: &str, p: &P, len: usize| -> Result<Vec<T>> {
            let v: Vec<T> = p.decode(what)?;
            if v.len() != len {
                return Err(Error::CorruptedPayload(format!(
                    "{what}: {} values, expected {len}",
                    v.len()
                )));
            }
            if !all_finite(&v) {
                return Err(Error::CorruptedPayload(format!("{what}: non-finite values")));
            }
            Ok(v)
        };
        if self.standardizer.convention != "population" {
            return Err(Error::CorruptedPayload(format!(
                "unsupported standardizer convention {:?}",
                self.standardizer.convention
            )));
        }
        let (rows, cols) = (self.router.rows, self.router.cols);
        if cols != d {
            return Err(Error::CorruptedPayload(format!("router cols {cols} != dim {d}")));
        }
        let flat = sized("router.weights", &self.router.weights, rows * cols)?;
        let weights = flat.chunks(cols.max(1)).map(<[T]>::to_vec).collect();
        let router = Router {
            weights,
            bias: sized("router.bias", &self.router.bias, rows)?,
            domain_order: self.domain_order.clone(),
        };
        let mut v_domain = BTreeMap::new();
        for (k, v) in &self.v_domain {
            v_domain.insert(k.clone(), sized(&format!("v_domain.{k}"), v, d)?);
        }
        let mut probes = BTreeMap::new();
        for (k, p) in &self.probes {
            let w = sized(&format!("probes.{k}.w"), &p.w, d)?;
            probes.insert(k.clone(), Probe { w, b: T::of(p.b), domain: k.clone() });
        }
        Ok(AssetBundle {
            dim: d,
            layer: self.layer,
            alpha: T::of(self.alpha),
            beta: T::of(self.beta),
            tau: T::of(self.tau),
            domain_order: self.domain_order,
            v_global: sized("v_global", &self.v_global, d)?,
            v_domain,
            router,
            probes,
            standardizer: Standardizer {
                mu: sized("standardizer.mu", &self.standardizer.mu, d)?,
                sigma: sized("standardizer.sigma", &self.standardizer.sigma, d)?,
                epsilon: T::of(self.standardizer.epsilon),
            },
            precision,
        })
    }
}
