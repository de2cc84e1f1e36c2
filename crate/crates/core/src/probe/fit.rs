//! Record-level fitting: standardizer, router, per-domain probes, label
//! shuffle controls and the layer sweep.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::auc::auc;
use super::logistic::{train_binary, train_softmax, TrainConfig};
use super::model::{Probe, Raw, Router, Standardized};
use crate::error::{Error, Result};
use crate::scalar::{lift, Scalar};
use crate::store::{check_access, ActivationRecord, MultiLayerDump, Purpose, Split, Standardizer};

fn lifted<T: Scalar>(records: &[&ActivationRecord]) -> Vec<Vec<T>> {
    records.iter().map(|r| lift(&r.hidden)).collect()
}

pub fn fit_standardizer<T: Scalar>(records: &[&ActivationRecord]) -> Result<Standardizer<T>> {
    check_access(Purpose::Standardization, records.iter().copied())?;
    Standardizer::fit(&lifted::<T>(records))
}

/// Fits the domain router on standardized training states.
pub fn fit_router<T: Scalar>(
    records: &[&ActivationRecord],
    standardizer: &Standardizer<T>,
    domain_order: &[String],
    cfg: &TrainConfig,
) -> Result<Router<T>> {
    check_access(Purpose::RouterTraining, records.iter().copied())?;
    let mut x = Vec::with_capacity(records.len());
    let mut y = Vec::with_capacity(records.len());
    for r in records {
        let k = domain_order
            .iter()
            .position(|d| *d == r.domain)
            .ok_or_else(|| Error::UnknownDomain(r.domain.clone()))?;
        x.push(standardizer.standardize(&lift::<T>(&r.hidden))?);
        y.push(k);
    }
    let fit = train_softmax(&x, &y, domain_order.len(), cfg)?;
    Ok(Router {
        weights: fit.w,
        bias: fit.b,
        domain_order: domain_order.to_vec(),
    })
}

/// Fits one intent probe per domain on raw training states of that domain.
pub fn fit_probes<T: Scalar>(
    records: &[&ActivationRecord],
    domain_order: &[String],
    cfg: &TrainConfig,
) -> Result<BTreeMap<String, Probe<T>>> {
    check_access(Purpose::ProbeTraining, records.iter().copied())?;
    domain_order
        .par_iter()
        .map(|domain| {
            let subset: Vec<&ActivationRecord> =
                records.iter().copied().filter(|r| &r.domain == domain).collect();
            let probe = fit_probe(&subset, domain, cfg)?;
            Ok((domain.clone(), probe))
        })
        .collect()
}

pub fn fit_probe<T: Scalar>(
    records: &[&ActivationRecord],
    name: &str,
    cfg: &TrainConfig,
) -> Result<Probe<T>> {
    check_access(Purpose::ProbeTraining, records.iter().copied())?;
    let x = lifted::<T>(records);
    let y: Vec<u8> = records.iter().map(|r| r.label).collect();
    let fit = train_binary(&x, &y, cfg).map_err(|e| match e {
        Error::SingleClass(_) | Error::EmptyInput(_) => {
            Error::SingleClass(format!("probe training data for {name:?}"))
        }
        other => other,
    })?;
    Ok(Probe { w: fit.w, b: fit.b, domain: name.to_string() })
}

/// AUC of `probe` on `records` using its margin as the score.
pub fn probe_auc<T: Scalar>(probe: &Probe<T>, records: &[&ActivationRecord]) -> Result<f64> {
    let scores = records
        .iter()
        .map(|r| probe.margin(Raw(&lift::<T>(&r.hidden))).map(Scalar::as_f64))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<u8> = records.iter().map(|r| r.label).collect();
    auc(&scores, &labels)
}

/// Fraction of records routed to their own domain.
pub fn routing_accuracy<T: Scalar>(
    router: &Router<T>,
    standardizer: &Standardizer<T>,
    records: &[&ActivationRecord],
) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyInput("routing accuracy".into()));
    }
    let mut hits = 0usize;
    for r in records {
        let h = lift::<T>(&r.hidden);
        if router.route(&Standardized::new(standardizer, Raw(&h))?)? == r.domain {
            hits += 1;
        }
    }
    Ok(hits as f64 / records.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuffleSummary {
    pub rounds: Vec<f64>,
    pub mean: f64,
    /// Percentile bootstrap interval of the mean (2.5%, 97.5%).
    pub interval: (f64, f64),
}

pub const BOOTSTRAP_RESAMPLES: usize = 1_000;

/// Permutation control: trains on permuted training labels and scores the
/// held-out set against its true labels, `n_rounds` times.
pub fn shuffle_control<T: Scalar, V: AsRef<[T]> + Sync>(
    train_x: &[V],
    train_y: &[u8],
    eval_x: &[V],
    eval_y: &[u8],
    seed: u64,
    n_rounds: usize,
    cfg: &TrainConfig,
) -> Result<ShuffleSummary> {
    if n_rounds == 0 {
        return Err(Error::InvalidParameter("shuffle control needs n_rounds >= 1".into()));
    }
    let rounds: Vec<f64> = (0..n_rounds)
        .into_par_iter()
        .map(|round| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(round as u64);
            let mut y = train_y.to_vec();
            y.shuffle(&mut rng);
            let fit = train_binary(train_x, &y, cfg)?;
            let scores: Vec<f64> = eval_x
                .iter()
                .map(|x| (crate::scalar::dot(x.as_ref(), &fit.w) + fit.b).as_f64())
                .collect();
            auc(&scores, eval_y)
        })
        .collect::<Result<_>>()?;
    let mean = rounds.iter().sum::<f64>() / rounds.len() as f64;
    let interval = bootstrap_mean_interval(&rounds, seed, BOOTSTRAP_RESAMPLES);
    Ok(ShuffleSummary { rounds, mean, interval })
}

pub fn bootstrap_mean_interval(values: &[f64], seed: u64, resamples: usize) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB007_57A9);
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let at = |q: f64| means[((q * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    (at(0.025), at(0.975))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerScore {
    pub layer: u32,
    pub train_auc: f64,
    pub val_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSweepResult {
    pub layers: Vec<LayerScore>,
    pub selected: u32,
}

impl LayerSweepResult {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["layer", "train_auc", "val_auc", "selected"])?;
        for s in &self.layers {
            out.write_record([
                s.layer.to_string(),
                format!("{:.6}", s.train_auc),
                format!("{:.6}", s.val_auc),
                (s.layer == self.selected).to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))
    }
}

/// Trains a global intent probe per layer on train and scores it on val;
/// selects the layer with the best validation AUC, shallowest on ties.
pub fn layer_sweep<T: Scalar>(dump: &MultiLayerDump, cfg: &TrainConfig) -> Result<LayerSweepResult> {
    if dump.num_layers() < 2 {
        return Err(Error::InvalidParameter(format!(
            "layer sweep needs at least 2 layers, got {}",
            dump.num_layers()
        )));
    }
    let layers: Vec<_> = dump.layers().collect();
    let scores: Vec<LayerScore> = layers
        .par_iter()
        .map(|&(layer, ds)| {
            let train = ds.split(Split::Train);
            let val = ds.split(Split::Val);
            for (split, set) in [(Split::Train, &train), (Split::Val, &val)] {
                if set.is_empty() {
                    return Err(Error::MissingSplit { layer, split: split.to_string() });
                }
            }
            check_access(Purpose::LayerSelection, train.iter().chain(&val).copied())?;
            let probe: Probe<T> = {
                let x = lifted::<T>(&train);
                let y: Vec<u8> = train.iter().map(|r| r.label).collect();
                let fit = train_binary(&x, &y, cfg)?;
                Probe { w: fit.w, b: fit.b, domain: format!("layer{layer}") }
            };
            Ok(LayerScore {
                layer,
                train_auc: probe_auc(&probe, &train)?,
                val_auc: probe_auc(&probe, &val)?,
            })
        })
        .collect::<Result<_>>()?;
    // `scores` follows ascending layer order regardless of completion order.
    let best = scores
        .iter()
        .fold(&scores[0], |best, s| if s.val_auc > best.val_auc { s } else { best });
    Ok(LayerSweepResult { selected: best.layer, layers: scores })
}
