//! Causal check of a steering direction: how much does injecting it move
//! the trigger logit, compared with its negation and with random directions
//! of the same norm?

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{check_dim, Error, Result};
use crate::scalar::{norm, sigmoid, Scalar};
use crate::steering::{random_control, DEGENERATE_NORM};
use crate::synth::BehaviorOracle;

/// A model (or stand-in) whose trigger-token logit can be read for a state.
pub trait TriggerLogitSource: Sync {
    fn dim(&self) -> usize;
    fn trigger_logit(&self, h: &[f64]) -> Result<f64>;
}

impl TriggerLogitSource for BehaviorOracle {
    fn dim(&self) -> usize {
        BehaviorOracle::dim(self)
    }
    fn trigger_logit(&self, h: &[f64]) -> Result<f64> {
        BehaviorOracle::trigger_logit(self, h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Plus,
    Minus,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaLogitRow {
    pub alpha: f64,
    pub direction: Direction,
    pub mean_delta_logit: f64,
    pub mean_delta_prob: f64,
    /// Welch two-sample test of this direction's per-sample ΔLogit against
    /// the random rows; absent for the random rows and when undefined.
    pub p_value: Option<f64>,
    pub t_stat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaLogitTable {
    pub n: usize,
    pub rows: Vec<DeltaLogitRow>,
}

impl DeltaLogitTable {
    pub fn get(&self, alpha: f64, direction: Direction) -> Option<&DeltaLogitRow> {
        self.rows.iter().find(|r| r.alpha == alpha && r.direction == direction)
    }
}

/// Welch's t statistic and two-sided p-value. `None` when both samples have
/// zero variance.
pub fn welch_t(a: &[f64], b: &[f64]) -> Option<(f64, f64)> {
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        (n, m, v)
    };
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (na, ma, va) = stats(a);
    let (nb, mb, vb) = stats(b);
    let se2 = va / na + vb / nb;
    if se2 <= 0.0 || !se2.is_finite() {
        return None;
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    Some((t, 2.0 * dist.sf(t.abs())))
}

/// For each alpha, the mean change in trigger logit and probability when
/// `alpha * v_hat` is added (+v), subtracted (-v), or replaced by a random
/// unit direction scaled by alpha, drawn per sample from `seed + i`.
pub fn delta_logit_experiment<S: TriggerLogitSource, T: Scalar>(
    source: &S,
    states: &[Vec<T>],
    direction: &[T],
    alphas: &[f64],
    seed: u64,
) -> Result<DeltaLogitTable> {
    let n = states.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!("delta-logit needs n >= 2 states, got {n}")));
    }
    if alphas.is_empty() {
        return Err(Error::InvalidParameter("delta-logit needs at least one alpha".into()));
    }
    let dim = source.dim();
    check_dim(dim, direction.len(), "delta-logit direction")?;
    let v: Vec<f64> = direction.iter().map(|x| x.as_f64()).collect();
    let vn = norm(&v);
    if !(vn >= DEGENERATE_NORM) {
        return Err(Error::DegenerateDirection { scope: "delta-logit".into(), norm: vn });
    }
    let v_hat: Vec<f64> = v.iter().map(|x| x / vn).collect();
    let randoms = (0..n)
        .map(|i| random_control(1.0, dim, seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let base = states
        .iter()
        .map(|h| {
            check_dim(dim, h.len(), "delta-logit state")?;
            let h: Vec<f64> = h.iter().map(|x| x.as_f64()).collect();
            let z = source.trigger_logit(&h)?;
            Ok((h, z))
        })
        .collect::<Result<Vec<_>>>()?;

    let shifted = |h: &[f64], dir: &[f64], a: f64| -> Vec<f64> { h.iter().zip(dir).map(|(x, d)| x + a * d).collect() };
    let mut rows = Vec::new();
    for &alpha in alphas {
        let mut per_dir: Vec<(Direction, Vec<f64>, Vec<f64>)> = Vec::new();
        for dir in [Direction::Plus, Direction::Minus, Direction::Random] {
            let mut dl = Vec::with_capacity(n);
            let mut dp = Vec::with_capacity(n);
            for (i, (h, z)) in base.iter().enumerate() {
                let moved = match dir {
                    Direction::Plus => shifted(h, &v_hat, alpha),
                    Direction::Minus => shifted(h, &v_hat, -alpha),
                    Direction::Random => shifted(h, &randoms[i], alpha),
                };
                let z2 = source.trigger_logit(&moved)?;
                dl.push(z2 - z);
                dp.push(sigmoid(z2) - sigmoid(*z));
            }
            per_dir.push((dir, dl, dp));
        }
        let random_dl = per_dir[2].1.clone();
        for (dir, dl, dp) in per_dir {
            let test = (dir != Direction::Random).then(|| welch_t(&dl, &random_dl)).flatten();
            rows.push(DeltaLogitRow {
                alpha,
                direction: dir,
                mean_delta_logit: dl.iter().sum::<f64>() / n as f64,
                mean_delta_prob: dp.iter().sum::<f64>() / n as f64,
                p_value: test.map(|t| t.1),
                t_stat: test.map(|t| t.0),
            });
        }
    }
    Ok(DeltaLogitTable { n, rows })
}
