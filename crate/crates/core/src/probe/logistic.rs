//! L2-regularized logistic and softmax regression by deterministic
//! full-batch gradient descent.
//!
//! The objective is the mean cross-entropy plus `l2 / 2 * |W|^2`; biases are
//! not penalized. Iterates start at zero. Each step tries the current step
//! size and halves it until the loss does not increase. Training stops once
//! the gradient's infinity norm drops to `tol` or after `max_iters` steps.
//!
//! Internally the features are centered by their column means. This leaves
//! the objective unchanged up to a reparametrized bias (`b = b_c - w . mean`),
//! and both parametrizations start at zero, but the bias no longer fights the
//! weights for conditioning when activations sit far from the origin.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{sigmoid, softplus, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub l2: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub step: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            max_iters: 5_000,
            tol: 1e-7,
            step: 0.1,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.l2 >= 0.0) || !(self.tol >= 0.0) || !(self.step > 0.0) {
            return Err(Error::InvalidParameter(format!("bad training config {self:?}")));
        }
        Ok(())
    }
}

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Features<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Features<T> {
    pub fn from_rows<V: AsRef<[T]>>(rows: &[V]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::dim(cols, r.len(), format!("feature row {i}")));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("feature row {i}")));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    fn column_means(&self) -> Vec<T> {
        let mut acc = vec![0.0_f64; self.cols];
        for i in 0..self.rows {
            for (a, v) in acc.iter_mut().zip(self.row(i)) {
                *a += v.as_f64();
            }
        }
        acc.into_iter().map(|a| T::of(a / self.rows as f64)).collect()
    }

    fn centered(&self, mean: &[T]) -> Self {
        let mut data = self.data.clone();
        for row in data.chunks_mut(self.cols.max(1)) {
            for (v, &m) in row.iter_mut().zip(mean) {
                *v = *v - m;
            }
        }
        Self { rows: self.rows, cols: self.cols, data }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryFit<T> {
    pub w: Vec<T>,
    pub b: T,
    pub loss: T,
    pub iters: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxFit<T> {
    /// One weight row per class.
    pub w: Vec<Vec<T>>,
    pub b: Vec<T>,
    pub loss: T,
    pub iters: usize,
    pub converged: bool,
}

fn binary_loss<T: Scalar>(x: &Features<T>, y: &[T], w: &[T], b: T, l2: T, margins: &mut [T]) -> T {
    let n = T::of(x.rows as f64);
    let mut total = T::zero();
    for (i, m) in margins.iter_mut().enumerate() {
        let z = crate::scalar::dot(x.row(i), w) + b;
        *m = z;
        // -[y log s(z) + (1 - y) log(1 - s(z))] = softplus(z) - y z
        total = total + softplus(z) - y[i] * z;
    }
    let reg = w.iter().fold(T::zero(), |acc, &v| acc + v * v);
    total / n + l2 * reg / T::of(2.0)
}

/// Binary logistic regression; `labels` must contain both 0 and 1.
pub fn train_binary<T: Scalar, V: AsRef<[T]>>(
    features: &[V],
    labels: &[u8],
    cfg: &TrainConfig,
) -> Result<BinaryFit<T>> {
    cfg.validate()?;
    let x = Features::from_rows(features)?;
    train_binary_matrix(&x, labels, cfg)
}

pub fn train_binary_matrix<T: Scalar>(
    x: &Features<T>,
    labels: &[u8],
    cfg: &TrainConfig,
) -> Result<BinaryFit<T>> {
    cfg.validate()?;
    if x.rows != labels.len() {
        return Err(Error::dim(x.rows, labels.len(), "labels"));
    }
    if x.rows == 0 {
        return Err(Error::EmptyInput("logistic training set".into()));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::InvalidParameter("binary labels must be 0 or 1".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(Error::SingleClass("logistic training labels".into()));
    }

    let mean = x.column_means();
    let xc = x.centered(&mean);
    let y: Vec<T> = labels.iter().map(|&l| T::of(f64::from(l))).collect();
    let (n, d) = (xc.rows, xc.cols);
    let nf = T::of(n as f64);
    let l2 = T::of(cfg.l2);
    let tol = T::of(cfg.tol);

    let mut w = vec![T::zero(); d];
    let mut b = T::zero();
    let mut margins = vec![T::zero(); n];
    let mut loss = binary_loss(&xc, &y, &w, b, l2, &mut margins);
    let mut step = T::of(cfg.step);
    let mut grad_w = vec![T::zero(); d];
    let mut cand_w = vec![T::zero(); d];
    let mut cand_margins = vec![T::zero(); n];
    let mut iters = 0;
    let mut converged = false;

    while iters < cfg.max_iters {
        grad_w.iter_mut().zip(&w).for_each(|(g, &wi)| *g = l2 * wi * nf);
        let mut grad_b = T::zero();
        for i in 0..n {
            let r = sigmoid(margins[i]) - y[i];
            grad_b = grad_b + r;
            for (g, &v) in grad_w.iter_mut().zip(xc.row(i)) {
                *g = *g + r * v;
            }
        }
        grad_w.iter_mut().for_each(|g| *g = *g / nf);
        grad_b = grad_b / nf;
        let gmax = grad_w.iter().fold(grad_b.abs(), |m, g| m.max(g.abs()));
        if gmax <= tol {
            converged = true;
            break;
        }
        iters += 1;
        loop {
            for ((c, &wi), &g) in cand_w.iter_mut().zip(&w).zip(&grad_w) {
                *c = wi - step * g;
            }
            let cand_b = b - step * grad_b;
            let cand_loss = binary_loss(&xc, &y, &cand_w, cand_b, l2, &mut cand_margins);
            if cand_loss <= loss {
                std::mem::swap(&mut w, &mut cand_w);
                std::mem::swap(&mut margins, &mut cand_margins);
                b = cand_b;
                loss = cand_loss;
                break;
            }
            step = step / T::of(2.0);
            if step < T::of(1e-30) {
                // No descent possible at representable precision.
                converged = true;
                break;
            }
        }
        if converged {
            break;
        }
    }

    let b_raw = b - crate::scalar::dot(&w, &mean);
    Ok(BinaryFit { w, b: b_raw, loss, iters, converged })
}

fn softmax_in_place<T: Scalar>(z: &mut [T]) {
    let max = z.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut sum = T::zero();
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    for v in z.iter_mut() {
        *v = *v / sum;
    }
}

fn log_sum_exp<T: Scalar>(z: &[T]) -> T {
    let max = z.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    max + z.iter().map(|&v| (v - max).exp()).sum::<T>().ln()
}

fn softmax_loss<T: Scalar>(
    x: &Features<T>,
    y: &[usize],
    w: &[Vec<T>],
    b: &[T],
    l2: T,
    logits: &mut [Vec<T>],
) -> T {
    let mut total = T::zero();
    for i in 0..x.rows {
        let row = x.row(i);
        for (k, z) in logits[i].iter_mut().enumerate() {
            *z = crate::scalar::dot(row, &w[k]) + b[k];
        }
        total = total + log_sum_exp(&logits[i]) - logits[i][y[i]];
    }
    let reg = w
        .iter()
        .flat_map(|r| r.iter())
        .fold(T::zero(), |acc, &v| acc + v * v);
    total / T::of(x.rows as f64) + l2 * reg / T::of(2.0)
}

/// Multinomial logistic regression over classes `0..n_classes`; every class
/// must be present.
pub fn train_softmax<T: Scalar, V: AsRef<[T]>>(
    features: &[V],
    labels: &[usize],
    n_classes: usize,
    cfg: &TrainConfig,
) -> Result<SoftmaxFit<T>> {
    cfg.validate()?;
    let x = Features::from_rows(features)?;
    if x.rows != labels.len() {
        return Err(Error::dim(x.rows, labels.len(), "labels"));
    }
    if n_classes < 2 {
        return Err(Error::SingleClass("softmax needs at least 2 classes".into()));
    }
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        if l >= n_classes {
            return Err(Error::InvalidParameter(format!("class {l} >= {n_classes}")));
        }
        counts[l] += 1;
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::SingleClass(format!("softmax labels (class {k} absent)")));
    }

    let mean = x.column_means();
    let xc = x.centered(&mean);
    let (n, d) = (xc.rows, xc.cols);
    let nf = T::of(n as f64);
    let l2 = T::of(cfg.l2);
    let tol = T::of(cfg.tol);

    let mut w = vec![vec![T::zero(); d]; n_classes];
    let mut b = vec![T::zero(); n_classes];
    let mut logits = vec![vec![T::zero(); n_classes]; n];
    let mut loss = softmax_loss(&xc, labels, &w, &b, l2, &mut logits);
    let mut step = T::of(cfg.step);
    let mut gw = vec![vec![T::zero(); d]; n_classes];
    let mut gb = vec![T::zero(); n_classes];
    let mut cw = w.clone();
    let mut cb = b.clone();
    let mut clogits = logits.clone();
    let mut probs = vec![T::zero(); n_classes];
    let mut iters = 0;
    let mut converged = false;

    while iters < cfg.max_iters {
        for (g, wr) in gw.iter_mut().zip(&w) {
            g.iter_mut().zip(wr).for_each(|(gi, &wi)| *gi = l2 * wi * nf);
        }
        gb.iter_mut().for_each(|g| *g = T::zero());
        for i in 0..n {
            probs.copy_from_slice(&logits[i]);
            softmax_in_place(&mut probs);
            probs[labels[i]] = probs[labels[i]] - T::one();
            let row = xc.row(i);
            for k in 0..n_classes {
                let r = probs[k];
                gb[k] = gb[k] + r;
                for (g, &v) in gw[k].iter_mut().zip(row) {
                    *g = *g + r * v;
                }
            }
        }
        let mut gmax = T::zero();
        for k in 0..n_classes {
            gb[k] = gb[k] / nf;
            gmax = gmax.max(gb[k].abs());
            for g in gw[k].iter_mut() {
                *g = *g / nf;
                gmax = gmax.max(g.abs());
            }
        }
        if gmax <= tol {
            converged = true;
            break;
        }
        iters += 1;
        loop {
            for k in 0..n_classes {
                for ((c, &wi), &g) in cw[k].iter_mut().zip(&w[k]).zip(&gw[k]) {
                    *c = wi - step * g;
                }
                cb[k] = b[k] - step * gb[k];
            }
            let cand = softmax_loss(&xc, labels, &cw, &cb, l2, &mut clogits);
            if cand <= loss {
                std::mem::swap(&mut w, &mut cw);
                std::mem::swap(&mut b, &mut cb);
                std::mem::swap(&mut logits, &mut clogits);
                loss = cand;
                break;
            }
            step = step / T::of(2.0);
            if step < T::of(1e-30) {
                converged = true;
                break;
            }
        }
        if converged {
            break;
        }
    }

    let b_raw = w
        .iter()
        .zip(&b)
        .map(|(wr, &bk)| bk - crate::scalar::dot(wr, &mean))
        .collect();
    Ok(SoftmaxFit { w, b: b_raw, loss, iters, converged })
}

/// Regularized binary objective at `(w, b)` on uncentered features; used to
/// compare fits against independent optimizers.
pub fn binary_objective<T: Scalar, V: AsRef<[T]>>(features: &[V], labels: &[u8], w: &[T], b: T, l2: f64) -> T {
    let n = T::of(features.len() as f64);
    let mut total = T::zero();
    for (x, &l) in features.iter().zip(labels) {
        let z = crate::scalar::dot(x.as_ref(), w) + b;
        total = total + softplus(z) - T::of(f64::from(l)) * z;
    }
    let reg = w.iter().fold(T::zero(), |acc, &v| acc + v * v);
    total / n + T::of(l2) * reg / T::of(2.0)
}
