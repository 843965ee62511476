//! Training objectives. Every loss returns its value together with the
//! gradient with respect to its first (trainable) argument.

use serde::{Deserialize, Serialize};

use crate::numcore::DenseMatrix;
use crate::{Error, Result};

/// Weights of the combined objective `cls + lambda_sc * sc + lambda_kd * kd`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda_sc: f64,
    pub lambda_kd: f64,
    pub temperature: f64,
    /// L2-normalise features before the contrastive dot products.
    pub normalize: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_sc: 2.0,
            lambda_kd: 1.0,
            temperature: 0.1,
            normalize: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(self.lambda_sc >= 0.0 && self.lambda_kd >= 0.0) {
            return Err(Error::InvalidArgument("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// Features with their `2T`-way domain-class labels (`2 * task + y`) and
/// binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainLabeledBatch {
    pub features: DenseMatrix,
    pub domain_labels: Vec<usize>,
    pub labels: Vec<u8>,
}

impl DomainLabeledBatch {
    pub fn new(features: DenseMatrix, domain_labels: Vec<usize>, labels: Vec<u8>) -> Result<Self> {
        if domain_labels.len() != features.rows() || labels.len() != features.rows() {
            return Err(Error::shape(
                "DomainLabeledBatch",
                format!("{} labels", features.rows()),
                format!("{} domain labels, {} labels", domain_labels.len(), labels.len()),
            ));
        }
        Ok(Self {
            features,
            domain_labels,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }
}

/// Domain-class label for binary label `y` of 0-based task `task`.
pub fn domain_class_label(task: usize, y: u8) -> usize {
    2 * task + y as usize
}

/// Mean sigmoid cross-entropy, stable for large |logit|.
pub fn bce_loss(logits: &[f64], labels: &[u8]) -> Result<(f64, Vec<f64>)> {
    if logits.len() != labels.len() {
        return Err(Error::shape("bce_loss", logits.len(), labels.len()));
    }
    if logits.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let grad = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            let y = y as f64;
            loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
            (crate::kanheads::sigmoid(z) - y) / n
        })
        .collect();
    Ok((loss / n, grad))
}

/// Supervised contrastive loss over domain-class labels.
///
/// For each anchor `i` with at least one positive (same label, `j != i`) and
/// one negative (different label), the loss term is the mean over positives of
/// `-log(exp(s_ij) / sum_{k: d_k != d_i} exp(s_ik))`, `s = f_i . f_j / tau`.
/// The denominator ranges over negatives only, so the value can be negative.
/// Anchors lacking a positive or a negative are skipped; the result is the
/// mean over the remaining anchors.
pub fn supcon_loss(batch: &DomainLabeledBatch, cfg: &LossConfig) -> Result<(f64, DenseMatrix)> {
    let n = batch.len();
    let d = batch.features.cols();
    if n < 2 {
        return Err(Error::InvalidArgument("supcon_loss needs at least 2 samples".into()));
    }
    let first = batch.domain_labels[0];
    if batch.domain_labels.iter().all(|&l| l == first) {
        return Err(Error::NoNegatives);
    }
    let tau = cfg.temperature;

    let mut norms = vec![1.0; n];
    let mut u = batch.features.clone();
    if cfg.normalize {
        for r in 0..n {
            let row = u.row_mut(r);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            norms[r] = norm;
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    let mut sim = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let s = u.row(i).iter().zip(u.row(j)).map(|(a, b)| a * b).sum::<f64>() / tau;
            sim[i * n + j] = s;
            sim[j * n + i] = s;
        }
    }

    // coefficient of s_ij in the total loss
    let mut coef = vec![0.0; n * n];
    let mut total = 0.0;
    let mut valid = 0usize;
    let labels = &batch.domain_labels;
    for i in 0..n {
        let positives: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
        let negatives: Vec<usize> = (0..n).filter(|&k| labels[k] != labels[i]).collect();
        if positives.is_empty() || negatives.is_empty() {
            continue;
        }
        valid += 1;
        let row = &sim[i * n..(i + 1) * n];
        let max = negatives.iter().map(|&k| row[k]).fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = negatives.iter().map(|&k| (row[k] - max).exp()).sum();
        let lse = max + sum_exp.ln();
        let np = positives.len() as f64;
        total += lse - positives.iter().map(|&j| row[j]).sum::<f64>() / np;
        for &j in &positives {
            coef[i * n + j] -= 1.0 / np;
        }
        for &k in &negatives {
            coef[i * n + k] += (row[k] - max).exp() / sum_exp;
        }
    }
    if valid == 0 {
        return Err(Error::NoValidAnchors);
    }
    let scale = 1.0 / valid as f64;
    let loss = total * scale;

    // dL/du_i = sum_j (c_ij + c_ji) u_j / tau
    let mut grad_u = DenseMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..n {
            let c = (coef[i * n + j] + coef[j * n + i]) * scale / tau;
            if c == 0.0 {
                continue;
            }
            let uj = u.row(j).to_vec();
            grad_u.row_mut(i).iter_mut().zip(&uj).for_each(|(g, v)| *g += c * v);
        }
    }
    if !cfg.normalize {
        return Ok((loss, grad_u));
    }
    // through u = f / |f|:  dL/df = (g - (g . u) u) / |f|
    let mut grad = DenseMatrix::zeros(n, d);
    for i in 0..n {
        let ui = u.row(i);
        let gi = grad_u.row(i);
        let dot: f64 = gi.iter().zip(ui).map(|(a, b)| a * b).sum();
        for (k, g) in grad.row_mut(i).iter_mut().enumerate() {
            *g = (gi[k] - dot * ui[k]) / norms[i];
        }
    }
    Ok((loss, grad))
}

/// Mean over samples of the per-sample feature MSE (averaged over feature
/// dimensions). Gradient is with respect to `student`.
pub fn kd_loss(teacher: &DenseMatrix, student: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
    mse_rows("kd_loss", student, teacher)
}

/// Same form as [`kd_loss`]; the gradient is with respect to `projected`.
pub fn align_loss(projected: &DenseMatrix, current: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
    mse_rows("align_loss", projected, current)
}

fn mse_rows(context: &'static str, pred: &DenseMatrix, target: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(
            context,
            format!("{:?}", target.shape()),
            format!("{:?}", pred.shape()),
        ));
    }
    let (n, d) = pred.shape();
    if n == 0 || d == 0 {
        return Ok((0.0, DenseMatrix::zeros(n, d)));
    }
    let denom = (n * d) as f64;
    let mut loss = 0.0;
    let mut grad = DenseMatrix::zeros(n, d);
    for ((g, p), t) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(pred.as_slice())
        .zip(target.as_slice())
    {
        let r = p - t;
        loss += r * r;
        *g = 2.0 * r / denom;
    }
    Ok((loss / denom, grad))
}

/// `cls + lambda_sc * sc + lambda_kd * kd`.
pub fn overall_loss(cls: f64, sc: f64, kd: f64, cfg: &LossConfig) -> f64 {
    cls + cfg.lambda_sc * sc + cfg.lambda_kd * kd
}
