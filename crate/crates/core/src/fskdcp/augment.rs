use serde::{Deserialize, Serialize};

use super::FeatureMemory;
use crate::losses::DomainLabeledBatch;
use crate::numcore::{DenseMatrix, RngStream};
use crate::{Error, Result};

/// Label-conditional Gaussian jitter around stored rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Noise scale relative to the per-label, per-dimension standard deviation.
    pub jitter: f64,
    pub samples_per_feature: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            jitter: 0.5,
            samples_per_feature: 1,
        }
    }
}

struct LabelPool {
    label: usize,
    rows: Vec<usize>,
    std: Vec<f64>,
}

fn label_pools(mem: &FeatureMemory) -> Vec<LabelPool> {
    let d = mem.features.cols();
    mem.distinct_labels()
        .into_iter()
        .map(|label| {
            let rows = mem.rows_with_label(label);
            let sub = mem.features.select_rows(&rows);
            let mean = sub.column_means();
            let n = rows.len() as f64;
            let std = (0..d)
                .map(|c| (sub.row_iter().map(|r| (r[c] - mean[c]).powi(2)).sum::<f64>() / n).sqrt())
                .collect();
            LabelPool { label, rows, std }
        })
        .collect()
}

fn draw(mem: &FeatureMemory, pool: &LabelPool, jitter: f64, rng: &mut RngStream, out: &mut Vec<f64>) -> usize {
    let row = pool.rows[rng.below(pool.rows.len())];
    out.clear();
    out.extend_from_slice(mem.features.row(row));
    if jitter > 0.0 {
        for (v, s) in out.iter_mut().zip(&pool.std) {
            *v += jitter * s * rng.normal();
        }
    }
    row
}

/// `samples_per_feature * len` jittered samples. Sample `k` takes the label of
/// stored row `k mod len` and a uniformly drawn row of that label.
pub fn augment_features(mem: &FeatureMemory, cfg: &AugmentConfig, rng: &mut RngStream) -> Result<DomainLabeledBatch> {
    if mem.is_empty() {
        return Err(Error::InvalidArgument("cannot augment an empty memory".into()));
    }
    let pools = label_pools(mem);
    let n = mem.len() * cfg.samples_per_feature;
    let mut features = DenseMatrix::zeros(n, mem.features.cols());
    let mut domain_labels = Vec::with_capacity(n);
    let mut buf = Vec::new();
    for k in 0..n {
        let label = mem.domain_labels[k % mem.len()];
        let pool = pools.iter().find(|p| p.label == label).expect("label pool exists");
        draw(mem, pool, cfg.jitter, rng, &mut buf);
        features.row_mut(k).copy_from_slice(&buf);
        domain_labels.push(label);
    }
    let labels = domain_labels.iter().map(|&l| (l % 2) as u8).collect();
    DomainLabeledBatch::new(features, domain_labels, labels)
}

/// Replay batch of `n` samples with labels drawn uniformly over the labels in
/// memory. Also returns the stored row each sample was drawn from.
pub fn replay_batch(
    mem: &FeatureMemory,
    cfg: &AugmentConfig,
    n: usize,
    rng: &mut RngStream,
) -> Result<(DomainLabeledBatch, Vec<usize>)> {
    if mem.is_empty() {
        return Err(Error::InvalidArgument("cannot replay from an empty memory".into()));
    }
    let pools = label_pools(mem);
    let mut features = DenseMatrix::zeros(n, mem.features.cols());
    let mut domain_labels = Vec::with_capacity(n);
    let mut sources = Vec::with_capacity(n);
    let mut buf = Vec::new();
    for k in 0..n {
        let pool = &pools[rng.below(pools.len())];
        sources.push(draw(mem, pool, cfg.jitter, rng, &mut buf));
        features.row_mut(k).copy_from_slice(&buf);
        domain_labels.push(pool.label);
    }
    let labels = domain_labels.iter().map(|&l| (l % 2) as u8).collect();
    Ok((DomainLabeledBatch::new(features, domain_labels, labels)?, sources))
}
