use std::collections::BTreeSet;

use serde::Serialize;

use crate::losses::domain_class_label;
use crate::numcore::DenseMatrix;
use crate::{Error, Result};

/// Per-label quotas for `budget` slots over `labels` (ascending); the
/// remainder goes to the earliest labels.
pub fn label_quotas(budget: usize, num_labels: usize) -> Vec<usize> {
    if num_labels == 0 {
        return Vec::new();
    }
    let base = budget / num_labels;
    let extra = budget % num_labels;
    (0..num_labels).map(|i| base + usize::from(i < extra)).collect()
}

/// Greedy mean matching: repeatedly picks the unselected row that brings the
/// running mean of the selection closest to the mean of all rows. Ties go to
/// the lower index. Returns indices in pick order.
pub fn herding(rows: &DenseMatrix, k: usize) -> Vec<usize> {
    let n = rows.rows();
    let k = k.min(n);
    let target = rows.column_means();
    let d = rows.cols();
    let mut sum = vec![0.0; d];
    let mut taken = vec![false; n];
    let mut picked = Vec::with_capacity(k);
    for step in 0..k {
        let m = (step + 1) as f64;
        let mut best = None;
        let mut best_dist = f64::INFINITY;
        for i in (0..n).filter(|&i| !taken[i]) {
            let dist: f64 = rows
                .row(i)
                .iter()
                .zip(&sum)
                .zip(&target)
                .map(|((x, s), t)| {
                    let e = (s + x) / m - t;
                    e * e
                })
                .sum();
            if dist < best_dist {
                best_dist = dist;
                best = Some(i);
            }
        }
        let Some(i) = best else { break };
        taken[i] = true;
        sum.iter_mut().zip(rows.row(i)).for_each(|(s, x)| *s += x);
        picked.push(i);
    }
    picked
}

/// Herding within each domain-class label under a shared budget. Returns the
/// selected row indices grouped by ascending label, in herding order.
pub fn select_features(features: &DenseMatrix, domain_labels: &[usize], budget: usize) -> Result<Vec<usize>> {
    if features.rows() == 0 {
        return Err(Error::InvalidArgument("select_features: empty feature set".into()));
    }
    if domain_labels.len() != features.rows() {
        return Err(Error::shape("select_features labels", features.rows(), domain_labels.len()));
    }
    let labels: Vec<usize> = domain_labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if budget < labels.len() {
        return Err(Error::InvalidArgument(format!(
            "budget {budget} is smaller than the number of labels ({})",
            labels.len()
        )));
    }
    let mut selected = Vec::new();
    for (label, quota) in labels.iter().zip(label_quotas(budget, labels.len())) {
        let idx: Vec<usize> = (0..features.rows()).filter(|&i| domain_labels[i] == *label).collect();
        let picks = herding(&features.select_rows(&idx), quota);
        selected.extend(picks.into_iter().map(|p| idx[p]));
    }
    Ok(selected)
}

/// Stored representative features, all expressed in the feature space of task
/// `space` (1-based; 0 while empty).
///
/// Rows are grouped by ascending domain-class label and kept in herding order
/// inside each label, so shrinking a label's quota is a truncation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureMemory {
    pub(crate) features: DenseMatrix,
    pub(crate) domain_labels: Vec<usize>,
    pub(crate) labels: Vec<u8>,
    pub(crate) source_tasks: Vec<usize>,
    pub(crate) budget: usize,
    pub(crate) space: usize,
    /// Raw inputs aligned with `features`, kept only for the raw-replay mode.
    pub(crate) raw: Option<DenseMatrix>,
}

impl FeatureMemory {
    pub const DEFAULT_BUDGET: usize = 500;

    pub fn new(budget: usize, feature_dim: usize) -> Self {
        Self {
            features: DenseMatrix::zeros(0, feature_dim),
            domain_labels: Vec::new(),
            labels: Vec::new(),
            source_tasks: Vec::new(),
            budget,
            space: 0,
            raw: None,
        }
    }

    /// Builds a memory from explicit rows (used by snapshots and tests).
    pub fn from_parts(
        features: DenseMatrix,
        domain_labels: Vec<usize>,
        budget: usize,
        space: usize,
    ) -> Result<Self> {
        if domain_labels.len() != features.rows() {
            return Err(Error::shape("FeatureMemory labels", features.rows(), domain_labels.len()));
        }
        if features.rows() > budget {
            return Err(Error::InvalidArgument(format!(
                "{} rows exceed the memory budget {budget}",
                features.rows()
            )));
        }
        let labels = domain_labels.iter().map(|&d| (d % 2) as u8).collect();
        let source_tasks = domain_labels.iter().map(|&d| d / 2).collect();
        Ok(Self {
            features,
            domain_labels,
            labels,
            source_tasks,
            budget,
            space,
            raw: None,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn domain_labels(&self) -> &[usize] {
        &self.domain_labels
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn source_tasks(&self) -> &[usize] {
        &self.source_tasks
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    /// Task whose feature space the stored rows live in.
    pub fn space(&self) -> usize {
        self.space
    }

    pub fn raw_inputs(&self) -> Option<&DenseMatrix> {
        self.raw.as_ref()
    }

    pub fn distinct_labels(&self) -> Vec<usize> {
        self.domain_labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Row indices carrying `label`.
    pub fn rows_with_label(&self, label: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.domain_labels[i] == label).collect()
    }

    /// Declares the rows to live in `space` without transforming them. Used
    /// when drift compensation is switched off.
    pub fn retag(&mut self, space: usize) {
        self.space = space;
    }

    /// Adds representative features of 0-based task `task`, whose rows are in
    /// feature space `space`. Quotas are recomputed over all labels; existing
    /// labels are truncated to their new quota.
    ///
    /// `raw` (aligned with `features`) is stored alongside when given.
    pub fn insert_task(
        &mut self,
        task: usize,
        features: &DenseMatrix,
        labels: &[u8],
        raw: Option<&DenseMatrix>,
        space: usize,
    ) -> Result<()> {
        if features.rows() == 0 {
            return Err(Error::InvalidArgument("insert_task: empty feature set".into()));
        }
        if labels.len() != features.rows() {
            return Err(Error::shape("insert_task labels", features.rows(), labels.len()));
        }
        if !self.is_empty() && self.space != space {
            return Err(Error::InvalidArgument(format!(
                "memory lives in space {} but new rows are in space {space}",
                self.space
            )));
        }
        if let Some(r) = raw {
            if r.rows() != features.rows() {
                return Err(Error::shape("insert_task raw rows", features.rows(), r.rows()));
            }
        }
        if !self.is_empty() && raw.is_some() != self.raw.is_some() {
            return Err(Error::InvalidArgument("raw inputs must be stored for all tasks or none".into()));
        }
        let new_labels: Vec<usize> = labels.iter().map(|&y| domain_class_label(task, y)).collect();
        let mut all: BTreeSet<usize> = self.domain_labels.iter().copied().collect();
        all.extend(new_labels.iter().copied());
        if self.domain_labels.iter().any(|l| new_labels.contains(l)) {
            return Err(Error::InvalidArgument(format!("task {task} already stored in memory")));
        }
        if self.budget < all.len() {
            return Err(Error::InvalidArgument(format!(
                "budget {} is smaller than the number of labels ({})",
                self.budget,
                all.len()
            )));
        }
        let quotas = label_quotas(self.budget, all.len());

        let d = features.cols();
        let mut out_f = DenseMatrix::zeros(0, d);
        let mut out_raw = raw.map(|r| DenseMatrix::zeros(0, r.cols()));
        let mut out_d = Vec::new();
        for (label, quota) in all.iter().copied().zip(quotas) {
            let old = self.rows_with_label(label);
            if !old.is_empty() {
                for &i in old.iter().take(quota) {
                    out_f.push_row(self.features.row(i))?;
                    if let (Some(o), Some(r)) = (out_raw.as_mut(), self.raw.as_ref()) {
                        o.push_row(r.row(i))?;
                    }
                    out_d.push(label);
                }
                continue;
            }
            let idx: Vec<usize> = (0..features.rows()).filter(|&i| new_labels[i] == label).collect();
            for p in herding(&features.select_rows(&idx), quota) {
                out_f.push_row(features.row(idx[p]))?;
                if let (Some(o), Some(r)) = (out_raw.as_mut(), raw) {
                    o.push_row(r.row(idx[p]))?;
                }
                out_d.push(label);
            }
        }
        self.labels = out_d.iter().map(|&l| (l % 2) as u8).collect();
        self.source_tasks = out_d.iter().map(|&l| l / 2).collect();
        self.domain_labels = out_d;
        self.features = out_f;
        self.raw = out_raw;
        self.space = space;
        Ok(())
    }
}
