//! Plot-ready CSV dumps: 2-D PCA embeddings of eval features and DG-KD
//! activation profiles.

use std::io::Write;

use kancfd::kanheads::{write_profile_csv, DetectorHead};
use kancfd::numcore::{symmetric_eigen, DenseMatrix};

use crate::artifacts::{build_stream, eval_splits, ModelArtifact};
use crate::error::{CliError, Result};

pub const EMBEDDINGS_HEADER: &str = "pc1,pc2,domain,label,split";

/// Top-two principal components of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca2 {
    pub mean: Vec<f64>,
    /// Unit loading vectors, largest-magnitude entry positive.
    pub components: [Vec<f64>; 2],
    /// Share of total variance carried by each component.
    pub explained: [f64; 2],
}

impl Pca2 {
    pub fn fit(x: &DenseMatrix) -> Result<Self> {
        let (n, d) = x.shape();
        if d < 2 {
            return Err(CliError::Core(kancfd::Error::InvalidArgument(format!(
                "PCA needs at least 2 feature dims, got {d}"
            ))));
        }
        if n < 2 {
            return Err(CliError::Core(kancfd::Error::InvalidArgument(format!(
                "PCA needs at least 2 samples, got {n}"
            ))));
        }
        let mean = x.column_means();
        let mut cov = DenseMatrix::zeros(d, d);
        for row in x.row_iter() {
            for i in 0..d {
                let di = row[i] - mean[i];
                for j in i..d {
                    let v = cov.get(i, j) + di * (row[j] - mean[j]);
                    cov.set(i, j, v);
                }
            }
        }
        for i in 0..d {
            for j in i..d {
                let v = cov.get(i, j) / (n - 1) as f64;
                cov.set(i, j, v);
                cov.set(j, i, v);
            }
        }
        let (values, vectors) = symmetric_eigen(&cov)?;
        let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
        let component = |k: usize| -> Vec<f64> {
            let mut c: Vec<f64> = (0..d).map(|i| vectors.get(i, k)).collect();
            let pivot = c.iter().copied().fold(0.0_f64, |m, v| if v.abs() > m.abs() { v } else { m });
            if pivot < 0.0 {
                c.iter_mut().for_each(|v| *v = -*v);
            }
            c
        };
        let share = |k: usize| if total > 0.0 { values[k].max(0.0) / total } else { 0.0 };
        Ok(Self {
            mean,
            components: [component(0), component(1)],
            explained: [share(0), share(1)],
        })
    }

    pub fn project(&self, row: &[f64]) -> [f64; 2] {
        let dot = |c: &[f64]| c.iter().zip(row).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum();
        [dot(&self.components[0]), dot(&self.components[1])]
    }
}

/// Writes one `pc1,pc2,domain,label,split` row per pooled eval sample of the
/// tasks the model has seen. Returns the fitted PCA.
pub fn dump_embeddings<W: Write>(model: &ModelArtifact, mut w: W) -> Result<Pca2> {
    let cfg = model.experiment_config()?;
    let stream = build_stream(&cfg)?;
    let evals = eval_splits(&stream)?;
    let seen = &evals[..model.tasks.max(1).min(evals.len())];
    let mut feats: Option<DenseMatrix> = None;
    for ds in seen {
        let f = model.extractor.forward_batch(&ds.x)?;
        feats = Some(match feats {
            None => f,
            Some(acc) => acc.vstack(&f)?,
        });
    }
    let feats = feats.expect("at least one eval split");
    let pca = Pca2::fit(&feats)?;
    writeln!(w, "{EMBEDDINGS_HEADER}")?;
    let rows = seen.iter().flat_map(|ds| ds.labels.iter().map(move |&y| (ds.domain, y)));
    for (row, (domain, label)) in feats.row_iter().zip(rows) {
        let [a, b] = pca.project(row);
        writeln!(w, "{a},{b},{domain},{label},eval")?;
    }
    Ok(pca)
}

/// Evenly spaced scan covering every layer's RBF for `group` out to four
/// widths on either side.
pub fn profile_grid(model: &ModelArtifact, group: usize, points: usize) -> Result<Vec<f64>> {
    let DetectorHead::Dgkd(head) = &model.head else {
        return Err(CliError::Core(kancfd::Error::InvalidArgument(
            "activation profiles need a dgkd head".into(),
        )));
    };
    if group >= head.groups() {
        return Err(CliError::Core(kancfd::Error::InvalidArgument(format!(
            "group {group} out of range (head has {} groups)",
            head.groups()
        ))));
    }
    if head.layers().is_empty() || points < 2 {
        return Err(CliError::Core(kancfd::Error::InvalidArgument(
            "profile needs a trained head and at least 2 points".into(),
        )));
    }
    let (lo, hi) = head.layers().iter().map(|l| l.rbfs()[group]).fold((f64::MAX, f64::MIN), |(lo, hi), p| {
        (lo.min(p.center - 4.0 * p.width), hi.max(p.center + 4.0 * p.width))
    });
    let step = (hi - lo) / (points - 1) as f64;
    Ok((0..points).map(|i| lo + step * i as f64).collect())
}

/// Writes the composite activation of `group` as `x,value,task_count` rows.
pub fn dump_profile<W: Write>(model: &ModelArtifact, group: usize, points: usize, w: W) -> Result<()> {
    let xs = profile_grid(model, group, points)?;
    let DetectorHead::Dgkd(head) = &model.head else {
        unreachable!("checked by profile_grid");
    };
    let values = head.activation_profile(group, &xs)?;
    write_profile_csv(w, &xs, &values, head.layers().len())?;
    Ok(())
}
