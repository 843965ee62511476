//! Detector heads and the feature extractor.
//!
//! Every trainable component exposes its parameters as one flat vector (see
//! [`Parameterized`]) so Adam and the finite-difference oracle can treat them
//! uniformly. Gradients returned by the `backward` methods use the same layout.

mod baseline;
mod dg_layer;
mod dgkd;
mod extractor;
mod rbf;

pub use baseline::{BaselineHead, GroupKanHead, MlpHead, RationalCoeffs};
pub use dg_layer::{DgLayer, WeightInit, SIGMA_INIT_MAX, SIGMA_INIT_MIN};
pub use dgkd::{write_profile_csv, DgkdHead};
pub use extractor::{ExtractorCache, FeatureExtractor};
pub use rbf::{rbf_eval, rbf_grad, RbfGrad, RbfParams, SIGMA_MIN};

use serde::{Deserialize, Serialize};

use crate::numcore::{DenseMatrix, RngStream};
use crate::{Error, Result};

pub trait Parameterized {
    fn num_params(&self) -> usize;
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, params: &[f64]) -> Result<()>;
}

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::shape(context, expected, actual));
    }
    Ok(())
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn silu(z: f64) -> f64 {
    z * sigmoid(z)
}

#[inline]
pub(crate) fn silu_grad(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Dgkd,
    Mlp,
    GroupKan,
}

impl HeadKind {
    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::Dgkd => "dgkd",
            HeadKind::Mlp => "mlp",
            HeadKind::GroupKan => "groupkan",
        }
    }
}

impl std::str::FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dgkd" => Ok(HeadKind::Dgkd),
            "mlp" => Ok(HeadKind::Mlp),
            "groupkan" => Ok(HeadKind::GroupKan),
            other => Err(Error::InvalidArgument(format!(
                "unknown head kind `{other}` (expected dgkd, mlp or groupkan)"
            ))),
        }
    }
}

/// The classifier sitting on top of the extractor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DetectorHead {
    Dgkd(DgkdHead),
    Baseline(BaselineHead),
}

impl DetectorHead {
    pub fn new(kind: HeadKind, d_in: usize, d_out: usize, groups: usize, rng: &mut RngStream) -> Result<Self> {
        Ok(match kind {
            HeadKind::Dgkd => DetectorHead::Dgkd(DgkdHead::new(d_in, d_out, groups)?),
            HeadKind::Mlp => DetectorHead::Baseline(BaselineHead::Mlp(MlpHead::new(
                d_in,
                MlpHead::DEFAULT_HIDDEN,
                d_out,
                rng,
            )?)),
            HeadKind::GroupKan => {
                DetectorHead::Baseline(BaselineHead::GroupKan(GroupKanHead::new(d_in, d_out, groups, rng)?))
            }
        })
    }

    pub fn kind(&self) -> HeadKind {
        match self {
            DetectorHead::Dgkd(_) => HeadKind::Dgkd,
            DetectorHead::Baseline(BaselineHead::Mlp(_)) => HeadKind::Mlp,
            DetectorHead::Baseline(BaselineHead::GroupKan(_)) => HeadKind::GroupKan,
        }
    }

    pub fn d_in(&self) -> usize {
        match self {
            DetectorHead::Dgkd(h) => h.d_in(),
            DetectorHead::Baseline(h) => h.d_in(),
        }
    }

    pub fn d_out(&self) -> usize {
        match self {
            DetectorHead::Dgkd(h) => h.d_out(),
            DetectorHead::Baseline(h) => h.d_out(),
        }
    }

    /// Prepares the head for a new task. DG-KD freezes its layers and grows a
    /// new one over `features`; baselines keep training their single set of
    /// parameters.
    pub fn begin_task(&mut self, features: &DenseMatrix, rng: &mut RngStream) -> Result<()> {
        match self {
            DetectorHead::Dgkd(h) => h.add_task_layer(features, rng),
            DetectorHead::Baseline(_) => Ok(()),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            DetectorHead::Dgkd(h) => h.forward(x),
            DetectorHead::Baseline(h) => h.forward(x),
        }
    }

    /// Returns `(dL/dx, dL/dθ)` where θ are the currently trainable parameters.
    pub fn backward(&self, x: &[f64], grad_out: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            DetectorHead::Dgkd(h) => h.backward(x, grad_out),
            DetectorHead::Baseline(h) => h.backward(x, grad_out),
        }
    }

    /// Scalar logits (first output) for every row.
    pub fn logits(&self, features: &DenseMatrix) -> Result<Vec<f64>> {
        features
            .row_iter()
            .map(|r| self.forward(r).map(|o| o[0]))
            .collect()
    }
}

impl Parameterized for DetectorHead {
    fn num_params(&self) -> usize {
        match self {
            DetectorHead::Dgkd(h) => h.num_params(),
            DetectorHead::Baseline(h) => h.num_params(),
        }
    }

    fn params(&self) -> Vec<f64> {
        match self {
            DetectorHead::Dgkd(h) => h.params(),
            DetectorHead::Baseline(h) => h.params(),
        }
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        match self {
            DetectorHead::Dgkd(h) => h.set_params(params),
            DetectorHead::Baseline(h) => h.set_params(params),
        }
    }
}
