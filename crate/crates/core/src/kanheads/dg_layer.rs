use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{check_len, rbf_eval, rbf_grad, Parameterized, RbfParams, SIGMA_MIN};
use crate::numcore::{DenseMatrix, RngStream};
use crate::{Error, Result};

/// Width range used when a layer is initialised from feature statistics.
pub const SIGMA_INIT_MIN: f64 = 0.05;
pub const SIGMA_INIT_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightInit {
    Zero,
    Uniform(f64),
}

/// Domain-group layer: one Gaussian per dimension group, shared by every
/// input dimension in the group, followed by a dense `d_out x d_in` weight.
///
/// Dimension `i` belongs to group `min(i / (d_in / groups), groups - 1)`, so the
/// last group absorbs the remainder when `groups` does not divide `d_in`.
///
/// Flat parameter layout: weights (row-major), then centers, then widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DgLayerRepr")]
pub struct DgLayer {
    task_id: usize,
    d_in: usize,
    d_out: usize,
    groups: usize,
    weights: DenseMatrix,
    rbfs: Vec<RbfParams>,
    frozen: bool,
}

#[derive(Deserialize)]
struct DgLayerRepr {
    task_id: usize,
    d_in: usize,
    d_out: usize,
    groups: usize,
    weights: DenseMatrix,
    rbfs: Vec<RbfParams>,
    frozen: bool,
}

impl TryFrom<DgLayerRepr> for DgLayer {
    type Error = Error;

    fn try_from(r: DgLayerRepr) -> Result<Self> {
        let mut layer = DgLayer::new(r.task_id, r.weights, r.rbfs)?;
        check_len("DgLayer d_in", layer.d_in, r.d_in)?;
        check_len("DgLayer d_out", layer.d_out, r.d_out)?;
        check_len("DgLayer groups", layer.groups, r.groups)?;
        layer.frozen = r.frozen;
        Ok(layer)
    }
}

impl DgLayer {
    pub fn new(task_id: usize, weights: DenseMatrix, rbfs: Vec<RbfParams>) -> Result<Self> {
        let (d_out, d_in) = weights.shape();
        let groups = rbfs.len();
        if groups == 0 || groups > d_in {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= groups <= d_in, got groups={groups}, d_in={d_in}"
            )));
        }
        if !weights.is_finite() {
            return Err(Error::NonFinite {
                context: "DgLayer weights",
                index: None,
            });
        }
        if let Some(i) = rbfs.iter().position(|p| !(p.center.is_finite() && p.width.is_finite())) {
            return Err(Error::NonFinite {
                context: "DgLayer RBF parameters",
                index: Some(i),
            });
        }
        let rbfs = rbfs
            .into_iter()
            .map(|p| RbfParams::new(p.center, p.width))
            .collect();
        Ok(Self {
            task_id,
            d_in,
            d_out,
            groups,
            weights,
            rbfs,
            frozen: false,
        })
    }

    /// Places each group's Gaussian over `features`: center = mean of the
    /// group's columns, width = their standard deviation clamped to
    /// `[SIGMA_INIT_MIN, SIGMA_INIT_MAX]`.
    pub fn from_features(
        task_id: usize,
        d_out: usize,
        groups: usize,
        features: &DenseMatrix,
        init: WeightInit,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let d_in = features.cols();
        if features.rows() == 0 {
            return Err(Error::InvalidArgument(
                "cannot initialise a DG-Layer from an empty feature sample".into(),
            ));
        }
        if groups == 0 || groups > d_in {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= groups <= d_in, got groups={groups}, d_in={d_in}"
            )));
        }
        let mut weights = DenseMatrix::zeros(d_out, d_in);
        if let WeightInit::Uniform(a) = init {
            for w in weights.as_mut_slice() {
                *w = rng.uniform_range(-a, a);
            }
        }
        let rbfs = (0..groups)
            .map(|g| {
                let (mean, std) = group_stats(features, group_range(d_in, groups, g));
                RbfParams::new(mean, std.clamp(SIGMA_INIT_MIN, SIGMA_INIT_MAX))
            })
            .collect();
        Self::new(task_id, weights, rbfs)
    }

    pub fn task_id(&self) -> usize {
        self.task_id
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn group_width(&self) -> usize {
        self.d_in / self.groups
    }

    pub fn weights(&self) -> &DenseMatrix {
        &self.weights
    }

    pub fn rbfs(&self) -> &[RbfParams] {
        &self.rbfs
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    #[inline]
    pub fn group_of(&self, dim: usize) -> usize {
        (dim / self.group_width()).min(self.groups - 1)
    }

    pub fn group_range(&self, group: usize) -> Range<usize> {
        group_range(self.d_in, self.groups, group)
    }

    /// Per-dimension activations `phi_{group(i)}(x_i)`.
    pub fn activations(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("DgLayer input", self.d_in, x.len())?;
        Ok(x
            .iter()
            .enumerate()
            .map(|(i, &xi)| rbf_eval(xi, self.rbfs[self.group_of(i)]))
            .collect())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let phi = self.activations(x)?;
        self.weights.mul_vec(&phi)
    }

    /// Returns `(dL/dx, dL/dθ)` for upstream gradient `grad_out`.
    pub fn backward(&self, x: &[f64], grad_out: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len("DgLayer input", self.d_in, x.len())?;
        check_len("DgLayer upstream gradient", self.d_out, grad_out.len())?;
        let mut grad = vec![0.0; self.num_params()];
        let mut grad_x = vec![0.0; self.d_in];
        let (gw, rest) = grad.split_at_mut(self.d_out * self.d_in);
        let (gc, gs) = rest.split_at_mut(self.groups);
        for i in 0..self.d_in {
            let g = self.group_of(i);
            let p = self.rbfs[g];
            let phi = rbf_eval(x[i], p);
            let mut g_phi = 0.0;
            for (o, &go) in grad_out.iter().enumerate() {
                gw[o * self.d_in + i] += go * phi;
                g_phi += go * self.weights.get(o, i);
            }
            let d = rbf_grad(x[i], p);
            grad_x[i] = g_phi * d.dx;
            gc[g] += g_phi * d.dcenter;
            gs[g] += g_phi * d.dwidth;
        }
        Ok((grad_x, grad))
    }
}

impl Parameterized for DgLayer {
    fn num_params(&self) -> usize {
        self.d_out * self.d_in + 2 * self.groups
    }

    fn params(&self) -> Vec<f64> {
        let mut p = self.weights.as_slice().to_vec();
        p.extend(self.rbfs.iter().map(|r| r.center));
        p.extend(self.rbfs.iter().map(|r| r.width));
        p
    }

    /// Widths are clamped to [`SIGMA_MIN`]. Frozen layers refuse updates.
    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if self.frozen {
            return Err(Error::InvalidArgument(format!(
                "DG-Layer for task {} is frozen",
                self.task_id
            )));
        }
        check_len("DgLayer parameters", self.num_params(), params.len())?;
        crate::numcore::ensure_finite(params, "DgLayer parameters")?;
        let nw = self.d_out * self.d_in;
        self.weights.as_mut_slice().copy_from_slice(&params[..nw]);
        for (g, r) in self.rbfs.iter_mut().enumerate() {
            r.center = params[nw + g];
            r.width = params[nw + self.groups + g].max(SIGMA_MIN);
        }
        Ok(())
    }
}

pub(crate) fn group_range(d_in: usize, groups: usize, group: usize) -> Range<usize> {
    let width = d_in / groups;
    let start = group * width;
    let end = if group + 1 == groups { d_in } else { start + width };
    start..end
}

/// Mean and population standard deviation over all entries in `cols`.
fn group_stats(features: &DenseMatrix, cols: Range<usize>) -> (f64, f64) {
    let n = (features.rows() * cols.len()) as f64;
    let mean = features.row_iter().map(|r| r[cols.clone()].iter().sum::<f64>()).sum::<f64>() / n;
    let var = features
        .row_iter()
        .map(|r| r[cols.clone()].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>())
        .sum::<f64>()
        / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{finite_diff_grad, relative_error};

    fn two_in_one_out() -> DgLayer {
        DgLayer::new(
            1,
            DenseMatrix::from_rows(&[[1.0, 1.0]]).unwrap(),
            vec![RbfParams::new(0.0, 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn hand_forward_values() {
        let l = two_in_one_out();
        assert_eq!(l.forward(&[0.0, 0.0]).unwrap(), vec![2.0]);
        assert!((l.forward(&[0.0, 10.0]).unwrap()[0] - 1.0).abs() < 1e-20);
    }

    #[test]
    fn zero_weights_give_zero() {
        let l = DgLayer::new(1, DenseMatrix::zeros(3, 4), vec![RbfParams::new(0.2, 0.5); 2]).unwrap();
        assert_eq!(l.forward(&[1.0, -2.0, 3.0, 0.1]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            two_in_one_out().forward(&[1.0]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn remainder_goes_to_last_group() {
        let l = DgLayer::new(1, DenseMatrix::zeros(1, 7), vec![RbfParams::new(0.0, 1.0); 3]).unwrap();
        let groups: Vec<usize> = (0..7).map(|i| l.group_of(i)).collect();
        assert_eq!(groups, vec![0, 0, 1, 1, 2, 2, 2]);
        assert_eq!(l.group_range(2), 4..7);
        assert!(DgLayer::new(1, DenseMatrix::zeros(1, 2), vec![RbfParams::new(0.0, 1.0); 3]).is_err());
    }

    #[test]
    fn init_from_features_uses_group_statistics() {
        let f = DenseMatrix::from_rows(&[[1.0, 3.0, 10.0, 10.0], [3.0, 5.0, 10.0, 10.0]]).unwrap();
        let mut rng = RngStream::new(0);
        let l = DgLayer::from_features(2, 1, 2, &f, WeightInit::Uniform(0.1), &mut rng).unwrap();
        assert_eq!(l.rbfs()[0].center, 3.0);
        // entries 1,3,3,5: population std = sqrt(2)
        assert!((l.rbfs()[0].width - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(l.rbfs()[1], RbfParams::new(10.0, SIGMA_INIT_MIN));
        assert!(l.weights().as_slice().iter().all(|w| w.abs() < 0.1));
        assert!(DgLayer::from_features(1, 1, 1, &DenseMatrix::zeros(0, 4), WeightInit::Zero, &mut rng).is_err());
    }

    #[test]
    fn group_sharing_moves_whole_group() {
        let mut rng = RngStream::new(5);
        let f = DenseMatrix::from_vec(8, 6, (0..48).map(|_| rng.normal()).collect()).unwrap();
        let mut l = DgLayer::from_features(1, 2, 3, &f, WeightInit::Uniform(0.1), &mut rng).unwrap();
        let x = [0.3; 6];
        let before = l.activations(&x).unwrap();
        let mut p = l.params();
        let nw = 2 * 6;
        p[nw + 1] += 0.25; // center of group 1
        l.set_params(&p).unwrap();
        let after = l.activations(&x).unwrap();
        let delta: Vec<f64> = before.iter().zip(&after).map(|(a, b)| b - a).collect();
        assert_eq!(delta[0], 0.0);
        assert_eq!(delta[1], 0.0);
        assert_ne!(delta[2], 0.0);
        assert_eq!(delta[2], delta[3]);
        assert_eq!(delta[4], 0.0);
    }

    #[test]
    fn frozen_layer_rejects_updates_and_widths_clamp() {
        let mut l = two_in_one_out();
        let mut p = l.params();
        p[3] = -1.0;
        l.set_params(&p).unwrap();
        assert_eq!(l.rbfs()[0].width, SIGMA_MIN);
        l.freeze();
        assert!(l.set_params(&p).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = RngStream::new(21);
        for trial in 0..100 {
            let d_in = 2 + trial % 6;
            let d_out = 1 + trial % 3;
            let groups = 1 + trial % d_in;
            let f = DenseMatrix::from_vec(6, d_in, (0..6 * d_in).map(|_| rng.normal()).collect()).unwrap();
            let mut layer = DgLayer::from_features(1, d_out, groups, &f, WeightInit::Uniform(0.5), &mut rng).unwrap();
            let mut p = layer.params();
            for g in 0..groups {
                p[d_out * d_in + groups + g] = rng.uniform_range(0.3, 1.5);
            }
            layer.set_params(&p).unwrap();
            let x: Vec<f64> = (0..d_in).map(|_| rng.normal()).collect();
            let gy: Vec<f64> = (0..d_out).map(|_| rng.normal()).collect();
            let loss = |l: &DgLayer, x: &[f64]| -> f64 {
                l.forward(x).unwrap().iter().zip(&gy).map(|(a, b)| a * b).sum()
            };
            let (gx, gp) = layer.backward(&x, &gy).unwrap();

            let fd_x = finite_diff_grad(|v| loss(&layer, v), &x, 1e-5).unwrap();
            let fd_p = finite_diff_grad(
                |v| {
                    let mut l = layer.clone();
                    l.set_params(v).unwrap();
                    loss(&l, &x)
                },
                &layer.params(),
                1e-5,
            )
            .unwrap();
            for (a, b) in gx.iter().chain(&gp).zip(fd_x.iter().chain(&fd_p)) {
                assert!(relative_error(*a, *b) < 1e-4 || (a - b).abs() < 1e-8, "trial {trial}: {a} vs {b}");
            }
        }
    }
}
