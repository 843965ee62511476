use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{check_len, rbf_eval, DgLayer, Parameterized, WeightInit};
use crate::numcore::{DenseMatrix, RngStream};
use crate::{Error, Result};

/// Domain-group KAN detector: the sum of one [`DgLayer`] per learned task.
///
/// Layer `k` (1-based) carries task id `k`. Starting a new task freezes every
/// existing layer, so only the newest layer is trainable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DgkdRepr")]
pub struct DgkdHead {
    d_in: usize,
    d_out: usize,
    groups: usize,
    layers: Vec<DgLayer>,
}

#[derive(Deserialize)]
struct DgkdRepr {
    d_in: usize,
    d_out: usize,
    groups: usize,
    layers: Vec<DgLayer>,
}

impl TryFrom<DgkdRepr> for DgkdHead {
    type Error = Error;

    /// Restores a head; every layer but the last ends up frozen.
    fn try_from(r: DgkdRepr) -> Result<Self> {
        let mut head = DgkdHead::new(r.d_in, r.d_out, r.groups)?;
        for layer in r.layers {
            head.push_layer(layer)?;
        }
        Ok(head)
    }
}

impl DgkdHead {
    pub const WEIGHT_INIT: f64 = 0.1;

    pub fn new(d_in: usize, d_out: usize, groups: usize) -> Result<Self> {
        if d_in == 0 || d_out == 0 || groups == 0 || groups > d_in {
            return Err(Error::InvalidArgument(format!(
                "invalid DG-KD dimensions d_in={d_in}, d_out={d_out}, groups={groups}"
            )));
        }
        Ok(Self {
            d_in,
            d_out,
            groups,
            layers: Vec::new(),
        })
    }

    pub fn layers(&self) -> &[DgLayer] {
        &self.layers
    }

    pub fn active_task(&self) -> usize {
        self.layers.len()
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

    /// Freezes every existing layer and appends a trainable one whose
    /// Gaussians sit over `features` (rows are samples of the new task in the
    /// current feature space).
    pub fn add_task_layer(&mut self, features: &DenseMatrix, rng: &mut RngStream) -> Result<()> {
        if features.rows() == 0 {
            return Err(Error::InvalidArgument(
                "add_task_layer needs at least one feature row".into(),
            ));
        }
        check_len("add_task_layer feature width", self.d_in, features.cols())?;
        let layer = DgLayer::from_features(
            self.layers.len() + 1,
            self.d_out,
            self.groups,
            features,
            WeightInit::Uniform(Self::WEIGHT_INIT),
            rng,
        )?;
        self.layers.iter_mut().for_each(DgLayer::freeze);
        self.layers.push(layer);
        Ok(())
    }

    /// Appends an already-built layer (used when restoring or in tests).
    pub fn push_layer(&mut self, layer: DgLayer) -> Result<()> {
        check_len("push_layer d_in", self.d_in, layer.d_in())?;
        check_len("push_layer d_out", self.d_out, layer.d_out())?;
        check_len("push_layer groups", self.groups, layer.groups())?;
        self.layers.iter_mut().for_each(DgLayer::freeze);
        self.layers.push(layer);
        Ok(())
    }

    fn active(&self) -> Result<&DgLayer> {
        self.layers
            .last()
            .ok_or_else(|| Error::InvalidArgument("DG-KD head has no layers".into()))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.layers.is_empty() {
            return Err(Error::InvalidArgument("DG-KD head has no layers".into()));
        }
        let mut out = vec![0.0; self.d_out];
        for layer in &self.layers {
            for (o, v) in out.iter_mut().zip(layer.forward(x)?) {
                *o += v;
            }
        }
        Ok(out)
    }

    /// Input gradient flows through every layer; parameter gradient is for
    /// the active layer only.
    pub fn backward(&self, x: &[f64], grad_out: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let active = self.active()?;
        let mut grad_x = vec![0.0; self.d_in];
        let mut grad_p = Vec::new();
        for layer in &self.layers {
            let (gx, gp) = layer.backward(x, grad_out)?;
            grad_x.iter_mut().zip(gx).for_each(|(a, b)| *a += b);
            if std::ptr::eq(layer, active) {
                grad_p = gp;
            }
        }
        Ok((grad_x, grad_p))
    }

    /// Composite activation of `group` along `xs`: `sum_k wbar_k * phi_k(x)`,
    /// with `wbar_k` the mean of layer `k`'s weights over the group's columns.
    pub fn activation_profile(&self, group: usize, xs: &[f64]) -> Result<Vec<f64>> {
        if group >= self.groups {
            return Err(Error::InvalidArgument(format!(
                "group {group} out of range (head has {} groups)",
                self.groups
            )));
        }
        let terms: Vec<(f64, _)> = self
            .layers
            .iter()
            .map(|l| {
                let cols = l.group_range(group);
                let w = l.weights();
                let sum: f64 = (0..w.rows())
                    .flat_map(|r| cols.clone().map(move |c| (r, c)))
                    .map(|(r, c)| w.get(r, c))
                    .sum();
                (sum / (w.rows() * cols.len()) as f64, l.rbfs()[group])
            })
            .collect();
        Ok(xs
            .iter()
            .map(|&x| terms.iter().map(|&(wbar, p)| wbar * rbf_eval(x, p)).sum())
            .collect())
    }
}

impl Parameterized for DgkdHead {
    fn num_params(&self) -> usize {
        self.layers.last().map_or(0, Parameterized::num_params)
    }

    fn params(&self) -> Vec<f64> {
        self.layers.last().map(Parameterized::params).unwrap_or_default()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        match self.layers.last_mut() {
            Some(l) => l.set_params(params),
            None => check_len("DgkdHead parameters", 0, params.len()),
        }
    }
}

/// Writes `x,value,task_count` rows for an activation profile.
pub fn write_profile_csv<W: Write>(mut w: W, xs: &[f64], values: &[f64], task_count: usize) -> Result<()> {
    check_len("profile values", xs.len(), values.len())?;
    writeln!(w, "x,value,task_count")?;
    for (x, v) in xs.iter().zip(values) {
        writeln!(w, "{x},{v},{task_count}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kanheads::RbfParams;

    fn layer(task: usize, w: &[f64], center: f64, width: f64) -> DgLayer {
        DgLayer::new(
            task,
            DenseMatrix::from_vec(1, w.len(), w.to_vec()).unwrap(),
            vec![RbfParams::new(center, width)],
        )
        .unwrap()
    }

    #[test]
    fn empty_head_is_an_error() {
        let h = DgkdHead::new(2, 1, 1).unwrap();
        assert!(h.forward(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn single_layer_equals_layer_forward() {
        let l = layer(1, &[0.3, -0.7], 0.5, 0.8);
        let mut h = DgkdHead::new(2, 1, 1).unwrap();
        h.push_layer(l.clone()).unwrap();
        let x = [0.1, 0.9];
        assert_eq!(h.forward(&x).unwrap(), l.forward(&x).unwrap());
    }

    #[test]
    fn zero_weight_second_layer_adds_nothing() {
        let mut h = DgkdHead::new(2, 1, 1).unwrap();
        h.push_layer(layer(1, &[0.3, -0.7], 0.5, 0.8)).unwrap();
        let only_first = h.forward(&[0.2, 0.4]).unwrap();
        h.push_layer(layer(2, &[0.0, 0.0], 3.0, 0.2)).unwrap();
        assert_eq!(h.forward(&[0.2, 0.4]).unwrap(), only_first);
    }

    #[test]
    fn disjoint_regions_stay_within_tail_bound() {
        let mut h = DgkdHead::new(2, 1, 1).unwrap();
        h.push_layer(layer(1, &[0.5, 0.9], 0.0, 1.0)).unwrap();
        let first_only = h.clone();
        let w2 = [-0.8, 0.6];
        h.push_layer(layer(2, &w2, 20.0, 2.0)).unwrap();
        let x = [1.5, -2.0]; // within 6 sigma of layer 1, >= 9 sigma from layer 2
        let diff = (h.forward(&x).unwrap()[0] - first_only.forward(&x).unwrap()[0]).abs();
        assert!(diff <= 1.0 * 2.0 * 0.8 * 1.6e-8);
    }

    #[test]
    fn add_task_layer_freezes_and_centers_on_group_means() {
        let mut rng = RngStream::new(2);
        let mut h = DgkdHead::new(4, 1, 2).unwrap();
        let f1 = DenseMatrix::from_rows(&[[0.0, 1.0, 2.0, 3.0], [1.0, 2.0, 3.0, 5.0]]).unwrap();
        h.add_task_layer(&f1, &mut rng).unwrap();
        assert_eq!(h.layers().len(), 1);
        assert!(!h.layers()[0].is_frozen());

        let f2 = DenseMatrix::from_rows(&[[5.0, 6.0, -1.0, -2.0], [7.0, 8.0, -3.0, -4.0], [6.0, 6.5, 0.0, 0.5]]).unwrap();
        h.add_task_layer(&f2, &mut rng).unwrap();
        assert_eq!(h.active_task(), 2);
        assert!(h.layers()[0].is_frozen());
        assert!(!h.layers()[1].is_frozen());
        assert_eq!(h.layers()[1].task_id(), 2);

        // independent summation of the group means
        let mut g0 = 0.0;
        let mut g1 = 0.0;
        for r in 0..3 {
            g0 += f2.get(r, 0) + f2.get(r, 1);
            g1 += f2.get(r, 2) + f2.get(r, 3);
        }
        assert!((h.layers()[1].rbfs()[0].center - g0 / 6.0).abs() < 1e-9);
        assert!((h.layers()[1].rbfs()[1].center - g1 / 6.0).abs() < 1e-9);

        assert!(h.add_task_layer(&DenseMatrix::zeros(0, 4), &mut rng).is_err());
    }

    #[test]
    fn backward_only_reports_active_layer() {
        let mut rng = RngStream::new(9);
        let mut h = DgkdHead::new(3, 2, 3).unwrap();
        let f = DenseMatrix::from_rows(&[[0.0, 1.0, 2.0], [0.5, 0.1, 1.0]]).unwrap();
        h.add_task_layer(&f, &mut rng).unwrap();
        h.add_task_layer(&f, &mut rng).unwrap();
        let (gx, gp) = h.backward(&[0.1, 0.2, 0.3], &[1.0, -1.0]).unwrap();
        assert_eq!(gx.len(), 3);
        assert_eq!(gp.len(), h.layers()[1].num_params());
        assert_eq!(h.params(), h.layers()[1].params());
    }

    #[test]
    fn profile_values() {
        let mut h = DgkdHead::new(2, 1, 1).unwrap();
        let l1 = layer(1, &[0.4, 0.8], 1.0, 0.5);
        let l2 = layer(2, &[-0.2, 0.6], 4.0, 0.3);
        h.push_layer(l1.clone()).unwrap();
        let p1 = h.activation_profile(0, &[1.0]).unwrap();
        assert!((p1[0] - 0.6).abs() < 1e-15);

        let xs: Vec<f64> = (0..50).map(|i| -2.0 + 0.2 * i as f64).collect();
        let mut only2 = DgkdHead::new(2, 1, 1).unwrap();
        only2.push_layer(l2.clone()).unwrap();
        let a = h.activation_profile(0, &xs).unwrap();
        let b = only2.activation_profile(0, &xs).unwrap();
        h.push_layer(l2).unwrap();
        let both = h.activation_profile(0, &xs).unwrap();
        for i in 0..xs.len() {
            assert!((both[i] - (a[i] + b[i])).abs() < 1e-15);
        }
        let far = h.activation_profile(0, &[20.0]).unwrap();
        assert!(far[0].abs() < 2e-22 * (0.6 + 0.2));
        assert!(h.activation_profile(1, &xs).is_err());

        let mut buf = Vec::new();
        write_profile_csv(&mut buf, &xs[..2], &both[..2], 2).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,value,task_count\n-2,"));
        assert_eq!(text.lines().count(), 3);
    }
}
