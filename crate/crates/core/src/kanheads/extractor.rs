use serde::{Deserialize, Serialize};

use super::{check_len, silu, silu_grad, Parameterized};
use crate::numcore::{DenseMatrix, RngStream};
use crate::{Error, Result};

/// Two affine layers with a SiLU in between: `d_x -> hidden -> d_f`.
///
/// Layout: `w1 (hidden x d_x)`, `b1`, `w2 (d_f x hidden)`, `b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ExtractorRepr")]
pub struct FeatureExtractor {
    w1: DenseMatrix,
    b1: Vec<f64>,
    w2: DenseMatrix,
    b2: Vec<f64>,
}

#[derive(Deserialize)]
struct ExtractorRepr {
    w1: DenseMatrix,
    b1: Vec<f64>,
    w2: DenseMatrix,
    b2: Vec<f64>,
}

impl TryFrom<ExtractorRepr> for FeatureExtractor {
    type Error = Error;

    fn try_from(r: ExtractorRepr) -> Result<Self> {
        FeatureExtractor::from_parts(r.w1, r.b1, r.w2, r.b2)
    }
}

/// Pre-activations of the hidden layer for one batch, row per sample.
#[derive(Debug, Clone)]
pub struct ExtractorCache {
    pre: DenseMatrix,
}

impl FeatureExtractor {
    pub const DEFAULT_HIDDEN: usize = 64;
    pub const DEFAULT_FEATURE_DIM: usize = 16;

    /// Uniform fan-in initialisation with zero biases.
    pub fn new(d_x: usize, hidden: usize, d_f: usize, rng: &mut RngStream) -> Result<Self> {
        Self::with_output_gain(d_x, hidden, d_f, 1.0, rng)
    }

    /// Like [`FeatureExtractor::new`] with the output layer's init range
    /// multiplied by `gain`, which sets the initial feature scale.
    pub fn with_output_gain(d_x: usize, hidden: usize, d_f: usize, gain: f64, rng: &mut RngStream) -> Result<Self> {
        if d_x == 0 || hidden == 0 || d_f == 0 {
            return Err(Error::InvalidArgument("extractor dimensions must be positive".into()));
        }
        if !(gain.is_finite() && gain > 0.0) {
            return Err(Error::InvalidArgument(format!("output gain must be positive, got {gain}")));
        }
        let a1 = (3.0 / d_x as f64).sqrt();
        let a2 = gain * (3.0 / hidden as f64).sqrt();
        let mut w1 = DenseMatrix::zeros(hidden, d_x);
        w1.as_mut_slice().iter_mut().for_each(|w| *w = rng.uniform_range(-a1, a1));
        let mut w2 = DenseMatrix::zeros(d_f, hidden);
        w2.as_mut_slice().iter_mut().for_each(|w| *w = rng.uniform_range(-a2, a2));
        Ok(Self {
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; d_f],
        })
    }

    pub fn from_parts(w1: DenseMatrix, b1: Vec<f64>, w2: DenseMatrix, b2: Vec<f64>) -> Result<Self> {
        check_len("extractor b1", w1.rows(), b1.len())?;
        check_len("extractor w2 cols", w1.rows(), w2.cols())?;
        check_len("extractor b2", w2.rows(), b2.len())?;
        if w1.rows() == 0 || w1.cols() == 0 || w2.rows() == 0 {
            return Err(Error::InvalidArgument("extractor dimensions must be positive".into()));
        }
        crate::numcore::ensure_finite(&b1, "extractor b1")?;
        crate::numcore::ensure_finite(&b2, "extractor b2")?;
        Ok(Self { w1, b1, w2, b2 })
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.w2.rows()
    }

    fn hidden_pre(&self, x: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.b1[j] + self.w1.row(j).iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    fn output(&self, pre: &[f64]) -> Vec<f64> {
        let h: Vec<f64> = pre.iter().map(|&z| silu(z)).collect();
        (0..self.feature_dim())
            .map(|k| self.b2[k] + self.w2.row(k).iter().zip(&h).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("extractor input", self.input_dim(), x.len())?;
        let mut pre = vec![0.0; self.hidden_dim()];
        self.hidden_pre(x, &mut pre);
        Ok(self.output(&pre))
    }

    /// Features for every row of `x`.
    pub fn forward_batch(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(self.forward_batch_cached(x)?.0)
    }

    pub fn forward_batch_cached(&self, x: &DenseMatrix) -> Result<(DenseMatrix, ExtractorCache)> {
        check_len("extractor input", self.input_dim(), x.cols())?;
        let mut pre = DenseMatrix::zeros(x.rows(), self.hidden_dim());
        let mut out = DenseMatrix::zeros(x.rows(), self.feature_dim());
        for r in 0..x.rows() {
            self.hidden_pre(x.row(r), pre.row_mut(r));
            let f = self.output(pre.row(r));
            out.row_mut(r).copy_from_slice(&f);
        }
        Ok((out, ExtractorCache { pre }))
    }

    /// Sums parameter gradients over the batch and returns per-row input
    /// gradients alongside.
    pub fn backward_batch(
        &self,
        x: &DenseMatrix,
        cache: &ExtractorCache,
        grad_out: &DenseMatrix,
    ) -> Result<(DenseMatrix, Vec<f64>)> {
        check_len("extractor backward rows", x.rows(), grad_out.rows())?;
        check_len("extractor backward cache rows", x.rows(), cache.pre.rows())?;
        check_len("extractor upstream gradient", self.feature_dim(), grad_out.cols())?;
        let (hidden, d_x) = self.w1.shape();
        let d_f = self.feature_dim();
        let mut grad = vec![0.0; self.num_params()];
        let mut grad_x = DenseMatrix::zeros(x.rows(), d_x);
        let mut g_h = vec![0.0; hidden];
        {
            let (gw1, rest) = grad.split_at_mut(hidden * d_x);
            let (gb1, rest) = rest.split_at_mut(hidden);
            let (gw2, gb2) = rest.split_at_mut(d_f * hidden);
            for r in 0..x.rows() {
                let pre = cache.pre.row(r);
                let go = grad_out.row(r);
                let xr = x.row(r);
                g_h.iter_mut().for_each(|v| *v = 0.0);
                for k in 0..d_f {
                    let gk = go[k];
                    if gk == 0.0 {
                        continue;
                    }
                    gb2[k] += gk;
                    let w2k = self.w2.row(k);
                    let gw2k = &mut gw2[k * hidden..(k + 1) * hidden];
                    for j in 0..hidden {
                        gw2k[j] += gk * silu(pre[j]);
                        g_h[j] += gk * w2k[j];
                    }
                }
                let gxr = grad_x.row_mut(r);
                for j in 0..hidden {
                    let gz = g_h[j] * silu_grad(pre[j]);
                    gb1[j] += gz;
                    let w1j = self.w1.row(j);
                    let gw1j = &mut gw1[j * d_x..(j + 1) * d_x];
                    for i in 0..d_x {
                        gw1j[i] += gz * xr[i];
                        gxr[i] += gz * w1j[i];
                    }
                }
            }
        }
        Ok((grad_x, grad))
    }
}

impl Parameterized for FeatureExtractor {
    fn num_params(&self) -> usize {
        self.w1.as_slice().len() + self.b1.len() + self.w2.as_slice().len() + self.b2.len()
    }

    fn params(&self) -> Vec<f64> {
        [self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2].concat()
    }

    fn set_params(&mut self, p: &[f64]) -> Result<()> {
        check_len("extractor parameters", self.num_params(), p.len())?;
        let mut off = 0;
        for dst in [
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
        ] {
            dst.copy_from_slice(&p[off..off + dst.len()]);
            off += dst.len();
        }
        Ok(())
    }
}
