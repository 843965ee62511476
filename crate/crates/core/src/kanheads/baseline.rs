//! Non-local baseline heads: a two-layer MLP and a GroupKAN with shared
//! rational activations per dimension group.

use serde::{Deserialize, Serialize};

use super::dg_layer::group_range;
use super::{check_len, silu, silu_grad, Parameterized};
use crate::numcore::{DenseMatrix, RngStream};
use crate::{Error, Result};

/// `affine -> SiLU -> affine`.
///
/// Layout: `w1 (hidden x d_in)`, `b1`, `w2 (d_out x hidden)`, `b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpRepr")]
pub struct MlpHead {
    w1: DenseMatrix,
    b1: Vec<f64>,
    w2: DenseMatrix,
    b2: Vec<f64>,
}

#[derive(Deserialize)]
struct MlpRepr {
    w1: DenseMatrix,
    b1: Vec<f64>,
    w2: DenseMatrix,
    b2: Vec<f64>,
}

impl TryFrom<MlpRepr> for MlpHead {
    type Error = Error;

    fn try_from(r: MlpRepr) -> Result<Self> {
        MlpHead::from_parts(r.w1, r.b1, r.w2, r.b2)
    }
}

impl MlpHead {
    pub const DEFAULT_HIDDEN: usize = 32;

    pub fn from_parts(w1: DenseMatrix, b1: Vec<f64>, w2: DenseMatrix, b2: Vec<f64>) -> Result<Self> {
        check_len("MLP b1", w1.rows(), b1.len())?;
        check_len("MLP w2 cols", w1.rows(), w2.cols())?;
        check_len("MLP b2", w2.rows(), b2.len())?;
        if w1.rows() == 0 || w1.cols() == 0 || w2.rows() == 0 {
            return Err(Error::InvalidArgument("MLP dimensions must be positive".into()));
        }
        crate::numcore::ensure_finite(&b1, "MLP b1")?;
        crate::numcore::ensure_finite(&b2, "MLP b2")?;
        Ok(Self { w1, b1, w2, b2 })
    }

    pub fn new(d_in: usize, hidden: usize, d_out: usize, rng: &mut RngStream) -> Result<Self> {
        if d_in == 0 || hidden == 0 || d_out == 0 {
            return Err(Error::InvalidArgument("MLP dimensions must be positive".into()));
        }
        let a1 = 1.0 / (d_in as f64).sqrt();
        let a2 = 1.0 / (hidden as f64).sqrt();
        let mut w1 = DenseMatrix::zeros(hidden, d_in);
        w1.as_mut_slice().iter_mut().for_each(|w| *w = rng.uniform_range(-a1, a1));
        let mut w2 = DenseMatrix::zeros(d_out, hidden);
        w2.as_mut_slice().iter_mut().for_each(|w| *w = rng.uniform_range(-a2, a2));
        Ok(Self {
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; d_out],
        })
    }

    pub fn zeros(d_in: usize, hidden: usize, d_out: usize) -> Self {
        Self {
            w1: DenseMatrix::zeros(hidden, d_in),
            b1: vec![0.0; hidden],
            w2: DenseMatrix::zeros(d_out, hidden),
            b2: vec![0.0; d_out],
        }
    }

    pub fn d_in(&self) -> usize {
        self.w1.cols()
    }

    pub fn d_out(&self) -> usize {
        self.w2.rows()
    }

    fn pre_activations(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.w1.mul_vec(x)?;
        z.iter_mut().zip(&self.b1).for_each(|(z, b)| *z += b);
        Ok(z)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let h: Vec<f64> = self.pre_activations(x)?.into_iter().map(silu).collect();
        let mut y = self.w2.mul_vec(&h)?;
        y.iter_mut().zip(&self.b2).for_each(|(y, b)| *y += b);
        Ok(y)
    }

    pub fn backward(&self, x: &[f64], grad_out: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len("MlpHead upstream gradient", self.w2.rows(), grad_out.len())?;
        let z = self.pre_activations(x)?;
        let (hidden, d_in) = self.w1.shape();
        let mut grad = vec![0.0; self.num_params()];
        let (gw1, rest) = grad.split_at_mut(hidden * d_in);
        let (gb1, rest) = rest.split_at_mut(hidden);
        let (gw2, gb2) = rest.split_at_mut(grad_out.len() * hidden);
        let mut g_h = vec![0.0; hidden];
        for (o, &go) in grad_out.iter().enumerate() {
            gb2[o] = go;
            for j in 0..hidden {
                gw2[o * hidden + j] = go * silu(z[j]);
                g_h[j] += go * self.w2.get(o, j);
            }
        }
        let mut grad_x = vec![0.0; d_in];
        for j in 0..hidden {
            let gz = g_h[j] * silu_grad(z[j]);
            gb1[j] = gz;
            for i in 0..d_in {
                gw1[j * d_in + i] = gz * x[i];
                grad_x[i] += gz * self.w1.get(j, i);
            }
        }
        Ok((grad_x, grad))
    }
}

impl Parameterized for MlpHead {
    fn num_params(&self) -> usize {
        self.w1.as_slice().len() + self.b1.len() + self.w2.as_slice().len() + self.b2.len()
    }

    fn params(&self) -> Vec<f64> {
        [self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2].concat()
    }

    fn set_params(&mut self, p: &[f64]) -> Result<()> {
        check_len("MlpHead parameters", self.num_params(), p.len())?;
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

/// Coefficients of `P(x) / Q(x)` with `P` cubic and
/// `Q = 1 + (q1 x)^2 + (q2 x^2)^2`, which is strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RationalCoeffs {
    pub numer: [f64; 4],
    pub denom: [f64; 2],
}

impl RationalCoeffs {
    pub const IDENTITY: Self = Self {
        numer: [0.0, 1.0, 0.0, 0.0],
        denom: [0.0, 0.0],
    };

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let [a0, a1, a2, a3] = self.numer;
        let [q1, q2] = self.denom;
        let x2 = x * x;
        let p = a0 + x * (a1 + x * (a2 + x * a3));
        let q = 1.0 + q1 * q1 * x2 + q2 * q2 * x2 * x2;
        p / q
    }

    /// `(dR/dx, dR/d[a0..a3, q1, q2])`.
    fn grad(&self, x: f64) -> (f64, [f64; 6]) {
        let [a0, a1, a2, a3] = self.numer;
        let [q1, q2] = self.denom;
        let x2 = x * x;
        let x4 = x2 * x2;
        let p = a0 + x * (a1 + x * (a2 + x * a3));
        let dp = a1 + x * (2.0 * a2 + 3.0 * a3 * x);
        let q = 1.0 + q1 * q1 * x2 + q2 * q2 * x4;
        let dq = 2.0 * q1 * q1 * x + 4.0 * q2 * q2 * x2 * x;
        let q_sq = q * q;
        let dx = (dp * q - p * dq) / q_sq;
        let coeffs = [
            1.0 / q,
            x / q,
            x2 / q,
            x2 * x / q,
            -p * 2.0 * q1 * x2 / q_sq,
            -p * 2.0 * q2 * x4 / q_sq,
        ];
        (dx, coeffs)
    }
}

/// Per-group shared rational activation followed by an affine map.
///
/// Layout: rational coefficients (6 per group), `w (d_out x d_in)`, `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GroupKanRepr")]
pub struct GroupKanHead {
    d_in: usize,
    groups: usize,
    rationals: Vec<RationalCoeffs>,
    w: DenseMatrix,
    b: Vec<f64>,
}

#[derive(Deserialize)]
struct GroupKanRepr {
    d_in: usize,
    groups: usize,
    rationals: Vec<RationalCoeffs>,
    w: DenseMatrix,
    b: Vec<f64>,
}

impl TryFrom<GroupKanRepr> for GroupKanHead {
    type Error = Error;

    fn try_from(r: GroupKanRepr) -> Result<Self> {
        let head = GroupKanHead::with_parts(r.w, r.b, r.rationals)?;
        check_len("GroupKanHead d_in", head.d_in, r.d_in)?;
        check_len("GroupKanHead groups", head.groups, r.groups)?;
        Ok(head)
    }
}

impl GroupKanHead {
    pub fn new(d_in: usize, d_out: usize, groups: usize, rng: &mut RngStream) -> Result<Self> {
        if groups == 0 || groups > d_in || d_out == 0 {
            return Err(Error::InvalidArgument(format!(
                "invalid GroupKAN dimensions d_in={d_in}, d_out={d_out}, groups={groups}"
            )));
        }
        // Near-identity start; q must be non-zero or its gradient vanishes.
        let init = RationalCoeffs {
            numer: [0.0, 1.0, 0.0, 0.0],
            denom: [0.1, 0.1],
        };
        let a = 1.0 / (d_in as f64).sqrt();
        let mut w = DenseMatrix::zeros(d_out, d_in);
        w.as_mut_slice().iter_mut().for_each(|v| *v = rng.uniform_range(-a, a));
        Ok(Self {
            d_in,
            groups,
            rationals: vec![init; groups],
            w,
            b: vec![0.0; d_out],
        })
    }

    pub fn with_parts(w: DenseMatrix, b: Vec<f64>, rationals: Vec<RationalCoeffs>) -> Result<Self> {
        let (d_out, d_in) = w.shape();
        let groups = rationals.len();
        if groups == 0 || groups > d_in {
            return Err(Error::InvalidArgument("GroupKAN needs 1 <= groups <= d_in".into()));
        }
        check_len("GroupKanHead bias", d_out, b.len())?;
        crate::numcore::ensure_finite(&b, "GroupKanHead bias")?;
        let coeffs: Vec<f64> = rationals.iter().flat_map(|r| r.numer.into_iter().chain(r.denom)).collect();
        crate::numcore::ensure_finite(&coeffs, "GroupKanHead rational coefficients")?;
        Ok(Self {
            d_in,
            groups,
            rationals,
            w,
            b,
        })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.w.rows()
    }

    fn group_of(&self, dim: usize) -> usize {
        (dim / (self.d_in / self.groups)).min(self.groups - 1)
    }

    pub fn group_range(&self, group: usize) -> std::ops::Range<usize> {
        group_range(self.d_in, self.groups, group)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("GroupKanHead input", self.d_in, x.len())?;
        let r: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, &xi)| self.rationals[self.group_of(i)].eval(xi))
            .collect();
        let mut y = self.w.mul_vec(&r)?;
        y.iter_mut().zip(&self.b).for_each(|(y, b)| *y += b);
        Ok(y)
    }

    pub fn backward(&self, x: &[f64], grad_out: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len("GroupKanHead input", self.d_in, x.len())?;
        check_len("GroupKanHead upstream gradient", self.w.rows(), grad_out.len())?;
        let mut grad = vec![0.0; self.num_params()];
        let (g_rat, rest) = grad.split_at_mut(6 * self.groups);
        let (gw, gb) = rest.split_at_mut(self.w.rows() * self.d_in);
        gb.copy_from_slice(grad_out);
        let mut grad_x = vec![0.0; self.d_in];
        for i in 0..self.d_in {
            let g = self.group_of(i);
            let rat = &self.rationals[g];
            let r = rat.eval(x[i]);
            let mut g_r = 0.0;
            for (o, &go) in grad_out.iter().enumerate() {
                gw[o * self.d_in + i] = go * r;
                g_r += go * self.w.get(o, i);
            }
            let (dx, dc) = rat.grad(x[i]);
            grad_x[i] = g_r * dx;
            for (k, d) in dc.iter().enumerate() {
                g_rat[6 * g + k] += g_r * d;
            }
        }
        Ok((grad_x, grad))
    }
}

impl Parameterized for GroupKanHead {
    fn num_params(&self) -> usize {
        6 * self.groups + self.w.as_slice().len() + self.b.len()
    }

    fn params(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self
            .rationals
            .iter()
            .flat_map(|r| r.numer.into_iter().chain(r.denom))
            .collect();
        p.extend_from_slice(self.w.as_slice());
        p.extend_from_slice(&self.b);
        p
    }

    fn set_params(&mut self, p: &[f64]) -> Result<()> {
        check_len("GroupKanHead parameters", self.num_params(), p.len())?;
        for (g, r) in self.rationals.iter_mut().enumerate() {
            let c = &p[6 * g..6 * g + 6];
            r.numer.copy_from_slice(&c[..4]);
            r.denom.copy_from_slice(&c[4..]);
        }
        let off = 6 * self.groups;
        let nw = self.w.as_slice().len();
        self.w.as_mut_slice().copy_from_slice(&p[off..off + nw]);
        self.b.copy_from_slice(&p[off + nw..]);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BaselineHead {
    Mlp(MlpHead),
    GroupKan(GroupKanHead),
}

impl BaselineHead {
    pub fn d_in(&self) -> usize {
        match self {
            BaselineHead::Mlp(h) => h.d_in(),
            BaselineHead::GroupKan(h) => h.d_in(),
        }
    }

    pub fn d_out(&self) -> usize {
        match self {
            BaselineHead::Mlp(h) => h.d_out(),
            BaselineHead::GroupKan(h) => h.d_out(),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            BaselineHead::Mlp(h) => h.forward(x),
            BaselineHead::GroupKan(h) => h.forward(x),
        }
    }

    pub fn backward(&self, x: &[f64], grad_out: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            BaselineHead::Mlp(h) => h.backward(x, grad_out),
            BaselineHead::GroupKan(h) => h.backward(x, grad_out),
        }
    }
}

impl Parameterized for BaselineHead {
    fn num_params(&self) -> usize {
        match self {
            BaselineHead::Mlp(h) => h.num_params(),
            BaselineHead::GroupKan(h) => h.num_params(),
        }
    }

    fn params(&self) -> Vec<f64> {
        match self {
            BaselineHead::Mlp(h) => h.params(),
            BaselineHead::GroupKan(h) => h.params(),
        }
    }

    fn set_params(&mut self, p: &[f64]) -> Result<()> {
        match self {
            BaselineHead::Mlp(h) => h.set_params(p),
            BaselineHead::GroupKan(h) => h.set_params(p),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{finite_diff_grad, relative_error};

    fn check_grads(head: &BaselineHead, x: &[f64], gy: &[f64]) {
        let loss = |h: &BaselineHead, x: &[f64]| -> f64 {
            h.forward(x).unwrap().iter().zip(gy).map(|(a, b)| a * b).sum()
        };
        let (gx, gp) = head.backward(x, gy).unwrap();
        let fd_x = finite_diff_grad(|v| loss(head, v), x, 1e-5).unwrap();
        let fd_p = finite_diff_grad(
            |v| {
                let mut h = head.clone();
                h.set_params(v).unwrap();
                loss(&h, x)
            },
            &head.params(),
            1e-5,
        )
        .unwrap();
        for (a, b) in gx.iter().chain(&gp).zip(fd_x.iter().chain(&fd_p)) {
            assert!(relative_error(*a, *b) < 1e-4 || (a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_mlp_gives_zero_logits() {
        let h = MlpHead::zeros(5, 8, 1);
        assert_eq!(h.forward(&[1.0, 2.0, 3.0, -4.0, 0.5]).unwrap(), vec![0.0]);
    }

    #[test]
    fn identity_rational_is_linear() {
        let mut rng = RngStream::new(4);
        let w = DenseMatrix::from_vec(2, 4, (0..8).map(|_| rng.normal()).collect()).unwrap();
        let b = vec![0.25, -0.5];
        let h = GroupKanHead::with_parts(w.clone(), b.clone(), vec![RationalCoeffs::IDENTITY; 2]).unwrap();
        let x = [0.3, -1.2, 2.5, 0.0];
        let y = h.forward(&x).unwrap();
        let lin = w.mul_vec(&x).unwrap();
        for o in 0..2 {
            assert!((y[o] - (lin[o] + b[o])).abs() < 1e-14);
        }
    }

    #[test]
    fn rational_denominator_is_positive() {
        let r = RationalCoeffs {
            numer: [0.1, -2.0, 0.3, 1.0],
            denom: [-3.0, 2.0],
        };
        for i in -100..100 {
            assert!(r.eval(i as f64 * 0.37).is_finite());
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = RngStream::new(8);
        for trial in 0..100 {
            let d_in = 2 + trial % 7;
            let groups = 1 + trial % d_in;
            let x: Vec<f64> = (0..d_in).map(|_| rng.normal()).collect();
            let gy = [rng.normal()];
            let mut mlp = MlpHead::new(d_in, 6, 1, &mut rng).unwrap();
            let mut p = mlp.params();
            p.iter_mut().for_each(|v| *v += 0.1 * rng.normal());
            mlp.set_params(&p).unwrap();
            check_grads(&BaselineHead::Mlp(mlp), &x, &gy);

            let mut gk = GroupKanHead::new(d_in, 1, groups, &mut rng).unwrap();
            let mut p = gk.params();
            p.iter_mut().for_each(|v| *v += 0.3 * rng.normal());
            gk.set_params(&p).unwrap();
            check_grads(&BaselineHead::GroupKan(gk), &x, &gy);
        }
    }
}
