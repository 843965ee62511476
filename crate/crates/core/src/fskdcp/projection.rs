use serde::{Deserialize, Serialize};

use super::FeatureMemory;
use crate::kanheads::{DgLayer, Parameterized, WeightInit};
use crate::losses::align_loss;
use crate::numcore::{adam_step, AdamState, DenseMatrix, RngStream};
use crate::Result;

/// Residual drift-compensation map `p(f) = f + DgLayer(f)` from the previous
/// task's feature space into the current one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProjectionRepr")]
pub struct KdcpProjection {
    layer: DgLayer,
}

#[derive(Deserialize)]
struct ProjectionRepr {
    layer: DgLayer,
}

impl TryFrom<ProjectionRepr> for KdcpProjection {
    type Error = crate::Error;

    fn try_from(r: ProjectionRepr) -> Result<Self> {
        KdcpProjection::from_layer(r.layer)
    }
}

impl KdcpProjection {
    pub const DEFAULT_LR: f64 = 5e-4;

    /// Identity at creation: weights are zero, Gaussians sit over `reference`
    /// (previous-space features).
    pub fn new(task_id: usize, groups: usize, reference: &DenseMatrix, rng: &mut RngStream) -> Result<Self> {
        let layer = DgLayer::from_features(task_id, reference.cols(), groups, reference, WeightInit::Zero, rng)?;
        Ok(Self { layer })
    }

    pub fn from_layer(layer: DgLayer) -> Result<Self> {
        crate::kanheads::check_len("KdcpProjection layer", layer.d_in(), layer.d_out())?;
        Ok(Self { layer })
    }

    pub fn layer(&self) -> &DgLayer {
        &self.layer
    }

    pub fn dim(&self) -> usize {
        self.layer.d_in()
    }

    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.layer.forward(f)?;
        out.iter_mut().zip(f).for_each(|(o, x)| *o += x);
        Ok(out)
    }

    pub fn apply_batch(&self, f: &DenseMatrix) -> Result<DenseMatrix> {
        let mut out = DenseMatrix::zeros(f.rows(), f.cols());
        for r in 0..f.rows() {
            let p = self.apply(f.row(r))?;
            out.row_mut(r).copy_from_slice(&p);
        }
        Ok(out)
    }

    /// Gradient of `align_loss(p(teacher), student)` with respect to the
    /// projection parameters, plus the loss value.
    pub fn align_gradient(&self, teacher: &DenseMatrix, student: &DenseMatrix) -> Result<(f64, Vec<f64>)> {
        let projected = self.apply_batch(teacher)?;
        let (loss, g) = align_loss(&projected, student)?;
        let mut grad = vec![0.0; self.layer.num_params()];
        for r in 0..teacher.rows() {
            let (_, gp) = self.layer.backward(teacher.row(r), g.row(r))?;
            grad.iter_mut().zip(gp).for_each(|(a, b)| *a += b);
        }
        Ok((loss, grad))
    }

    /// One Adam step on the alignment loss. `teacher` and `student` are
    /// features of the same raw inputs under the frozen previous extractor and
    /// the current one. Returns the loss before the step.
    pub fn train_step(&mut self, teacher: &DenseMatrix, student: &DenseMatrix, opt: &mut AdamState) -> Result<f64> {
        let (loss, grad) = self.align_gradient(teacher, student)?;
        let mut p = self.layer.params();
        adam_step(&mut p, &grad, opt)?;
        self.layer.set_params(&p)?;
        Ok(loss)
    }

    pub fn optimizer(&self, lr: f64) -> AdamState {
        AdamState::new(self.layer.num_params(), lr)
    }
}

impl Parameterized for KdcpProjection {
    fn num_params(&self) -> usize {
        self.layer.num_params()
    }

    fn params(&self) -> Vec<f64> {
        self.layer.params()
    }

    fn set_params(&mut self, p: &[f64]) -> Result<()> {
        self.layer.set_params(p)
    }
}

/// Maps every stored row through `proj`; the memory moves one task forward.
pub fn project_memory(mem: &FeatureMemory, proj: &KdcpProjection) -> Result<FeatureMemory> {
    let mut out = mem.clone();
    out.features = proj.apply_batch(&mem.features)?;
    out.space = mem.space + 1;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{finite_diff_grad, relative_error};

    fn sample(rng: &mut RngStream, n: usize, d: usize, scale: f64) -> DenseMatrix {
        DenseMatrix::from_vec(n, d, (0..n * d).map(|_| scale * rng.normal()).collect()).unwrap()
    }

    #[test]
    fn identity_at_creation() {
        let mut rng = RngStream::new(1);
        let reference = sample(&mut rng, 30, 6, 1.0);
        let p = KdcpProjection::new(2, 3, &reference, &mut rng).unwrap();
        for _ in 0..20 {
            let f: Vec<f64> = (0..6).map(|_| 10.0 * rng.normal()).collect();
            assert_eq!(p.apply(&f).unwrap(), f);
        }
    }

    #[test]
    fn equal_batches_leave_params_unchanged() {
        let mut rng = RngStream::new(2);
        let t = sample(&mut rng, 16, 4, 1.0);
        let mut p = KdcpProjection::new(2, 2, &t, &mut rng).unwrap();
        let before = p.params();
        let mut opt = p.optimizer(KdcpProjection::DEFAULT_LR);
        let loss = p.train_step(&t, &t, &mut opt).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(p.params(), before);
    }

    #[test]
    fn learns_constant_shift() {
        let mut rng = RngStream::new(3);
        let d = 16;
        let teacher = sample(&mut rng, 64, d, 0.5);
        let shift: Vec<f64> = (0..d).map(|k| 0.05 + 0.01 * k as f64).collect();
        let mut student = teacher.clone();
        for r in 0..64 {
            student.row_mut(r).iter_mut().zip(&shift).for_each(|(v, s)| *v += s);
        }
        let mut p = KdcpProjection::new(2, 8, &teacher, &mut rng).unwrap();
        let mut opt = p.optimizer(KdcpProjection::DEFAULT_LR);
        for _ in 0..500 {
            p.train_step(&teacher, &student, &mut opt).unwrap();
        }
        let (loss, _) = align_loss(&p.apply_batch(&teacher).unwrap(), &student).unwrap();
        assert!(loss < 1e-3, "align loss {loss}");
    }

    #[test]
    fn align_gradient_matches_finite_differences() {
        let mut rng = RngStream::new(4);
        for _ in 0..100 {
            let t = sample(&mut rng, 5, 4, 1.0);
            let s = sample(&mut rng, 5, 4, 1.0);
            let mut p = KdcpProjection::new(2, 2, &t, &mut rng).unwrap();
            let params: Vec<f64> = p.params().iter().map(|v| v + 0.3 * rng.normal()).collect();
            let mut params = params;
            let n = params.len();
            params[n - 2..].iter_mut().for_each(|w| *w = w.abs().max(0.3));
            p.set_params(&params).unwrap();
            let (_, g) = p.align_gradient(&t, &s).unwrap();
            let fd = finite_diff_grad(
                |v| {
                    let mut q = p.clone();
                    q.set_params(v).unwrap();
                    align_loss(&q.apply_batch(&t).unwrap(), &s).unwrap().0
                },
                &p.params(),
                1e-6,
            )
            .unwrap();
            for (a, b) in g.iter().zip(&fd) {
                assert!(relative_error(*a, *b) < 1e-4 || (a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn project_memory_rowwise() {
        let mut rng = RngStream::new(5);
        let f = sample(&mut rng, 12, 4, 1.0);
        let mut mem = FeatureMemory::new(20, 4);
        let y: Vec<u8> = (0..12).map(|i| (i % 2) as u8).collect();
        mem.insert_task(0, &f, &y, None, 1).unwrap();

        let zero = KdcpProjection::new(2, 2, &f, &mut rng).unwrap();
        let same = project_memory(&mem, &zero).unwrap();
        assert_eq!(same.features(), mem.features());
        assert_eq!(same.space(), 2);

        let mut p = zero.clone();
        let params: Vec<f64> = p.params().iter().map(|v| v + 0.5 * rng.normal()).collect();
        p.set_params(&params).unwrap();
        let out = project_memory(&mem, &p).unwrap();
        assert_eq!(out.domain_labels(), mem.domain_labels());
        let layer = p.layer();
        for r in 0..mem.len() {
            let row = mem.features().row(r);
            for o in 0..4 {
                let mut acc = row[o];
                for i in 0..4 {
                    let rbf = layer.rbfs()[layer.group_of(i)];
                    let u = row[i] - rbf.center;
                    acc += layer.weights().get(o, i) * (-(u * u) / (2.0 * rbf.width * rbf.width)).exp();
                }
                assert!((out.features().get(r, o) - acc).abs() < 1e-12);
            }
        }
        let twice = project_memory(&out, &p).unwrap();
        assert_ne!(twice.features(), out.features());
        assert_eq!(twice.space(), 3);
    }
}
