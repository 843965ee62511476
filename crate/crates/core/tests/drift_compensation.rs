use kancfd::fskdcp::KdcpProjection;
use kancfd::kanheads::FeatureExtractor;
use kancfd::numcore::{DenseMatrix, RngStream};

const D_X: usize = 8;
const D_F: usize = 16;

fn raw_samples(n: usize, rng: &mut RngStream) -> DenseMatrix {
    DenseMatrix::from_vec(n, D_X, (0..n * D_X).map(|_| rng.normal()).collect()).unwrap()
}

/// Composition of Givens rotations by `angle` in the planes (0,1), (2,3), ...
/// followed by a translation.
fn affine_drift(f: &DenseMatrix, angle: f64, shift: &[f64]) -> DenseMatrix {
    let (s, c) = angle.sin_cos();
    let mut out = f.clone();
    for r in 0..f.rows() {
        let row = out.row_mut(r);
        for p in (0..D_F - 1).step_by(2) {
            let (a, b) = (row[p], row[p + 1]);
            row[p] = c * a - s * b;
            row[p + 1] = s * a + c * b;
        }
        row.iter_mut().zip(shift).for_each(|(v, t)| *v += t);
    }
    out
}

fn mean_distance(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let total: f64 = a
        .row_iter()
        .zip(b.row_iter())
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt())
        .sum();
    total / a.rows() as f64
}

fn run(seed: u64) -> (f64, f64) {
    let root = RngStream::new(seed);
    let extractor = FeatureExtractor::new(D_X, 32, D_F, &mut root.substream(1)).unwrap();
    let mut rng = root.substream(2);
    let shift: Vec<f64> = (0..D_F).map(|_| 0.3 * rng.normal()).collect();
    let angle = 0.15;

    let train_x = raw_samples(2000, &mut root.substream(3));
    let held_x = raw_samples(500, &mut root.substream(4));
    let teacher = extractor.forward_batch(&train_x).unwrap();
    let student = affine_drift(&teacher, angle, &shift);

    let mut proj = KdcpProjection::new(2, 8, &teacher, &mut root.substream(5)).unwrap();
    let mut opt = proj.optimizer(1e-2);
    let mut order_rng = root.substream(6);
    for _ in 0..30 {
        let order = order_rng.permutation(teacher.rows());
        for chunk in order.chunks(100) {
            proj.train_step(&teacher.select_rows(chunk), &student.select_rows(chunk), &mut opt)
                .unwrap();
        }
    }

    let held_teacher = extractor.forward_batch(&held_x).unwrap();
    let held_student = affine_drift(&held_teacher, angle, &shift);
    let before = mean_distance(&held_teacher, &held_student);
    let after = mean_distance(&proj.apply_batch(&held_teacher).unwrap(), &held_student);
    (before, after)
}

#[test]
fn projection_removes_most_of_an_affine_drift() {
    for seed in [11, 12, 13] {
        let (before, after) = run(seed);
        eprintln!("seed {seed}: before {before:.4} after {after:.4} ratio {:.4}", after / before);
        assert!(after < 0.1 * before, "seed {seed}: {after} vs {before}");
    }
}
