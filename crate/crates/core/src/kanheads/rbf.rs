use serde::{Deserialize, Serialize};

/// Lower bound enforced on every RBF width after an update.
pub const SIGMA_MIN: f64 = 1e-3;

/// Gaussian bump `exp(-(x - c)^2 / (2 sigma^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbfParams {
    pub center: f64,
    pub width: f64,
}

impl RbfParams {
    /// Width is clamped to [`SIGMA_MIN`].
    pub fn new(center: f64, width: f64) -> Self {
        Self {
            center,
            width: width.max(SIGMA_MIN),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbfGrad {
    pub dx: f64,
    pub dcenter: f64,
    pub dwidth: f64,
}

#[inline]
pub fn rbf_eval(x: f64, p: RbfParams) -> f64 {
    let u = x - p.center;
    (-(u * u) / (2.0 * p.width * p.width)).exp()
}

#[inline]
pub fn rbf_grad(x: f64, p: RbfParams) -> RbfGrad {
    let u = x - p.center;
    let s2 = p.width * p.width;
    let phi = (-(u * u) / (2.0 * s2)).exp();
    let dx = -u / s2 * phi;
    RbfGrad {
        dx,
        dcenter: -dx,
        dwidth: u * u / (s2 * p.width) * phi,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{finite_diff_grad, relative_error, RngStream};

    #[test]
    fn peak_and_one_sigma() {
        let p = RbfParams::new(0.3, 1.0);
        assert_eq!(rbf_eval(0.3, p), 1.0);
        assert!((rbf_eval(1.3, p) - 0.606_530_659_712_633_4).abs() < 1e-12);
        let far = RbfParams::new(-2.0, 0.5);
        assert!(rbf_eval(-2.0 + 10.0 * 0.5, far) < 2e-22);
    }

    #[test]
    fn grad_at_peak_and_one_sigma() {
        let g = rbf_grad(1.5, RbfParams::new(1.5, 0.7));
        assert_eq!((g.dx, g.dcenter, g.dwidth), (0.0, 0.0, 0.0));
        let g = rbf_grad(1.0, RbfParams::new(0.0, 1.0));
        assert!((g.dx + 0.606_530_659_712_633_4).abs() < 1e-12);
        assert_eq!(g.dx, -g.dcenter);
    }

    #[test]
    fn width_is_clamped() {
        assert_eq!(RbfParams::new(0.0, 0.0).width, SIGMA_MIN);
        assert_eq!(RbfParams::new(0.0, -3.0).width, SIGMA_MIN);
    }

    #[test]
    fn grad_matches_finite_differences() {
        let mut rng = RngStream::new(11);
        for _ in 0..200 {
            let c = rng.uniform_range(-3.0, 3.0);
            let s = rng.uniform_range(0.1, 2.0);
            let x = c + s * rng.uniform_range(-4.0, 4.0);
            let g = rbf_grad(x, RbfParams::new(c, s));
            let fd = finite_diff_grad(
                |v| rbf_eval(v[0], RbfParams { center: v[1], width: v[2] }),
                &[x, c, s],
                1e-6,
            )
            .unwrap();
            for (a, b) in [g.dx, g.dcenter, g.dwidth].iter().zip(&fd) {
                // absolute floor: FD noise near 0 is ~1e-10
                assert!(relative_error(*a, *b) < 1e-6 || (a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }
}
