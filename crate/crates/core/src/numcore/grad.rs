use crate::{Error, Result};

/// Central-difference gradient `(f(x + h e_i) - f(x - h e_i)) / 2h`.
///
/// Used as the independent oracle for every analytic gradient in the crate.
pub fn finite_diff_grad<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe);
        probe[i] = orig - h;
        let minus = f(&probe);
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite {
                context: "finite_diff_grad objective",
                index: Some(i),
            });
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn square_at_three() {
        let g = finite_diff_grad(|x| x[0] * x[0], &[3.0], 1e-4).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-7);
    }

    #[test]
    fn constant_and_sum() {
        let g = finite_diff_grad(|_| 4.2, &[1.0, -2.0, 3.0], 1e-4).unwrap();
        assert_eq!(g, vec![0.0; 3]);
        let g = finite_diff_grad(|x| x.iter().sum(), &[1.0, -2.0, 3.0], 1e-4).unwrap();
        assert!(g.iter().all(|v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn non_finite_names_coordinate() {
        let err = finite_diff_grad(|x| if x[1] > 0.5 { f64::NAN } else { 0.0 }, &[0.0, 0.5], 1e-4)
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: Some(1), .. }));
        assert!(finite_diff_grad(|_| 0.0, &[0.0], 0.0).is_err());
    }

    proptest! {
        // Quadratics are integrated exactly by the central difference, up to rounding.
        #[test]
        fn quadratic_matches_analytic(
            a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0,
            x in -10.0f64..10.0, y in -10.0f64..10.0,
        ) {
            let f = |v: &[f64]| a * v[0] * v[0] + b * v[0] * v[1] + c * v[1] + 1.5;
            let g = finite_diff_grad(f, &[x, y], 1e-4).unwrap();
            prop_assert!((g[0] - (2.0 * a * x + b * y)).abs() < 1e-6);
            prop_assert!((g[1] - (b * x + c)).abs() < 1e-6);
        }
    }
}
