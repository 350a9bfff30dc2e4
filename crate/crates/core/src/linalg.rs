use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{ensure, Error, Result};

/// Least-squares solution of `a x = b`; errors if `a` has deficient column rank.
pub(crate) fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    ensure(a.nrows() >= a.ncols(), || {
        Error::RankDeficient(format!("{} equations for {} unknowns", a.nrows(), a.ncols()))
    })?;
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-12 * a.nrows().max(a.ncols()) as f64;
    ensure(smax > 0.0 && svd.singular_values.min() > tol, || {
        Error::RankDeficient("design matrix is rank deficient".into())
    })?;
    svd.solve(b, tol).map_err(|e| Error::RankDeficient(e.to_string()))
}

/// Polynomial least-squares fit; returns coefficients (constant term
/// first) and the RMSE of the residuals.
pub(crate) fn polyfit(x: &[f64], y: &[f64], degree: usize) -> Result<(Vec<f64>, f64)> {
    ensure(x.len() == y.len(), || Error::Dimension("x and y differ in length".into()))?;
    ensure(x.len() > degree, || Error::InsufficientData {
        needed: degree + 1,
        got: x.len(),
    })?;
    // centre and scale the abscissa for conditioning
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let scale = x.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max).max(1e-300);
    let a = DMatrix::from_fn(x.len(), degree + 1, |i, j| ((x[i] - mean) / scale).powi(j as i32));
    let b = DVector::from_column_slice(y);
    let c = lstsq(&a, &b)?;
    let resid = &b - &a * &c;
    let rmse = (resid.norm_squared() / x.len() as f64).sqrt();
    // expand back to powers of x
    let mut coeffs = vec![0.0; degree + 1];
    for (j, cj) in c.iter().enumerate() {
        let s = cj / scale.powi(j as i32);
        // (x - mean)^j = sum_i C(j,i) x^i (-mean)^(j-i)
        let mut binom = 1.0;
        for i in 0..=j {
            coeffs[i] += s * binom * (-mean).powi((j - i) as i32);
            binom = binom * (j - i) as f64 / (i + 1) as f64;
        }
    }
    Ok((coeffs, rmse))
}

/// `ln det(m)` of a Hermitian positive definite matrix via Cholesky.
pub(crate) fn ln_det_hpd(m: DMatrix<Complex64>) -> Result<f64> {
    let n = m.nrows();
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Singularity("matrix is not positive definite".into()))?;
    let l = chol.l_dirty();
    Ok((0..n).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
pub(crate) fn std_pop(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn polyfit_recovers_quadratic() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v + 0.25 * v * v).collect();
        let (c, rmse) = polyfit(&x, &y, 2).unwrap();
        assert_abs_diff_eq!(c[0], 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c[1], -0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(c[2], 0.25, epsilon = 1e-10);
        assert!(rmse < 1e-9);
        assert!(polyfit(&[1.0, 2.0], &[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn lstsq_rank_deficient() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(lstsq(&a, &b), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn ln_det_small_rational() {
        // [[2, 1-i], [1+i, 3]] has determinant 6 - 2 = 4
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(2.0, 0.0),
                Complex64::new(1.0, -1.0),
                Complex64::new(1.0, 1.0),
                Complex64::new(3.0, 0.0),
            ],
        );
        assert_abs_diff_eq!(ln_det_hpd(m).unwrap(), 4f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
