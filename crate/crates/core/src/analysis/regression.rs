use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Least-squares line `capacity = slope * r_s + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n: usize,
    /// `observed - fitted`, in input order.
    pub residuals: Vec<f64>,
    /// Resistance range the fit was built on.
    pub r_min: f64,
    pub r_max: f64,
}

impl ScreeningFit {
    pub fn predict(&self, r_s: f64) -> f64 {
        self.slope * r_s + self.intercept
    }
}

/// Ordinary least squares over `(r_s, capacity_ah)` pairs. Sums are taken
/// about the means, which keeps the small resistances well conditioned.
pub fn fit_capacity_resistance(points: &[(f64, f64)]) -> Result<ScreeningFit> {
    let n = points.len();
    if n < 2 {
        return Err(Error::Insufficient(format!("{n} point(s); a line needs at least 2")));
    }
    if points.iter().any(|(r, q)| !r.is_finite() || !q.is_finite()) {
        return Err(Error::Numeric("non-finite fit input".into()));
    }
    let nf = n as f64;
    let mean_r = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_q = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(r, q) in points {
        let dx = r - mean_r;
        let dy = q - mean_q;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::Degenerate("every resistance is identical; slope undefined".into()));
    }
    let slope = sxy / sxx;
    let intercept = mean_q - slope * mean_r;
    let residuals: Vec<f64> = points.iter().map(|&(r, q)| q - (slope * r + intercept)).collect();
    let ss_res: f64 = residuals.iter().map(|e| e * e).sum();
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    let r_min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let r_max = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(ScreeningFit {
        slope,
        intercept,
        r_squared,
        n,
        residuals,
        r_min,
        r_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn three_point_hand_solution() {
        // slope -40, intercept 35/6, R^2 = 48/49, residuals (-1/30, 1/15, -1/30)
        let fit = fit_capacity_resistance(&[(0.03, 4.6), (0.04, 4.3), (0.05, 3.8)]).unwrap();
        assert_abs_diff_eq!(fit.slope, -40.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.intercept, 35.0 / 6.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.r_squared, 48.0 / 49.0, epsilon = 1e-12);
        for (got, want) in fit.residuals.iter().zip([-1.0 / 30.0, 1.0 / 15.0, -1.0 / 30.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        assert_eq!((fit.r_min, fit.r_max, fit.n), (0.03, 0.05, 3));
    }

    #[test]
    fn exact_line_has_unit_r_squared() {
        let pts: Vec<_> = (0..13).map(|k| {
            let r = 0.02 + 0.003 * k as f64;
            (r, 5.8 - 40.0 * r)
        }).collect();
        let fit = fit_capacity_resistance(&pts).unwrap();
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.slope, -40.0, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            fit_capacity_resistance(&[(0.03, 4.0), (0.03, 4.5)]),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(fit_capacity_resistance(&[(0.03, 4.0)]), Err(Error::Insufficient(_))));
        assert!(fit_capacity_resistance(&[(0.03, f64::NAN), (0.04, 1.0)]).is_err());
    }

    #[test]
    fn constant_capacity_is_a_perfect_flat_fit() {
        let fit = fit_capacity_resistance(&[(0.03, 4.0), (0.04, 4.0), (0.05, 4.0)]).unwrap();
        assert_eq!(fit.slope, 0.0);
        assert_eq!(fit.r_squared, 1.0);
    }

    proptest! {
        #[test]
        fn residuals_balance_and_r2_bounded(
            pts in prop::collection::vec((0.01f64..0.1, 2.0f64..5.5), 3..30)
        ) {
            let spread = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max)
                - pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
            prop_assume!(spread > 1e-6);
            let fit = fit_capacity_resistance(&pts).unwrap();
            let sum: f64 = fit.residuals.iter().sum();
            let weighted: f64 = fit.residuals.iter().zip(&pts).map(|(e, p)| e * p.0).sum();
            prop_assert!(sum.abs() < 1e-9);
            prop_assert!(weighted.abs() < 1e-10);
            prop_assert!((0.0..=1.0).contains(&fit.r_squared));
        }
    }
}
