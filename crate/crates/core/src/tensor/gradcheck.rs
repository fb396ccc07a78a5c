//! Central finite-difference check of analytic gradients.

use super::Tensor;

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is essentially zero are judged by absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Flat coordinate where `max_rel_error` occurred.
    pub worst_index: usize,
    pub checked: usize,
}

/// `|a − n| / max(|a|, |n|, REL_ERROR_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares `analytic` (∂f/∂x at `point`) against
/// `(f(x + eps·eᵢ) − f(x − eps·eᵢ)) / (2·eps)` for every coordinate.
pub fn gradient_check<F>(f: F, point: &Tensor<f64>, analytic: &Tensor<f64>, eps: f64) -> GradCheckReport
where
    F: FnMut(&Tensor<f64>) -> f64,
{
    let coords: Vec<usize> = (0..point.len()).collect();
    gradient_check_at(f, point, analytic, eps, &coords)
}

/// Same as [`gradient_check`] restricted to the listed coordinates.
pub fn gradient_check_at<F>(
    mut f: F,
    point: &Tensor<f64>,
    analytic: &Tensor<f64>,
    eps: f64,
    coords: &[usize],
) -> GradCheckReport
where
    F: FnMut(&Tensor<f64>) -> f64,
{
    assert_eq!(point.shape(), analytic.shape(), "gradient shape must match point");
    let mut probe = point.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        checked: 0,
    };
    for &i in coords {
        let x0 = point.data()[i];
        probe.data_mut()[i] = x0 + eps;
        let plus = f(&probe);
        probe.data_mut()[i] = x0 - eps;
        let minus = f(&probe);
        probe.data_mut()[i] = x0;

        let numeric = (plus - minus) / (2.0 * eps);
        let err = relative_error(analytic.data()[i], numeric);
        if err > report.max_rel_error || !err.is_finite() {
            report.max_rel_error = err;
            report.worst_index = i;
        }
        report.checked += 1;
    }
    report
}
