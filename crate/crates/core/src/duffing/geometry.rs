use num_complex::Complex64;

use crate::circle::fit_circle;
use crate::error::{Error, Result};
use crate::linear_fit::baseline_stats;
use crate::model::{FrequencyTrace, LinearParams};

/// Divides out the environment `A e^{i(2π f t_d + φ)}` of `env`, leaving the
/// bare resonator response (unit off-resonant baseline).
pub fn remove_environment(trace: &FrequencyTrace, env: &LinearParams) -> Result<FrequencyTrace> {
    env.validate()?;
    let s21: Vec<Complex64> = trace
        .freqs()
        .iter()
        .zip(trace.s21())
        .map(|(&f, z)| z / env.environment(f))
        .collect();
    FrequencyTrace::new(trace.freqs().to_vec(), s21, trace.meta.clone())
}

/// Non-circularity of the IQ trace: after removing the environment of
/// `linear_fit`, the largest radial deviation from the best-fit circle
/// divided by its radius.
///
/// Returns [`Error::LowSignal`] when the circle radius is below three times
/// the off-resonant noise level (at least 1e-9 of the baseline) or no
/// circle can be fitted.
pub fn ellipticity_metric(trace: &FrequencyTrace, linear_fit: &LinearParams) -> Result<f64> {
    let bare = remove_environment(trace, linear_fit)?;
    let base = baseline_stats(&bare);
    let floor = (3.0 * base.sigma).max(1e-9 * base.median);
    let circle = fit_circle(bare.s21()).ok_or(Error::LowSignal { radius: 0.0, floor })?;
    if !(circle.radius > floor) {
        return Err(Error::LowSignal {
            radius: circle.radius,
            floor,
        });
    }
    Ok(circle.max_radial_deviation(bare.s21()) / circle.radius)
}
