use std::f64::consts::PI;

use num_complex::Complex64;

use super::{baseline_stats, outer_indices};
use crate::error::{Error, Result};
use crate::model::{resonator_factor, FrequencyTrace, LinearParams};

/// Minimum dip depth relative to the baseline, independent of noise.
const MIN_RELATIVE_DEPTH: f64 = 1e-4;

/// Initial guess for [`super::fit_linear`].
///
/// Magnitude first: resonance at the (lightly smoothed) `|S21|` minimum,
/// total loss from the full width at half depth of `|S21|²`, coupling ratio
/// from the dip depth. Then phase: the estimated resonance is divided out
/// and a line fitted through the unwrapped off-resonant phase gives the
/// delay and phase offset. The asymmetry starts at zero.
pub fn estimate_initial(trace: &FrequencyTrace) -> Result<LinearParams> {
    let n = trace.len();
    if n < 8 {
        return Err(Error::InsufficientPoints { needed: 8, got: n });
    }
    let freqs = trace.freqs();
    let s21 = trace.s21();
    let base = baseline_stats(trace);
    let amplitude = base.median;

    let power: Vec<f64> = smooth(&s21.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>());
    let (i_min, &p_min) = power
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let min_mag = p_min.max(0.0).sqrt();
    let depth = amplitude - min_mag;
    let threshold = (3.0 * base.sigma).max(MIN_RELATIVE_DEPTH * amplitude);
    if !(depth > threshold) {
        return Err(Error::NoResonance { depth, threshold });
    }

    let half = 0.5 * (amplitude * amplitude + p_min);
    let left = crossing(freqs, &power, i_min, half, Side::Left);
    let right = crossing(freqs, &power, i_min, half, Side::Right);
    let step = (freqs[n - 1] - freqs[0]) / (n - 1) as f64;
    let fwhm = (right - left).max(2.0 * step);
    let f_r = freqs[i_min];
    let total = fwhm / f_r;
    let ratio = (1.0 - min_mag / amplitude).clamp(1e-3, 0.98);
    let coupling_loss = ratio * total;
    let internal_loss = (1.0 - ratio) * total;

    // phase with the estimated resonance divided out
    let phases: Vec<f64> = unwrap(
        &freqs
            .iter()
            .zip(s21)
            .map(|(&f, z)| {
                let detuning = (f - f_r) / (f_r * total);
                (z / resonator_factor(ratio, 0.0, 1.0, detuning)).arg()
            })
            .collect::<Vec<_>>(),
    );
    let outer = outer_indices(n);
    let (slope, _) = line_fit(
        &outer.iter().map(|&i| freqs[i] - f_r).collect::<Vec<_>>(),
        &outer.iter().map(|&i| phases[i]).collect::<Vec<_>>(),
    );
    let electric_delay = slope / (2.0 * PI);
    let mean_phasor: Complex64 = outer
        .iter()
        .map(|&i| Complex64::from_polar(1.0, phases[i] - 2.0 * PI * freqs[i] * electric_delay))
        .sum();
    let phase_offset = mean_phasor.arg();

    Ok(LinearParams {
        amplitude,
        electric_delay,
        phase_offset,
        fano_asymmetry: 0.0,
        resonant_freq: f_r,
        internal_loss,
        coupling_loss,
    })
}

fn smooth(values: &[f64]) -> Vec<f64> {
    const HALF: usize = 2;
    if values.len() < 50 {
        return values.to_vec();
    }
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(HALF);
            let hi = (i + HALF + 1).min(values.len());
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

#[derive(Clone, Copy)]
enum Side {
    Left,
    Right,
}

/// Frequency where `values` first rises above `level` walking away from
/// `start`, linearly interpolated; the trace edge if it never does.
fn crossing(freqs: &[f64], values: &[f64], start: usize, level: f64, side: Side) -> f64 {
    let n = values.len();
    let mut i = start;
    loop {
        let next = match side {
            Side::Left if i > 0 => i - 1,
            Side::Right if i + 1 < n => i + 1,
            _ => return freqs[i],
        };
        if values[next] >= level {
            let t = (level - values[i]) / (values[next] - values[i]);
            return freqs[i] + t * (freqs[next] - freqs[i]);
        }
        i = next;
    }
}

pub(crate) fn unwrap(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    let mut offset = 0.0;
    let mut prev = match phases.first() {
        Some(&p) => p,
        None => return out,
    };
    out.push(prev);
    for &p in &phases[1..] {
        let mut d = p - prev;
        while d > PI {
            d -= 2.0 * PI;
            offset -= 2.0 * PI;
        }
        while d < -PI {
            d += 2.0 * PI;
            offset += 2.0 * PI;
        }
        out.push(p + offset);
        prev = p;
    }
    out
}

/// Ordinary least-squares line `y = a x + b`; returns `(a, b)`.
pub(crate) fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}
