use super::robust_location_scale;
use crate::error::{Error, Result};
use crate::model::FrequencyTrace;

/// Half-width of a window in estimated linewidths.
const HALF_WINDOW_LINEWIDTHS: f64 = 6.0;
const MIN_WINDOW_POINTS: usize = 10;

/// One resonance cut out of a wideband scan.
#[derive(Debug, Clone)]
pub struct ResonanceWindow {
    pub trace: FrequencyTrace,
    /// Frequency of the `|S21|` minimum, Hz.
    pub center: f64,
    /// Full width at half depth of `|S21|²`, Hz.
    pub linewidth: f64,
    /// Set when neighbouring dips were close enough that their windows had
    /// to be merged into this one.
    pub merged: bool,
}

#[derive(Debug, Clone, Copy)]
struct Window {
    lo: usize,
    hi: usize,
    center_idx: usize,
    linewidth: f64,
    merged: bool,
}

/// Splits a wideband scan into disjoint windows around its `|S21|` dips.
///
/// Dips are taken deepest first. A point below the detection level belongs
/// to an already found dip unless `|S21|` rises by a clear margin between
/// the two; windows that overlap are merged and flagged.
pub fn segment_resonances(wideband: &FrequencyTrace, expected: Option<usize>) -> Result<Vec<ResonanceWindow>> {
    let freqs = wideband.freqs();
    let mags: Vec<f64> = wideband.s21().iter().map(|z| z.norm()).collect();
    let n = mags.len();
    let (baseline, sigma) = robust_location_scale(&mags);
    let level = baseline - (5.0 * sigma).max(1e-3 * baseline);

    let mut candidates: Vec<usize> = (0..n).filter(|&i| mags[i] < level).collect();
    candidates.sort_by(|&a, &b| mags[a].total_cmp(&mags[b]));

    let range_max = RangeMax::new(&mags);
    let mut windows: Vec<Window> = Vec::new();
    for idx in candidates {
        // a candidate belongs to an existing dip unless |S21| rises by a
        // clear margin on the way to that dip's minimum
        let prominence = (5.0 * sigma).max(0.5 * (baseline - mags[idx]));
        let owned = windows.iter().any(|w| {
            let (a, b) = if idx < w.center_idx {
                (idx, w.center_idx)
            } else {
                (w.center_idx, idx)
            };
            range_max.query(a, b) - mags[idx] < prominence
        });
        if owned {
            continue;
        }
        let half = 0.5 * (baseline * baseline + mags[idx] * mags[idx]);
        let mut l = idx;
        while l > 0 && mags[l - 1] * mags[l - 1] < half {
            l -= 1;
        }
        let mut r = idx;
        while r + 1 < n && mags[r + 1] * mags[r + 1] < half {
            r += 1;
        }
        let step_l = if l > 0 { freqs[l] - freqs[l - 1] } else { 0.0 };
        let step_r = if r + 1 < n { freqs[r + 1] - freqs[r] } else { 0.0 };
        let linewidth = (freqs[r] - freqs[l] + 0.5 * (step_l + step_r)).max(f64::MIN_POSITIVE);
        let f_lo = freqs[idx] - HALF_WINDOW_LINEWIDTHS * linewidth;
        let f_hi = freqs[idx] + HALF_WINDOW_LINEWIDTHS * linewidth;
        let mut lo = freqs.partition_point(|&f| f < f_lo);
        let mut hi = freqs.partition_point(|&f| f <= f_hi);
        while hi - lo < MIN_WINDOW_POINTS && (lo > 0 || hi < n) {
            lo = lo.saturating_sub(1);
            hi = (hi + 1).min(n);
        }
        windows.push(Window {
            lo,
            hi,
            center_idx: idx,
            linewidth,
            merged: false,
        });
    }

    windows.sort_by_key(|w| w.lo);
    let mut disjoint: Vec<Window> = Vec::with_capacity(windows.len());
    for w in windows {
        match disjoint.last_mut() {
            Some(prev) if w.lo < prev.hi => {
                // keep the deeper dip as the window's center
                if mags[w.center_idx] < mags[prev.center_idx] {
                    prev.center_idx = w.center_idx;
                    prev.linewidth = w.linewidth;
                }
                prev.hi = prev.hi.max(w.hi);
                prev.merged = true;
            }
            _ => disjoint.push(w),
        }
    }

    if let Some(k) = expected {
        if k != disjoint.len() {
            return Err(Error::SegmentationMismatch {
                expected: k,
                found: disjoint.iter().map(|w| freqs[w.center_idx]).collect(),
            });
        }
    }

    disjoint
        .into_iter()
        .map(|w| {
            Ok(ResonanceWindow {
                trace: wideband.slice(w.lo, w.hi)?,
                center: freqs[w.center_idx],
                linewidth: w.linewidth,
                merged: w.merged,
            })
        })
        .collect()
}

/// Sparse table for O(1) range-maximum queries.
struct RangeMax {
    levels: Vec<Vec<f64>>,
}

impl RangeMax {
    fn new(values: &[f64]) -> Self {
        let mut levels = vec![values.to_vec()];
        let mut width = 1;
        while 2 * width <= values.len() {
            let prev = levels.last().expect("non-empty");
            let next: Vec<f64> = (0..prev.len() - width).map(|i| prev[i].max(prev[i + width])).collect();
            levels.push(next);
            width *= 2;
        }
        Self { levels }
    }

    /// Maximum over the inclusive range `[a, b]`.
    fn query(&self, a: usize, b: usize) -> f64 {
        let len = b - a + 1;
        let k = usize::BITS as usize - 1 - len.leading_zeros() as usize;
        let level = &self.levels[k];
        level[a].max(level[b + 1 - (1 << k)])
    }
}
