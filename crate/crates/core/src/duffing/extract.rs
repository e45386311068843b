use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit_report::FitReport;
use crate::model::NonlinearParams;

/// Minimum number of drive powers for a slope extraction.
pub const MIN_POWERS: usize = 4;

/// One power of a Kerr / two-photon slope table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KerrSlopePoint {
    pub photon_number: f64,
    /// `K_nl · n`, Hz.
    pub kerr_shift: f64,
    pub kerr_shift_err: f64,
    /// `γ_nl · n`, Hz.
    pub two_photon_rate: f64,
    pub two_photon_rate_err: f64,
}

/// Slopes of the Kerr shift and two-photon rate against photon number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KerrExtraction {
    pub kerr: f64,
    pub kerr_std: f64,
    pub two_photon: f64,
    pub two_photon_std: f64,
    pub r2_kerr: f64,
    pub r2_two_photon: f64,
    pub points: Vec<KerrSlopePoint>,
}

/// Regresses the per-power Kerr shift `K_nl·n` and two-photon rate
/// `γ_nl·n` through the origin against `photon_numbers`.
///
/// `photon_numbers[k]` is the photon number assigned to `fits[k]`, normally
/// the per-trace maximum of the selected branch. R² is the usual centered
/// coefficient of determination of the through-origin line.
pub fn extract_kerr_two_photon(fits: &[FitReport<NonlinearParams>], photon_numbers: &[f64]) -> Result<KerrExtraction> {
    if fits.len() != photon_numbers.len() {
        return Err(Error::param(
            "photon_numbers",
            format!("{} fits but {} photon numbers", fits.len(), photon_numbers.len()),
        ));
    }
    if fits.len() < MIN_POWERS {
        return Err(Error::InsufficientPowers {
            needed: MIN_POWERS,
            got: fits.len(),
        });
    }
    if let Some(n) = photon_numbers.iter().find(|n| !(**n > 0.0 && n.is_finite())) {
        return Err(Error::param(
            "photon_numbers",
            format!("must be finite and > 0, got {n}"),
        ));
    }

    let points: Vec<KerrSlopePoint> = fits
        .iter()
        .zip(photon_numbers)
        .map(|(fit, &n)| KerrSlopePoint {
            photon_number: n,
            kerr_shift: fit.params.kerr * n,
            kerr_shift_err: fit.std_error("kerr").unwrap_or(f64::NAN) * n,
            two_photon_rate: fit.params.two_photon * n,
            two_photon_rate_err: fit.std_error("two_photon").unwrap_or(f64::NAN) * n,
        })
        .collect();

    let x: Vec<f64> = points.iter().map(|p| p.photon_number).collect();
    let kerr_y: Vec<f64> = points.iter().map(|p| p.kerr_shift).collect();
    let tp_y: Vec<f64> = points.iter().map(|p| p.two_photon_rate).collect();
    let k = origin_regression(&x, &kerr_y);
    let g = origin_regression(&x, &tp_y);
    Ok(KerrExtraction {
        kerr: k.slope,
        kerr_std: k.std,
        two_photon: g.slope,
        two_photon_std: g.std,
        r2_kerr: k.r2,
        r2_two_photon: g.r2,
        points,
    })
}

#[derive(Debug, Clone, Copy)]
struct OriginLine {
    slope: f64,
    std: f64,
    r2: f64,
}

fn origin_regression(x: &[f64], y: &[f64]) -> OriginLine {
    let m = x.len() as f64;
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let slope = sxy / sxx;
    let ssr: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a).powi(2)).sum();
    let mean = y.iter().sum::<f64>() / m;
    let sst: f64 = y.iter().map(|b| (b - mean).powi(2)).sum();
    let r2 = if sst > 0.0 {
        1.0 - ssr / sst
    } else if ssr == 0.0 {
        1.0
    } else {
        f64::NAN
    };
    OriginLine {
        slope,
        std: (ssr / (m - 1.0) / sxx).sqrt(),
        r2,
    }
}
