//! Algebraic circle fit in the complex plane.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: Complex64,
    pub radius: f64,
}

impl Circle {
    /// Largest `| |z - c| - R |` over the points.
    pub fn max_radial_deviation(&self, points: &[Complex64]) -> f64 {
        points
            .iter()
            .map(|z| ((z - self.center).norm() - self.radius).abs())
            .fold(0.0, f64::max)
    }
}

/// Least-squares fit of `x² + y² + D x + E y + F = 0` (Kåsa) on centered,
/// scaled coordinates. Exact for noise-free points on a circle. Returns
/// `None` for fewer than three points or collinear data.
pub fn fit_circle(points: &[Complex64]) -> Option<Circle> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let mean = points.iter().sum::<Complex64>() / n;
    let scale = points.iter().map(|z| (z - mean).norm()).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return None;
    }
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for z in points {
        let w = (z - mean) / scale;
        let row = Vector3::new(w.re, w.im, 1.0);
        let rhs = -(w.re * w.re + w.im * w.im);
        ata += row * row.transpose();
        atb += row * rhs;
    }
    let sv = ata.singular_values();
    if !(sv.min() > 1e-12 * sv.max()) {
        return None;
    }
    let sol = ata.lu().solve(&atb)?;
    let (d, e, f) = (sol[0], sol[1], sol[2]);
    let cx = -d / 2.0;
    let cy = -e / 2.0;
    let r2 = cx * cx + cy * cy - f;
    if !(r2 > 0.0) || !r2.is_finite() {
        return None;
    }
    Some(Circle {
        center: mean + Complex64::new(cx, cy) * scale,
        radius: r2.sqrt() * scale,
    })
}
