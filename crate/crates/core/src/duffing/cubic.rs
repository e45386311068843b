//! Steady-state photon-number cubic
//! `1/2 = ñ³(ξ² + η²/4) + 2ñ²(η/4 − ξΔ̃) + ñ(1/4 + Δ̃²)`.
//!
//! Roots are isolated between the critical points of the cubic (where it is
//! monotone) and refined with safeguarded Newton iterations, which stays
//! accurate near tangencies and in the nearly linear limit where the
//! closed form loses precision.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;

/// Which solution to report where the cubic has three positive roots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchPolicy {
    Low,
    High,
    /// Continuation in increasing frequency (starts on the low branch).
    #[default]
    SweepUp,
    /// Continuation in decreasing frequency (starts on the high branch).
    SweepDown,
}

impl BranchPolicy {
    pub fn is_sweep(self) -> bool {
        matches!(self, BranchPolicy::SweepUp | BranchPolicy::SweepDown)
    }
}

impl fmt::Display for BranchPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BranchPolicy::Low => "low",
            BranchPolicy::High => "high",
            BranchPolicy::SweepUp => "sweep-up",
            BranchPolicy::SweepDown => "sweep-down",
        })
    }
}

impl FromStr for BranchPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "low" => Ok(BranchPolicy::Low),
            "high" => Ok(BranchPolicy::High),
            "sweep-up" => Ok(BranchPolicy::SweepUp),
            "sweep-down" => Ok(BranchPolicy::SweepDown),
            other => Err(format!(
                "unknown branch policy `{other}` (low, high, sweep-up, sweep-down)"
            )),
        }
    }
}

/// Coefficients of `a ñ³ + b ñ² + c ñ − 1/2`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Cubic {
    a: f64,
    b: f64,
    c: f64,
}

impl Cubic {
    pub fn new(xi: f64, eta: f64, detuning: f64) -> Self {
        Self {
            a: xi * xi + 0.25 * eta * eta,
            b: 0.5 * eta - 2.0 * xi * detuning,
            c: 0.25 + detuning * detuning,
        }
    }

    #[inline]
    fn eval(&self, x: f64) -> f64 {
        ((self.a * x + self.b) * x + self.c) * x - 0.5
    }

    #[inline]
    fn deriv(&self, x: f64) -> f64 {
        (3.0 * self.a * x + 2.0 * self.b) * x + self.c
    }

    /// Largest magnitude among the individual terms at `x`.
    fn term_scale(&self, x: f64) -> f64 {
        (self.a * x * x * x)
            .abs()
            .max((self.b * x * x).abs())
            .max((self.c * x).abs())
            .max(0.5)
    }

    /// Positive critical points, ascending.
    fn critical_points(&self) -> Vec<f64> {
        if self.a == 0.0 {
            return Vec::new();
        }
        let disc = self.b * self.b - 3.0 * self.a * self.c;
        if disc <= 0.0 {
            return Vec::new();
        }
        let q = -(self.b + self.b.signum() * disc.sqrt());
        let mut cps = vec![q / (3.0 * self.a), self.c / q];
        cps.retain(|x| *x > 0.0 && x.is_finite());
        cps.sort_by(|a, b| a.total_cmp(b));
        cps
    }

    /// Root in `[lo, hi]` where the cubic changes sign.
    fn bracketed_root(&self, mut lo: f64, mut hi: f64) -> f64 {
        let mut f_lo = self.eval(lo);
        if f_lo == 0.0 {
            return lo;
        }
        let f_hi = self.eval(hi);
        if f_hi == 0.0 {
            return hi;
        }
        let rising = f_hi > f_lo;
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let fx = self.eval(x);
            if fx == 0.0 {
                return x;
            }
            if (fx < 0.0) == rising {
                lo = x;
                f_lo = fx;
            } else {
                hi = x;
            }
            let d = self.deriv(x);
            let newton = x - fx / d;
            let next = if d != 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - x).abs() <= 2.0 * f64::EPSILON * x.abs() || hi - lo <= 2.0 * f64::EPSILON * hi.abs() {
                x = next;
                break;
            }
            x = next;
        }
        let _ = f_lo;
        x
    }

    /// All real roots with `ñ > 0`, ascending; tangencies counted once.
    pub fn positive_roots(&self) -> Vec<f64> {
        if self.a == 0.0 {
            // ξ = η = 0, so b = 0 as well
            return vec![0.5 / self.c];
        }
        let cps = self.critical_points();
        let mut upper = cps.last().copied().unwrap_or(0.0).max(0.5 / self.c).max(1.0);
        while self.eval(upper) <= 0.0 {
            upper *= 2.0;
        }
        let mut knots = Vec::with_capacity(4);
        knots.push(0.0);
        knots.extend(&cps);
        knots.push(upper);

        let mut roots: Vec<f64> = Vec::with_capacity(3);
        for w in knots.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let (f_lo, f_hi) = (self.eval(lo), self.eval(hi));
            if f_lo == 0.0 && lo > 0.0 {
                roots.push(lo);
            } else if (f_lo < 0.0) != (f_hi < 0.0) && f_hi != 0.0 {
                roots.push(self.bracketed_root(lo, hi));
            }
        }
        if self.eval(upper) == 0.0 {
            roots.push(upper);
        }
        roots.sort_by(|a, b| a.total_cmp(b));
        roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
        roots
    }

    /// `|LHS − RHS|` and the magnitude of the largest term at `x`.
    pub fn residual(&self, x: f64) -> (f64, f64) {
        (self.eval(x).abs(), self.term_scale(x))
    }
}

/// A solve at one frequency point.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonSolution {
    /// Root chosen by the branch policy.
    pub selected: f64,
    /// All positive real roots, ascending (one or three).
    pub roots: Vec<f64>,
}

/// Solves the normalized photon-number cubic at one point.
///
/// With a sweep policy and `prev_root` given, the root closest to `prev_root`
/// is selected; without it the sweep starts on the low (`SweepUp`) or high
/// (`SweepDown`) branch.
pub fn solve_photon_number(
    xi: f64,
    eta: f64,
    detuning: f64,
    policy: BranchPolicy,
    prev_root: Option<f64>,
) -> Result<PhotonSolution> {
    if !(eta >= 0.0) || !xi.is_finite() || !detuning.is_finite() || !eta.is_finite() {
        return Err(Error::param(
            "eta",
            format!("need finite inputs and eta >= 0 (xi={xi}, eta={eta}, detuning={detuning})"),
        ));
    }
    let roots = Cubic::new(xi, eta, detuning).positive_roots();
    let (first, last) = match (roots.first(), roots.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => return Err(Error::NoPositiveRoot { xi, eta, detuning }),
    };
    let selected = match (policy, prev_root) {
        (BranchPolicy::Low, _) | (BranchPolicy::SweepUp, None) => first,
        (BranchPolicy::High, _) | (BranchPolicy::SweepDown, None) => last,
        (_, Some(prev)) => *roots
            .iter()
            .min_by(|a, b| (*a - prev).abs().total_cmp(&(*b - prev).abs()))
            .expect("non-empty"),
    };
    Ok(PhotonSolution { selected, roots })
}

/// Residual check used by tests and diagnostics: `|LHS − RHS|` relative to
/// `max(1, largest term)`.
pub fn relative_cubic_residual(xi: f64, eta: f64, detuning: f64, n: f64) -> f64 {
    let (r, scale) = Cubic::new(xi, eta, detuning).residual(n);
    r / scale.max(1.0)
}

/// Number of positive roots at `(ξ, η, Δ̃)`.
pub fn root_count(xi: f64, eta: f64, detuning: f64) -> usize {
    Cubic::new(xi, eta, detuning).positive_roots().len()
}

/// Scans `|ξ|` upward (with the sign of `xi_sign`) and returns the smallest
/// grid value at which some detuning in `detunings` yields three positive
/// roots, or `None` if none does up to `xi_max`.
pub fn critical_kerr_scan(
    eta: f64,
    xi_sign: f64,
    xi_max: f64,
    xi_steps: usize,
    detunings: &[f64],
    exec: Execution,
) -> Option<f64> {
    let hits = exec.map_range(xi_steps + 1, |k| {
        let xi = xi_sign.signum() * xi_max * k as f64 / xi_steps as f64;
        detunings.iter().any(|&d| root_count(xi, eta, d) == 3)
    });
    hits.iter()
        .position(|&h| h)
        .map(|k| xi_max * k as f64 / xi_steps as f64)
}
