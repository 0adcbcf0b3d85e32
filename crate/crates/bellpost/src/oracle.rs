//! Deterministic quadrature oracle for the classical readout correlation.
//!
//! The sphere average of `alpha * beta` reduces to a 1-D integral over
//! `u = n.a` (uniform on [-1, 1] for an isotropic source): for fixed `u` the
//! azimuthal distribution of `n.b` is `A + B cos(p)` with `A = u cos(theta)`,
//! `B = sqrt(1 - u^2) sin(theta)`, and the azimuthal occupation of each
//! threshold cap has the closed form `arccos((c - A)/B) / pi`, the limit of
//! a uniform azimuth grid. The remaining `u` integral runs on composite
//! Gauss-Legendre panels split at the cap edges and cap-tangency points, and
//! is refined dyadically until two successive refinements agree to 1e-6.
//!
//! This path shares no code with the Monte Carlo trial generator, so the two
//! cross-validate each other.

use std::sync::OnceLock;

use crate::classical::{Direction3, ReadoutConvention, THRESHOLD};
use crate::error::{Error, Result};

/// Convergence target for successive dyadic refinements.
pub const QUADRATURE_TOL: f64 = 1e-6;

/// Panel refinement cap; 2^MAX_LEVEL panels per segment before giving up.
const MAX_LEVEL: u32 = 14;

const GL_ORDER: usize = 16;

/// Gauss-Legendre nodes and weights on [-1, 1], computed once by Newton
/// iteration on the Legendre recurrence.
fn gauss_legendre_16() -> &'static (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    CACHE.get_or_init(|| {
        let n = GL_ORDER;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            // Tricomi initial guess, then Newton.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre_with_derivative(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (_, dp) = legendre_with_derivative(n, x);
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (nodes, weights)
    })
}

/// P_n(x) and P_n'(x) via the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = pk;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Azimuthal occupation fractions of the two threshold caps of `n.b`,
/// given `u = n.a`. Returns `(f_plus, f_minus)` where `f_plus = P(n.b > c)`
/// and `f_minus = P(n.b < -c)` over the uniform azimuth.
#[inline]
fn azimuthal_fractions(u: f64, cos_theta: f64, sin_theta: f64) -> (f64, f64) {
    let a = u * cos_theta;
    let b = (1.0 - u * u).max(0.0).sqrt() * sin_theta;
    if b < 1e-14 {
        let f_plus = if a > THRESHOLD { 1.0 } else { 0.0 };
        let f_minus = if a < -THRESHOLD { 1.0 } else { 0.0 };
        (f_plus, f_minus)
    } else {
        let y_plus = ((THRESHOLD - a) / b).clamp(-1.0, 1.0);
        let y_minus = ((-THRESHOLD - a) / b).clamp(-1.0, 1.0);
        let f_plus = y_plus.acos() / std::f64::consts::PI;
        let f_minus = 1.0 - y_minus.acos() / std::f64::consts::PI;
        (f_plus, f_minus)
    }
}

/// Integrand pair at `u`: contributions to the signed correlation and to the
/// joint-fire probability, both including the 1/2 density of `u`.
#[inline]
fn integrand(u: f64, cos_theta: f64, sin_theta: f64) -> (f64, f64) {
    let alpha = if u > THRESHOLD {
        1.0
    } else if u < -THRESHOLD {
        -1.0
    } else {
        return (0.0, 0.0);
    };
    let (f_plus, f_minus) = azimuthal_fractions(u, cos_theta, sin_theta);
    let signed = 0.5 * alpha * (f_plus - f_minus);
    let joint = 0.5 * (f_plus + f_minus);
    (signed, joint)
}

/// Composite Gauss-Legendre over `[lo, hi]` with `panels` equal panels.
fn integrate_segment(lo: f64, hi: f64, panels: u32, cos_theta: f64, sin_theta: f64) -> (f64, f64) {
    let (nodes, weights) = gauss_legendre_16();
    let width = (hi - lo) / panels as f64;
    let mut signed = 0.0;
    let mut joint = 0.0;
    for p in 0..panels {
        let a = lo + p as f64 * width;
        let mid = a + 0.5 * width;
        let half = 0.5 * width;
        for (x, w) in nodes.iter().zip(weights.iter()) {
            let u = mid + half * x;
            let (s, j) = integrand(u, cos_theta, sin_theta);
            signed += w * half * s;
            joint += w * half * j;
        }
    }
    (signed, joint)
}

/// Segment boundaries: cap edges plus the tangency points of the `b` caps,
/// where the azimuthal fractions have kinks.
fn segments(cos_theta: f64, sin_theta: f64) -> Vec<(f64, f64)> {
    let mut pts = vec![-1.0, -THRESHOLD, THRESHOLD, 1.0];
    let c = THRESHOLD;
    let s = (1.0f64 - c * c).max(0.0).sqrt(); // = 1/sqrt(2)
    for candidate in [
        c * cos_theta + s * sin_theta,
        c * cos_theta - s * sin_theta,
        -c * cos_theta + s * sin_theta,
        -c * cos_theta - s * sin_theta,
    ] {
        if candidate.abs() > THRESHOLD && candidate.abs() < 1.0 {
            pts.push(candidate);
        }
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    let mut segs = Vec::new();
    for w in pts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        // Skip the dead zone of alpha entirely.
        let mid = 0.5 * (lo + hi);
        if mid.abs() >= THRESHOLD && hi - lo > 1e-14 {
            segs.push((lo, hi));
        }
    }
    segs
}

/// Signed correlation and joint-fire probability under the flipped-Bob
/// convention, as a function of `cos(theta) = a.b`.
fn oracle_parts(cos_theta: f64) -> Result<(f64, f64)> {
    let cos_theta = cos_theta.clamp(-1.0, 1.0);
    let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
    let segs = segments(cos_theta, sin_theta);
    let mut previous: Option<(f64, f64)> = None;
    for level in 0..=MAX_LEVEL {
        let panels = 1u32 << level;
        let mut signed = 0.0;
        let mut joint = 0.0;
        for &(lo, hi) in &segs {
            let (s, j) = integrate_segment(lo, hi, panels, cos_theta, sin_theta);
            signed += s;
            joint += j;
        }
        if let Some((ps, pj)) = previous {
            if (signed - ps).abs() < QUADRATURE_TOL && (joint - pj).abs() < QUADRATURE_TOL {
                return Ok((signed, joint));
            }
        }
        previous = Some((signed, joint));
    }
    Err(Error::Numeric(format!(
        "quadrature did not stabilize to {QUADRATURE_TOL} within {MAX_LEVEL} refinements"
    )))
}

/// Ground-truth correlation of the threshold readout for settings `a`, `b`.
///
/// With `postselect = false` this is the plain average of `alpha * beta`
/// (null results included). With `postselect = true` it is the average over
/// the subsample where both results fired; away from a 90-degree separation
/// that conditional product is deterministic, so the value is exactly +1 or
/// -1. At exactly 90 degrees the retained set has measure zero and the
/// postselected correlation is reported as 0, its odd-symmetry limit.
pub fn oracle_correlation(
    a: Direction3,
    b: Direction3,
    postselect: bool,
    convention: ReadoutConvention,
) -> Result<f64> {
    let cos_theta = a.dot(&b);
    let (signed, joint) = oracle_parts(cos_theta)?;
    let signed = if convention.flip_bob { signed } else { -signed };
    if postselect {
        if joint < 1e-12 {
            return Ok(0.0);
        }
        Ok(signed / joint)
    } else {
        Ok(signed)
    }
}

/// Probability that both wings fire, for the retention report.
pub fn oracle_joint_fire_probability(a: Direction3, b: Direction3) -> Result<f64> {
    let (_, joint) = oracle_parts(a.dot(&b))?;
    Ok(joint)
}
