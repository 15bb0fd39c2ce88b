//! Robust fundamental matrix fit used to discard matches that violate
//! two-view epipolar geometry.

use nalgebra::{DMatrix, Matrix3, Vector3};

use super::h8::hartley;
use super::Match;
use crate::ransac::{self, Estimator, LoopParams};
use crate::Vec2;

/// Below this many matches the fundamental matrix is not estimated.
pub const MIN_EPIPOLAR_MATCHES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpipolarParams {
    /// Sampson distance threshold in pixels.
    pub threshold_px: f64,
    pub confidence: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for EpipolarParams {
    fn default() -> Self {
        EpipolarParams { threshold_px: 3.0, confidence: 0.999, max_iters: 2000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpipolarOutcome {
    pub matches: Vec<Match>,
    /// Set when the input was passed through because F could not be fitted
    /// (all points collinear, or no hypothesis survived).
    pub degenerate: bool,
    pub fundamental: Option<Matrix3<f64>>,
}

/// Normalised eight-point fundamental matrix with rank two enforced.
pub fn fit_fundamental(a: &[Vec2], b: &[Vec2]) -> Option<Matrix3<f64>> {
    let n = a.len();
    if n < 8 || b.len() != n {
        return None;
    }
    let ta = hartley(a)?;
    let tb = hartley(b)?;
    let rows = n.max(9);
    let mut m = DMatrix::<f64>::zeros(rows, 9);
    for i in 0..n {
        let p = ta * Vector3::new(a[i].x, a[i].y, 1.0);
        let q = tb * Vector3::new(b[i].x, b[i].y, 1.0);
        for r in 0..3 {
            for c in 0..3 {
                m[(i, 3 * r + c)] = q[r] * p[c];
            }
        }
    }
    let svd = m.svd(false, true);
    let vt = svd.v_t?;
    let k = svd.singular_values.imin();
    let f = vt.row(k);
    let fn_ = Matrix3::new(f[0], f[1], f[2], f[3], f[4], f[5], f[6], f[7], f[8]);
    let s = fn_.svd(true, true);
    let (u, vt3) = (s.u?, s.v_t?);
    let mut sv = s.singular_values;
    // zero the smallest singular value
    let kmin = sv.imin();
    sv[kmin] = 0.0;
    let rank2 = u * Matrix3::from_diagonal(&sv) * vt3;
    let full = tb.transpose() * rank2 * ta;
    let norm = full.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return None;
    }
    Some(full / norm)
}

/// First-order geometric (Sampson) distance of `b^T F a = 0`, in pixels.
pub fn sampson_distance(f: &Matrix3<f64>, a: &Vec2, b: &Vec2) -> f64 {
    let x = Vector3::new(a.x, a.y, 1.0);
    let y = Vector3::new(b.x, b.y, 1.0);
    let fx = f * x;
    let fty = f.transpose() * y;
    let e = y.dot(&fx);
    let g = fx.x * fx.x + fx.y * fx.y + fty.x * fty.x + fty.y * fty.y;
    if g <= 0.0 {
        return if e == 0.0 { 0.0 } else { f64::INFINITY };
    }
    (e * e / g).sqrt()
}

/// True when every point lies on one line (within a relative tolerance).
pub fn all_collinear(pts: &[Vec2]) -> bool {
    if pts.len() < 3 {
        return true;
    }
    let n = pts.len() as f64;
    let mean = pts.iter().fold(Vec2::zeros(), |a, p| a + p) / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        let d = p - mean;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    // smallest eigenvalue of the scatter matrix relative to the largest
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let lmax = tr / 2.0 + disc;
    let lmin = tr / 2.0 - disc;
    !(lmax > 0.0) || lmin <= lmax * 1e-12
}

struct FundamentalEstimator {
    a: Vec<Vec2>,
    b: Vec<Vec2>,
}

impl Estimator for FundamentalEstimator {
    type Model = Matrix3<f64>;

    fn sample_size(&self) -> usize {
        MIN_EPIPOLAR_MATCHES
    }

    fn len(&self) -> usize {
        self.a.len()
    }

    fn fit(&self, idx: &[usize]) -> Option<Matrix3<f64>> {
        let a: Vec<Vec2> = idx.iter().map(|&i| self.a[i]).collect();
        let b: Vec<Vec2> = idx.iter().map(|&i| self.b[i]).collect();
        fit_fundamental(&a, &b)
    }

    fn residual(&self, f: &Matrix3<f64>, i: usize) -> f64 {
        sampson_distance(f, &self.a[i], &self.b[i])
    }
}

/// Keeps matches consistent with the best fundamental matrix.
///
/// Fewer than eight matches, or collinear points on either side, pass through
/// unchanged; the latter sets `degenerate`.
pub fn epipolar_filter(matches: &[Match], px_a: &[Vec2], px_b: &[Vec2], p: &EpipolarParams) -> EpipolarOutcome {
    let pass = |degenerate| EpipolarOutcome { matches: matches.to_vec(), degenerate, fundamental: None };
    if matches.len() < MIN_EPIPOLAR_MATCHES {
        return pass(false);
    }
    let a: Vec<Vec2> = matches.iter().map(|m| px_a[m.idx_a]).collect();
    let b: Vec<Vec2> = matches.iter().map(|m| px_b[m.idx_b]).collect();
    if all_collinear(&a) || all_collinear(&b) {
        return pass(true);
    }
    let est = FundamentalEstimator { a, b };
    let lp = LoopParams { threshold: p.threshold_px, confidence: p.confidence, max_iters: p.max_iters, seed: p.seed };
    match ransac::run(&est, &lp) {
        Some(c) => EpipolarOutcome {
            matches: c.inliers.iter().map(|&i| matches[i]).collect(),
            degenerate: false,
            fundamental: Some(c.model),
        },
        None => pass(true),
    }
}
