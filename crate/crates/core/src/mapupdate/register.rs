//! 3D-3D registration: scale from distance ratios, closed-form rigid fit,
//! robust hypothesis search and ICP refinement.

use nalgebra::{Matrix3, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::SpatialGrid;
use crate::model::Rigid3;
use crate::ransac::{self, Estimator, LoopParams};
use crate::scalar::{lit, median, to_f64, Real};
use crate::{RigidTransform, Vec3};

/// Above this many correspondences the scale median is taken over a sample.
pub const SCALE_EXHAUSTIVE_MAX: usize = 40;
pub const SCALE_SAMPLE_PAIRS: usize = 1000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegistrationError {
    #[error("need at least {needed} correspondences, found {found}")]
    TooFew { needed: usize, found: usize },
    #[error("point sets differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("points are collinear or coincident")]
    Degenerate,
    #[error("no point pair with distinct positions")]
    NoValidPair,
    #[error("non-finite coordinate in correspondence {0}")]
    NonFinite(usize),
}

/// A 3D point in the old map (`a`) and its counterpart in the new section (`b`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence3D {
    pub a: Vec3,
    pub b: Vec3,
}

impl Correspondence3D {
    pub fn new(a: Vec3, b: Vec3) -> Self {
        Correspondence3D { a, b }
    }
}

fn check_finite(c: &[Correspondence3D]) -> Result<(), RegistrationError> {
    match c.iter().position(|c| !(c.a.iter().chain(c.b.iter()).all(|v| v.is_finite()))) {
        Some(i) => Err(RegistrationError::NonFinite(i)),
        None => Ok(()),
    }
}

/// Median over point pairs of `|a_i - a_j| / |b_i - b_j|`.
///
/// Up to [`SCALE_EXHAUSTIVE_MAX`] correspondences every pair is used; beyond
/// that [`SCALE_SAMPLE_PAIRS`] pairs are drawn with the given seed.
pub fn median_of_scales(corr: &[Correspondence3D], seed: u64) -> Result<f64, RegistrationError> {
    check_finite(corr)?;
    let n = corr.len();
    if n < 2 {
        return Err(RegistrationError::TooFew { needed: 2, found: n });
    }
    let ratio = |i: usize, j: usize| {
        let db = (corr[i].b - corr[j].b).norm();
        (db >= 1e-9).then(|| (corr[i].a - corr[j].a).norm() / db)
    };
    let mut ratios = Vec::new();
    if n <= SCALE_EXHAUSTIVE_MAX {
        for i in 0..n {
            for j in i + 1..n {
                ratios.extend(ratio(i, j));
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..SCALE_SAMPLE_PAIRS {
            let ij = sample(&mut rng, n, 2);
            ratios.extend(ratio(ij.index(0), ij.index(1)));
        }
    }
    median(&ratios).ok_or(RegistrationError::NoValidPair)
}

/// Least-squares rigid motion taking `src` onto `dst`, with the rms residual.
pub fn rigid_transform_3d<T: Real>(
    src: &[Vector3<T>],
    dst: &[Vector3<T>],
) -> Result<(Rigid3<T>, T), RegistrationError> {
    if src.len() != dst.len() {
        return Err(RegistrationError::LengthMismatch(src.len(), dst.len()));
    }
    let n = src.len();
    if n < 3 {
        return Err(RegistrationError::TooFew { needed: 3, found: n });
    }
    let nt: T = lit(n as f64);
    let cs = src.iter().fold(Vector3::zeros(), |a, p| a + p) / nt;
    let cd = dst.iter().fold(Vector3::zeros(), |a, p| a + p) / nt;
    let mut h = Matrix3::<T>::zeros();
    for (p, q) in src.iter().zip(dst) {
        h += (p - cs) * (q - cd).transpose();
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.ok_or(RegistrationError::Degenerate)?, svd.v_t.ok_or(RegistrationError::Degenerate)?);
    let sv = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).unwrap_or(std::cmp::Ordering::Equal));
    let (s0, s1) = (sv[order[0]], sv[order[1]]);
    if !(s0 > T::zero()) || !(s1 > s0 * lit(1e-10)) {
        return Err(RegistrationError::Degenerate);
    }
    let mut v = vt.transpose();
    let mut r = v * u.transpose();
    if r.determinant() < T::zero() {
        // flip the singular vector of the smallest singular value
        let k = order[2];
        for row in 0..3 {
            v[(row, k)] = -v[(row, k)];
        }
        r = v * u.transpose();
    }
    let t = cd - r * cs;
    let rig = Rigid3::new(r, t);
    let sse = src.iter().zip(dst).map(|(p, q)| (rig.apply(p) - q).norm_squared()).fold(T::zero(), |a, b| a + b);
    Ok((rig, (sse / nt).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ransac6Params {
    pub inlier_m: f64,
    pub confidence: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for Ransac6Params {
    fn default() -> Self {
        Ransac6Params { inlier_m: 0.2, confidence: 0.999, max_iters: 5000, seed: 0 }
    }
}

/// Robust rigid registration mapping the `b` side onto the `a` side.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    pub transform: RigidTransform,
    pub inlier_flags: Vec<bool>,
    pub n_inliers: usize,
    /// Rms residual over inliers, meters.
    pub rms_err: f64,
}

struct RigidData<'a>(&'a [Correspondence3D]);

impl Estimator for RigidData<'_> {
    type Model = RigidTransform;

    fn sample_size(&self) -> usize {
        3
    }

    fn len(&self) -> usize {
        self.0.len()
    }

    fn fit(&self, idx: &[usize]) -> Option<RigidTransform> {
        let src: Vec<Vec3> = idx.iter().map(|&i| self.0[i].b).collect();
        let dst: Vec<Vec3> = idx.iter().map(|&i| self.0[i].a).collect();
        rigid_transform_3d(&src, &dst).ok().map(|(t, _)| t)
    }

    fn residual(&self, t: &RigidTransform, i: usize) -> f64 {
        (t.apply(&self.0[i].b) - self.0[i].a).norm()
    }
}

/// Three-point hypotheses, consensus by residual, refit on all inliers.
///
/// `Ok(None)` when no hypothesis collects three inliers (for example when all
/// correspondences are collinear).
pub fn ransac_6dof(corr: &[Correspondence3D], p: &Ransac6Params) -> Result<Option<RegistrationResult>, RegistrationError> {
    check_finite(corr)?;
    if corr.len() < 3 {
        return Err(RegistrationError::TooFew { needed: 3, found: corr.len() });
    }
    let data = RigidData(corr);
    let lp = LoopParams { threshold: p.inlier_m, confidence: p.confidence, max_iters: p.max_iters, seed: p.seed };
    let Some(c) = ransac::run(&data, &lp) else { return Ok(None) };
    let mut flags = vec![false; corr.len()];
    let mut sse = 0.0;
    for &i in &c.inliers {
        flags[i] = true;
        sse += data.residual(&c.model, i).powi(2);
    }
    let n = c.inliers.len();
    Ok(Some(RegistrationResult { transform: c.model, inlier_flags: flags, n_inliers: n, rms_err: (sse / n as f64).sqrt() }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpParams {
    pub max_iters: usize,
    /// Stop once the rms improves by less than this, meters.
    pub tol: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        IcpParams { max_iters: 50, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub transform: RigidTransform,
    /// Rms after each accepted state, starting with the initial transform.
    pub rms_history: Vec<f64>,
    pub iterations: usize,
}

fn icp_cell(dst: &[Vec3]) -> f64 {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in dst {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let extent = (hi - lo).max();
    let cell = extent / (dst.len() as f64).cbrt().max(1.0);
    if cell.is_finite() && cell > 1e-9 {
        cell
    } else {
        1.0
    }
}

/// Point-to-point ICP from `t0`; the recorded rms never increases.
pub fn icp_refine(src: &[Vec3], dst: &[Vec3], t0: &RigidTransform, p: &IcpParams) -> IcpResult {
    let mut res = IcpResult { transform: *t0, rms_history: Vec::new(), iterations: 0 };
    if src.is_empty() || dst.is_empty() {
        return res;
    }
    let grid = SpatialGrid::new(dst.iter().map(|q| [q.x, q.y, q.z]).collect(), icp_cell(dst));
    let pair_up = |t: &RigidTransform| -> (Vec<Vec3>, f64) {
        let mut matched = Vec::with_capacity(src.len());
        let mut sse = 0.0;
        for s in src {
            let w = t.apply(s);
            let (j, d2) = grid.nearest(&[w.x, w.y, w.z]).expect("dst is nonempty and finite");
            matched.push(dst[j]);
            sse += d2;
        }
        (matched, (sse / src.len() as f64).sqrt())
    };
    let (mut matched, mut rms) = pair_up(&res.transform);
    res.rms_history.push(rms);
    while res.iterations < p.max_iters && rms > 0.0 {
        let Ok((next, _)) = rigid_transform_3d(src, &matched) else { break };
        let (next_matched, next_rms) = pair_up(&next);
        if !(next_rms <= rms) {
            break;
        }
        res.iterations += 1;
        res.transform = next;
        res.rms_history.push(next_rms);
        let improvement = rms - next_rms;
        matched = next_matched;
        rms = next_rms;
        if improvement < p.tol {
            break;
        }
    }
    res
}

/// Rotation angle (degrees) and translation distance between two transforms.
pub fn transform_error<T: Real>(a: &Rigid3<T>, b: &Rigid3<T>) -> (f64, f64) {
    let angle = a.rotation_angle_to(b).to_degrees();
    (angle, to_f64((a.translation - b.translation).norm()))
}
