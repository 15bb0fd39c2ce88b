//! Query/map alignment: descriptor matching, outlier filtering and robust
//! homography estimation.
//!
//! Both a 5DOF and a general 8DOF model are fitted; the one with more inliers
//! wins, with ties going to the 5DOF model.

mod epipolar;
mod h5;
mod h8;
mod matching;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

pub use epipolar::{
    all_collinear, epipolar_filter, fit_fundamental, sampson_distance, EpipolarOutcome, EpipolarParams,
    MIN_EPIPOLAR_MATCHES,
};
pub use h5::{eval_h5, fit_h5, h5_to_matrix, H5Coeffs};
pub use h8::fit_h8;
pub use matching::{bidirectional_filter, dist2, knn_match, lowe_filter, Knn, Match};

use crate::model::{warp_point, Dof, Homography, ImageRecord};
use crate::pairing::PairCandidate;
use crate::ransac::{self, Estimator, LoopParams};
use crate::scalar::median;
use crate::Vec2;

pub const DEFAULT_MIN_INLIERS: usize = 80;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AlignError {
    #[error("need at least {needed} features, found {found}")]
    TooFewFeatures { needed: usize, found: usize },
    #[error("need at least {needed} point pairs, found {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("descriptor length {found} does not match {expected}")]
    DescriptorLength { expected: usize, found: usize },
    #[error("point lists differ in length ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("no {dof}DOF model reached the minimal inlier count")]
    NoModel { dof: u8 },
}

/// Settings for one robust homography fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacParams {
    /// Reprojection distance threshold in pixels.
    pub inlier_px: f64,
    pub confidence: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams { inlier_px: 3.0, confidence: 0.999, max_iters: 2000, seed: 0 }
    }
}

impl RansacParams {
    fn loop_params(&self) -> LoopParams {
        LoopParams { threshold: self.inlier_px, confidence: self.confidence, max_iters: self.max_iters, seed: self.seed }
    }
}

struct HomographyData {
    a: Vec<Vec2>,
    b: Vec<Vec2>,
    dof: Dof,
}

impl Estimator for HomographyData {
    type Model = Matrix3<f64>;

    fn sample_size(&self) -> usize {
        match self.dof {
            Dof::Five => 3,
            Dof::Eight => 4,
        }
    }

    fn len(&self) -> usize {
        self.a.len()
    }

    fn fit(&self, idx: &[usize]) -> Option<Matrix3<f64>> {
        let a: Vec<Vec2> = idx.iter().map(|&i| self.a[i]).collect();
        let b: Vec<Vec2> = idx.iter().map(|&i| self.b[i]).collect();
        match self.dof {
            Dof::Five => fit_h5(&a, &b).ok().map(|c| h5_to_matrix(&c)),
            Dof::Eight => {
                if idx.len() == 4 {
                    let (sa, sb) = ([a[0], a[1], a[2], a[3]], [b[0], b[1], b[2], b[3]]);
                    if h8::has_collinear_triple(&sa) || h8::has_collinear_triple(&sb) {
                        return None;
                    }
                }
                fit_h8(&a, &b).ok()
            }
        }
    }

    fn residual(&self, h: &Matrix3<f64>, i: usize) -> f64 {
        match warp_point(h, &self.a[i]) {
            Ok(p) => (p - self.b[i]).norm(),
            Err(_) => f64::INFINITY,
        }
    }
}

fn robust_homography(
    matches: &[Match],
    px_a: &[Vec2],
    px_b: &[Vec2],
    dof: Dof,
    p: &RansacParams,
) -> Result<Homography, AlignError> {
    let data = HomographyData {
        a: matches.iter().map(|m| px_a[m.idx_a]).collect(),
        b: matches.iter().map(|m| px_b[m.idx_b]).collect(),
        dof,
    };
    let s = data.sample_size();
    if matches.len() < s {
        return Err(AlignError::TooFewPoints { needed: s, found: matches.len() });
    }
    // surface structural degeneracy instead of a generic "no model"
    if data.fit(&(0..data.len()).collect::<Vec<_>>()).is_none() && all_samples_degenerate(&data) {
        return Err(AlignError::RankDeficient);
    }
    let c = ransac::run(&data, &p.loop_params()).ok_or(AlignError::NoModel { dof: dof.count() })?;
    let mut h = Homography::bare(c.model, dof);
    let (mut sx, mut sy, mut sxx, mut syy, mut se) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &i in &c.inliers {
        let pa = data.a[i];
        sx += pa.x;
        sy += pa.y;
        sxx += pa.x * pa.x;
        syy += pa.y * pa.y;
        se += data.residual(&c.model, i).powi(2);
        h.inliers.push((matches[i].idx_a, matches[i].idx_b));
    }
    let n = c.inliers.len() as f64;
    let (mx, my) = (sx / n, sy / n);
    h.sigma_xy = [(sxx / n - mx * mx).max(0.0).sqrt(), (syy / n - my * my).max(0.0).sqrt()];
    h.rmse = (se / n).sqrt();
    Ok(h)
}

fn all_samples_degenerate(data: &HomographyData) -> bool {
    match data.dof {
        Dof::Five => {
            let x0 = data.a[0].x;
            let y0 = data.a[0].y;
            data.a.iter().all(|p| p.x == x0) || data.a.iter().all(|p| p.y == y0)
        }
        Dof::Eight => all_collinear(&data.a) || all_collinear(&data.b),
    }
}

/// Robust 5DOF fit: 3-point hypotheses, refit on all inliers.
pub fn ransac_h5(matches: &[Match], px_a: &[Vec2], px_b: &[Vec2], p: &RansacParams) -> Result<Homography, AlignError> {
    robust_homography(matches, px_a, px_b, Dof::Five, p)
}

/// Robust 8DOF fit: 4-point DLT hypotheses, refit on all inliers.
pub fn ransac_h8(matches: &[Match], px_a: &[Vec2], px_b: &[Vec2], p: &RansacParams) -> Result<Homography, AlignError> {
    robust_homography(matches, px_a, px_b, Dof::Eight, p)
}

/// Parameters of the whole alignment stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignConfig {
    pub lowe_ratio: f64,
    pub inlier_px: f64,
    pub confidence: f64,
    pub max_iters: usize,
    pub epipolar_px: f64,
    pub min_inliers: usize,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            lowe_ratio: 0.8,
            inlier_px: 3.0,
            confidence: 0.999,
            max_iters: 2000,
            epipolar_px: 3.0,
            min_inliers: DEFAULT_MIN_INLIERS,
        }
    }
}

/// Outcome of aligning image A (query) to image B (map).
///
/// `chosen.h` maps A pixels into B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub pair: PairCandidate,
    pub chosen: Option<Homography>,
    pub rejected_model: Option<Homography>,
    /// Matches surviving all filters, i.e. the RANSAC input size.
    pub matches_used: usize,
    pub accepted: bool,
    /// Name of the stage that stopped the pipeline, if any.
    pub failed_stage: Option<String>,
    pub epipolar_degenerate: bool,
    /// Median nearest-neighbour descriptor distance from A into B.
    pub nn_median_ab: Option<f64>,
    /// Median nearest-neighbour descriptor distance from B into A.
    pub nn_median_ba: Option<f64>,
}

impl AlignmentResult {
    fn failed(pair: PairCandidate, stage: &str) -> Self {
        AlignmentResult {
            pair,
            chosen: None,
            rejected_model: None,
            matches_used: 0,
            accepted: false,
            failed_stage: Some(stage.to_string()),
            epipolar_degenerate: false,
            nn_median_ab: None,
            nn_median_ba: None,
        }
    }
}

/// Stable per-pair seed so results do not depend on scheduling order.
pub fn pair_seed(seed: u64, key: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in key.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed.rotate_left(17)
}

/// Selects between the two models; equal counts keep the 5DOF one.
pub fn choose_model(h5: Option<Homography>, h8: Option<Homography>) -> (Option<Homography>, Option<Homography>) {
    match (h5, h8) {
        (Some(a), Some(b)) => {
            if b.inliers.len() > a.inliers.len() {
                (Some(b), Some(a))
            } else {
                (Some(a), Some(b))
            }
        }
        (a, b) => (a.or(b), None),
    }
}

/// Full alignment of `a` (query) against `b` (map).
pub fn align_pair(a: &ImageRecord, b: &ImageRecord, cfg: &AlignConfig, seed: u64) -> AlignmentResult {
    let pair = PairCandidate::between(a, b);
    let seed = pair_seed(seed, &pair.key());
    let da: Vec<&[f32]> = a.features.iter().map(|f| f.descriptor.as_slice()).collect();
    let db: Vec<&[f32]> = b.features.iter().map(|f| f.descriptor.as_slice()).collect();
    let (knn_ab, knn_ba) = match (knn_match(&da, &db), knn_match(&db, &da)) {
        (Ok(x), Ok(y)) => (x, y),
        _ => return AlignmentResult::failed(pair, "knn_match"),
    };
    let nn_median = |k: &[Knn]| median(&k.iter().map(|k| k.nn[0].1).collect::<Vec<_>>());
    let (nn_median_ab, nn_median_ba) = (nn_median(&knn_ab), nn_median(&knn_ba));
    let mutual = bidirectional_filter(&lowe_filter(&knn_ab, cfg.lowe_ratio), &lowe_filter(&knn_ba, cfg.lowe_ratio));
    let px_a = a.pixels();
    let px_b = b.pixels();
    let ep = epipolar_filter(
        &mutual,
        &px_a,
        &px_b,
        &EpipolarParams {
            threshold_px: cfg.epipolar_px,
            confidence: cfg.confidence,
            max_iters: cfg.max_iters,
            seed,
        },
    );
    let rp = |s: u64| RansacParams { inlier_px: cfg.inlier_px, confidence: cfg.confidence, max_iters: cfg.max_iters, seed: s };
    let h5 = ransac_h5(&ep.matches, &px_a, &px_b, &rp(seed.wrapping_add(1))).ok();
    let h8 = ransac_h8(&ep.matches, &px_a, &px_b, &rp(seed.wrapping_add(2))).ok();
    let (chosen, rejected_model) = choose_model(h5, h8);
    let accepted = chosen.as_ref().is_some_and(|h| h.inliers.len() >= cfg.min_inliers);
    let failed_stage = if chosen.is_none() {
        Some("homography".to_string())
    } else if !accepted {
        Some("min_inliers".to_string())
    } else {
        None
    };
    AlignmentResult {
        pair,
        chosen,
        rejected_model,
        matches_used: ep.matches.len(),
        accepted,
        failed_stage,
        epipolar_degenerate: ep.degenerate,
        nn_median_ab,
        nn_median_ba,
    }
}
