//! Per-pair change detection.
//!
//! Each feature of the target image is checked against the warped features of
//! the source image: it is good when a source feature lies within a pixel
//! radius and is also close in descriptor space. Visual segments then vote by
//! their share of bad features, and the union of outvoted segments is cleaned
//! of specks and pinholes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::alignment::{dist2, knn_match, AlignmentResult};
use crate::grid::SpatialGrid;
use crate::model::{components_4, warp_point, ChangeMask, ImageRecord, LabelRaster};
use crate::preprocess::{common_fov_mask, depth_filter, semantic_exempt_mask, SemanticPolicy, UsableFeatures};
use crate::scalar::median;
use crate::Vec2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChangeError {
    #[error("no descriptor distances to take a median of")]
    NoDistances,
    #[error("pair {0} was not accepted by alignment")]
    NotAccepted(String),
    #[error("pair {0} carries no homography")]
    MissingHomography(String),
    #[error("image {image} has no {raster} raster")]
    MissingRaster { image: String, raster: &'static str },
    #[error("homography of pair {0} is not invertible")]
    Singular(String),
    #[error("invalid change parameter {field}: {detail}")]
    BadParam { field: &'static str, detail: String },
}

/// Tunables of the detector; pixel quantities refer to the bundle's image frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChangeParams {
    /// Multiplier on the median nearest-neighbour descriptor distance.
    pub visual_mult: f64,
    pub geom_radius_px: f64,
    /// A segment is changed when its bad share exceeds this.
    pub blob_bad_ratio: f64,
    pub min_blob_area_px: usize,
    pub max_hole_area_px: usize,
}

impl Default for ChangeParams {
    fn default() -> Self {
        ChangeParams {
            visual_mult: 1.5,
            geom_radius_px: 50.0,
            blob_bad_ratio: 0.5,
            min_blob_area_px: 200,
            max_hole_area_px: 100,
        }
    }
}

impl ChangeParams {
    pub fn validate(&self) -> Result<(), ChangeError> {
        let positive = |field, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ChangeError::BadParam { field, detail: format!("must be positive, got {v}") })
            }
        };
        positive("visual_mult", self.visual_mult)?;
        positive("geom_radius_px", self.geom_radius_px)?;
        positive("min_blob_area_px", self.min_blob_area_px as f64)?;
        positive("max_hole_area_px", self.max_hole_area_px as f64)?;
        if !(self.blob_bad_ratio > 0.0 && self.blob_bad_ratio <= 1.0) {
            return Err(ChangeError::BadParam {
                field: "blob_bad_ratio",
                detail: format!("must lie in (0, 1], got {}", self.blob_bad_ratio),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictState {
    Good,
    Bad,
    /// Inside the common view but no warped source feature within the radius.
    NoMatchCandidate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVerdict {
    pub feature_idx: usize,
    pub state: VerdictState,
    /// Smallest descriptor distance among the radius candidates.
    pub best_dist: Option<f64>,
}

impl FeatureVerdict {
    pub fn is_bad(&self) -> bool {
        self.state != VerdictState::Good
    }
}

/// `mult` times the median of `dists`.
pub fn visual_threshold(dists: &[f64], mult: f64) -> Result<f64, ChangeError> {
    median(dists).map(|m| mult * m).ok_or(ChangeError::NoDistances)
}

/// Median distance from each `target` feature to its nearest `source` descriptor.
pub fn nn_median(target: &ImageRecord, source: &ImageRecord) -> Option<f64> {
    let dt: Vec<&[f32]> = target.features.iter().map(|f| f.descriptor.as_slice()).collect();
    let ds: Vec<&[f32]> = source.features.iter().map(|f| f.descriptor.as_slice()).collect();
    let knn = knn_match(&dt, &ds).ok()?;
    median(&knn.iter().map(|k| k.nn[0].1).collect::<Vec<_>>())
}

/// Everything `classify_features` needs besides the two images.
#[derive(Debug, Clone, Copy)]
pub struct ClassifyInput<'a> {
    /// Maps source pixels into the target frame.
    pub h: &'a nalgebra::Matrix3<f64>,
    pub usable_target: &'a UsableFeatures,
    pub usable_source: &'a UsableFeatures,
    /// Target pixels that may receive a verdict.
    pub eligible: &'a ChangeMask,
    /// Descriptor distance threshold.
    pub threshold: f64,
    pub radius_px: f64,
}

/// Verdicts for the usable target features that fall on eligible pixels.
pub fn classify_features(target: &ImageRecord, source: &ImageRecord, inp: &ClassifyInput) -> Vec<FeatureVerdict> {
    let mut warped_idx = Vec::new();
    let mut warped = Vec::new();
    for &j in &inp.usable_source.indices {
        if let Ok(p) = warp_point(inp.h, &source.features[j].px) {
            if p.x.is_finite() && p.y.is_finite() {
                warped_idx.push(j);
                warped.push([p.x, p.y]);
            }
        }
    }
    let cell = if inp.radius_px > 0.0 { inp.radius_px } else { 1.0 };
    let grid = SpatialGrid::new(warped, cell);
    let mut out = Vec::new();
    for &i in &inp.usable_target.indices {
        let f = &target.features[i];
        if !inp.eligible.at_px(&f.px) {
            continue;
        }
        let cands = grid.within(&[f.px.x, f.px.y], inp.radius_px);
        if cands.is_empty() {
            out.push(FeatureVerdict { feature_idx: i, state: VerdictState::NoMatchCandidate, best_dist: None });
            continue;
        }
        let best = cands
            .iter()
            .map(|&c| f64::from(dist2(f.descriptor.as_slice(), source.features[warped_idx[c]].descriptor.as_slice())).sqrt())
            .fold(f64::INFINITY, f64::min);
        let state = if best <= inp.threshold { VerdictState::Good } else { VerdictState::Bad };
        out.push(FeatureVerdict { feature_idx: i, state, best_dist: Some(best) });
    }
    out
}

/// Good/bad tallies per visual segment id.
pub fn segment_votes(visual: &LabelRaster, px: &[Vec2], verdicts: &[FeatureVerdict]) -> BTreeMap<u16, (usize, usize)> {
    let mut votes: BTreeMap<u16, (usize, usize)> = BTreeMap::new();
    for v in verdicts {
        if let Some(seg) = visual.at_px(&px[v.feature_idx]) {
            let e = votes.entry(seg).or_default();
            if v.is_bad() {
                e.1 += 1;
            } else {
                e.0 += 1;
            }
        }
    }
    votes
}

/// Union of segments whose bad share exceeds `bad_ratio`, restricted to `eligible`.
pub fn blob_vote(
    visual: &LabelRaster,
    px: &[Vec2],
    verdicts: &[FeatureVerdict],
    eligible: &ChangeMask,
    bad_ratio: f64,
) -> ChangeMask {
    let changed: Vec<u16> = segment_votes(visual, px, verdicts)
        .into_iter()
        .filter(|(_, (good, bad))| (*bad as f64) / ((good + bad) as f64) > bad_ratio)
        .map(|(seg, _)| seg)
        .collect();
    ChangeMask {
        image_id: eligible.image_id.clone(),
        width: eligible.width,
        height: eligible.height,
        bits: visual
            .labels
            .iter()
            .zip(&eligible.bits)
            .map(|(l, &e)| e && changed.binary_search(l).is_ok())
            .collect(),
    }
}

/// Removes set components below `min_blob` pixels, then fills interior unset
/// components below `max_hole` pixels (4-connectivity).
pub fn clean_mask(mask: &ChangeMask, min_blob: usize, max_hole: usize) -> ChangeMask {
    let mut out = mask.clone();
    let (labels, comps) = components_4(mask.width, mask.height, |i| mask.bits[i]);
    for (i, &l) in labels.iter().enumerate() {
        if l != u32::MAX && comps[l as usize].area < min_blob {
            out.bits[i] = false;
        }
    }
    let snapshot = out.bits.clone();
    let (labels, comps) = components_4(out.width, out.height, |i| !snapshot[i]);
    for (i, &l) in labels.iter().enumerate() {
        if l != u32::MAX {
            let c = comps[l as usize];
            if c.area < max_hole && !c.touches_border {
                out.bits[i] = true;
            }
        }
    }
    out
}

/// Intermediate products of one detection direction, kept for diagnostics.
#[derive(Debug, Clone)]
pub struct SideDetection {
    pub mask: ChangeMask,
    pub eligible: ChangeMask,
    pub verdicts: Vec<FeatureVerdict>,
    pub threshold: f64,
}

/// Runs one direction: `h` maps source pixels into the target frame.
pub fn detect_side(
    target: &ImageRecord,
    source: &ImageRecord,
    h: &nalgebra::Matrix3<f64>,
    nn_median_ts: Option<f64>,
    params: &ChangeParams,
    policy: &SemanticPolicy,
    min_feature_dist: f64,
) -> Result<SideDetection, ChangeError> {
    let sem = target
        .semantic
        .as_ref()
        .ok_or_else(|| ChangeError::MissingRaster { image: target.id.clone(), raster: "semantic" })?;
    let visual = target
        .visual
        .as_ref()
        .ok_or_else(|| ChangeError::MissingRaster { image: target.id.clone(), raster: "visual" })?;
    let fov = common_fov_mask(&target.id, h, (source.width, source.height), (target.width, target.height))
        .ok_or_else(|| ChangeError::Singular(format!("{}<-{}", target.id, source.id)))?;
    let eligible = semantic_exempt_mask(&target.id, sem, policy).and(&fov);
    let med = match nn_median_ts {
        Some(m) => m,
        None => nn_median(target, source).ok_or(ChangeError::NoDistances)?,
    };
    let threshold = params.visual_mult * med;
    let usable_target = depth_filter(target, min_feature_dist);
    let usable_source = depth_filter(source, min_feature_dist);
    let verdicts = classify_features(
        target,
        source,
        &ClassifyInput {
            h,
            usable_target: &usable_target,
            usable_source: &usable_source,
            eligible: &eligible,
            threshold,
            radius_px: params.geom_radius_px,
        },
    );
    let px = target.pixels();
    let voted = blob_vote(visual, &px, &verdicts, &eligible, params.blob_bad_ratio);
    let mask = clean_mask(&voted, params.min_blob_area_px, params.max_hole_area_px).and(&eligible);
    Ok(SideDetection { mask, eligible, verdicts, threshold })
}

/// Map-side and query-side detections of an accepted pair.
#[derive(Debug, Clone)]
pub struct PairDetection {
    pub map: SideDetection,
    pub query: SideDetection,
}

/// Runs detection on both images of an aligned pair.
///
/// `query` is image A of the alignment and `map` image B; the homography maps
/// query pixels into the map.
pub fn detect_change(
    pair: &AlignmentResult,
    query: &ImageRecord,
    map: &ImageRecord,
    params: &ChangeParams,
    policy: &SemanticPolicy,
    min_feature_dist: f64,
) -> Result<PairDetection, ChangeError> {
    let key = pair.pair.key();
    if !pair.accepted {
        return Err(ChangeError::NotAccepted(key));
    }
    let h = pair.chosen.as_ref().ok_or_else(|| ChangeError::MissingHomography(key.clone()))?;
    let inv = h.inverse_matrix().ok_or(ChangeError::Singular(key))?;
    let map_side = detect_side(map, query, &h.h, pair.nn_median_ba, params, policy, min_feature_dist)?;
    let query_side = detect_side(query, map, &inv, pair.nn_median_ab, params, policy, min_feature_dist)?;
    Ok(PairDetection { map: map_side, query: query_side })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CameraPose, FeaturePoint, ImageKind};
    use crate::Vec3;
    use nalgebra::Matrix3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blank(id: &str, w: u32, h: u32) -> ImageRecord {
        let pose = CameraPose::new(Vec3::zeros(), Matrix3::identity()).unwrap();
        ImageRecord::new(id, ImageKind::Map, pose, w, h)
    }

    fn random_desc(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
        (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect()
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(visual_threshold(&[1.0, 2.0, 3.0], 2.0).unwrap(), 4.0);
        assert_eq!(visual_threshold(&[1.0, 2.0, 3.0, 4.0], 1.0).unwrap(), 2.5);
        assert_eq!(visual_threshold(&[], 1.5), Err(ChangeError::NoDistances));
    }

    proptest! {
        #[test]
        fn threshold_equals_sort_and_index(d in prop::collection::vec(0.0..10.0f64, 1..50), m in 0.5..3.0f64) {
            let mut s = d.clone();
            s.sort_by(f64::total_cmp);
            let n = s.len();
            let med = if n % 2 == 1 { s[n / 2] } else { (s[n / 2 - 1] + s[n / 2]) / 2.0 };
            prop_assert_eq!(visual_threshold(&d, m).unwrap(), m * med);
        }
    }

    fn classify_all(t: &ImageRecord, s: &ImageRecord, h: &Matrix3<f64>, thr: f64, r: f64) -> Vec<FeatureVerdict> {
        let (ut, us) = (UsableFeatures::all(t), UsableFeatures::all(s));
        let eligible = ChangeMask::full(&t.id, t.width, t.height);
        classify_features(
            t,
            s,
            &ClassifyInput { h, usable_target: &ut, usable_source: &us, eligible: &eligible, threshold: thr, radius_px: r },
        )
    }

    #[test]
    fn self_pair_all_good() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut img = blank("a", 200, 100);
        for _ in 0..50 {
            let px = Vec2::new(rng.random_range(0.0..200.0), rng.random_range(0.0..100.0));
            img.features.push(FeaturePoint::new(px, random_desc(&mut rng, 8), None));
        }
        let v = classify_all(&img, &img, &Matrix3::identity(), 0.1, 50.0);
        assert_eq!(v.len(), 50);
        assert!(v.iter().all(|v| v.state == VerdictState::Good && v.best_dist == Some(0.0)));
    }

    #[test]
    fn candidate_beyond_radius_is_bad() {
        let mut t = blank("t", 200, 100);
        let mut s = blank("s", 200, 100);
        t.features.push(FeaturePoint::new(Vec2::new(10.0, 10.0), vec![0.0; 4], None));
        s.features.push(FeaturePoint::new(Vec2::new(61.0, 10.0), vec![0.0; 4], None));
        let v = classify_all(&t, &s, &Matrix3::identity(), 1.0, 50.0);
        assert_eq!(v[0].state, VerdictState::NoMatchCandidate);
        assert!(v[0].is_bad());
        let v = classify_all(&t, &s, &Matrix3::identity(), 1.0, 51.0);
        assert_eq!(v[0].state, VerdictState::Good);
    }

    #[test]
    fn ineligible_features_get_no_verdict() {
        let mut t = blank("t", 20, 10);
        t.features.push(FeaturePoint::new(Vec2::new(1.0, 1.0), vec![0.0; 4], None));
        t.features.push(FeaturePoint::new(Vec2::new(15.0, 1.0), vec![0.0; 4], None));
        let eligible = ChangeMask::from_fn("t", 20, 10, |x, _| x < 10);
        let u = UsableFeatures::all(&t);
        let v = classify_features(
            &t,
            &t,
            &ClassifyInput {
                h: &Matrix3::identity(),
                usable_target: &u,
                usable_source: &u,
                eligible: &eligible,
                threshold: 1.0,
                radius_px: 5.0,
            },
        );
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].feature_idx, 0);
    }

    #[test]
    fn planted_region_is_bad_elsewhere_good() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let shift = Matrix3::new(1.0, 0.0, 3.0, 0.0, 1.0, -2.0, 0.0, 0.0, 1.0);
        let mut t = blank("t", 400, 300);
        let mut s = blank("s", 400, 300);
        let region = |p: &Vec2| p.x > 100.0 && p.x < 220.0 && p.y > 80.0 && p.y < 200.0;
        for _ in 0..600 {
            let px = Vec2::new(rng.random_range(10.0..390.0), rng.random_range(10.0..290.0));
            let d = random_desc(&mut rng, 32);
            let noisy: Vec<f32> = d.iter().map(|x| x + rng.random_range(-0.02f32..0.02)).collect();
            let src = if region(&px) { random_desc(&mut rng, 32) } else { noisy };
            t.features.push(FeaturePoint::new(px, d, None));
            s.features.push(FeaturePoint::new(px - Vec2::new(3.0, -2.0), src, None));
        }
        let thr = 1.5 * nn_median(&t, &s).unwrap();
        let v = classify_all(&t, &s, &shift, thr, 50.0);
        let (mut in_bad, mut in_n, mut out_good, mut out_n) = (0, 0, 0, 0);
        for v in &v {
            if region(&t.features[v.feature_idx].px) {
                in_n += 1;
                in_bad += v.is_bad() as usize;
            } else {
                out_n += 1;
                out_good += (!v.is_bad()) as usize;
            }
        }
        assert!(in_bad as f64 >= 0.9 * in_n as f64, "{in_bad}/{in_n}");
        assert!(out_good as f64 >= 0.9 * out_n as f64, "{out_good}/{out_n}");
    }

    proptest! {
        #[test]
        fn grid_classification_equals_naive_scan(
            tp in prop::collection::vec((0.0..120.0f64, 0.0..80.0f64, 0u8..4), 1..60),
            sp in prop::collection::vec((0.0..120.0f64, 0.0..80.0f64, 0u8..4), 0..60),
            r in 1.0..40.0f64,
            thr in 0.0..3.0f64,
            dx in -10.0..10.0f64,
        ) {
            let mk = |id: &str, pts: &[(f64, f64, u8)]| {
                let mut img = blank(id, 120, 80);
                for &(x, y, d) in pts {
                    img.features.push(FeaturePoint::new(Vec2::new(x, y), vec![d as f32, 0.0], None));
                }
                img
            };
            let (t, s) = (mk("t", &tp), mk("s", &sp));
            let h = Matrix3::new(1.0, 0.0, dx, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
            let got = classify_all(&t, &s, &h, thr, r);
            prop_assert_eq!(got.len(), tp.len());
            for (i, &(x, y, d)) in tp.iter().enumerate() {
                let mut best: Option<f64> = None;
                for &(sx, sy, sd) in &sp {
                    let (wx, wy) = (sx + dx, sy);
                    if (wx - x) * (wx - x) + (wy - y) * (wy - y) <= r * r {
                        let dd = (d as f64 - sd as f64).abs();
                        best = Some(best.map_or(dd, |b: f64| b.min(dd)));
                    }
                }
                let state = match best {
                    None => VerdictState::NoMatchCandidate,
                    Some(b) if b <= thr => VerdictState::Good,
                    Some(_) => VerdictState::Bad,
                };
                prop_assert_eq!(got[i].state, state);
                prop_assert_eq!(got[i].best_dist, best);
            }
        }
    }

    fn verdict(i: usize, bad: bool) -> FeatureVerdict {
        let state = if bad { VerdictState::Bad } else { VerdictState::Good };
        FeatureVerdict { feature_idx: i, state, best_dist: Some(0.0) }
    }

    #[test]
    fn blob_examples() {
        // two segments: left (0) and right (1)
        let vis = LabelRaster::from_fn(20, 10, |x, _| (x >= 10) as u16);
        let px: Vec<Vec2> = (0..4).map(|i| Vec2::new(2.0 + i as f64, 5.0)).collect();
        let verdicts = vec![verdict(0, true), verdict(1, true), verdict(2, true), verdict(3, false)];
        let eligible = ChangeMask::full("i", 20, 10);
        let m = blob_vote(&vis, &px, &verdicts, &eligible, 0.5);
        assert_eq!(m.count_ones(), 100);
        assert!(m.get(0, 0) && !m.get(10, 0));
        // exactly half bad is not a majority
        let half = vec![verdict(0, true), verdict(1, false)];
        assert!(blob_vote(&vis, &px, &half, &eligible, 0.5).is_empty());
    }

    fn mask_strategy(w: u32, h: u32) -> impl Strategy<Value = ChangeMask> {
        prop::collection::vec(any::<bool>(), (w * h) as usize)
            .prop_map(move |bits| ChangeMask { image_id: "m".into(), width: w, height: h, bits })
    }

    proptest! {
        #[test]
        fn blob_equals_counting_oracle(
            labels in prop::collection::vec(0u16..5, 16 * 12),
            feats in prop::collection::vec((0.0..16.0f64, 0.0..12.0f64, any::<bool>()), 0..40),
            eligible in mask_strategy(16, 12),
            ratio in 0.05..1.0f64,
        ) {
            let vis = LabelRaster::new(16, 12, labels.clone()).unwrap();
            let px: Vec<Vec2> = feats.iter().map(|&(x, y, _)| Vec2::new(x, y)).collect();
            let verdicts: Vec<FeatureVerdict> = feats.iter().enumerate().map(|(i, &(_, _, b))| verdict(i, b)).collect();
            let m = blob_vote(&vis, &px, &verdicts, &eligible, ratio);
            let mut good = [0usize; 5];
            let mut bad = [0usize; 5];
            for &(x, y, b) in &feats {
                let seg = labels[(y.floor() as usize) * 16 + x.floor() as usize] as usize;
                if b { bad[seg] += 1 } else { good[seg] += 1 }
            }
            for (k, &label) in labels.iter().enumerate().take(16 * 12) {
                let s = label as usize;
                let n = good[s] + bad[s];
                let changed = n > 0 && bad[s] as f64 / n as f64 > ratio;
                prop_assert_eq!(m.bits[k], changed && eligible.bits[k]);
            }
        }

        #[test]
        fn flipping_good_to_bad_never_shrinks(
            labels in prop::collection::vec(0u16..4, 12 * 10),
            feats in prop::collection::vec((0.0..12.0f64, 0.0..10.0f64, any::<bool>()), 1..30),
            flip in any::<prop::sample::Index>(),
        ) {
            let vis = LabelRaster::new(12, 10, labels).unwrap();
            let px: Vec<Vec2> = feats.iter().map(|&(x, y, _)| Vec2::new(x, y)).collect();
            let mut verdicts: Vec<FeatureVerdict> = feats.iter().enumerate().map(|(i, &(_, _, b))| verdict(i, b)).collect();
            let eligible = ChangeMask::full("m", 12, 10);
            let before = blob_vote(&vis, &px, &verdicts, &eligible, 0.5);
            let k = flip.index(verdicts.len());
            verdicts[k].state = VerdictState::Bad;
            let after = blob_vote(&vis, &px, &verdicts, &eligible, 0.5);
            prop_assert!(before.is_subset_of(&after));
        }

        #[test]
        fn clean_is_idempotent(m in mask_strategy(24, 18), blob in 1usize..30, hole in 1usize..30) {
            let once = clean_mask(&m, blob, hole);
            prop_assert_eq!(clean_mask(&once, blob, hole), once);
        }
    }

    #[test]
    fn clean_examples() {
        let speck = ChangeMask::from_fn("m", 40, 40, |x, y| x < 5 && y < 2);
        assert!(clean_mask(&speck, 200, 100).is_empty());
        // 20x20 solid block with a 50 px interior hole (10x5)
        let holed = ChangeMask::from_fn("m", 40, 40, |x, y| {
            let block = (5..25).contains(&x) && (5..25).contains(&y);
            let hole = (10..20).contains(&x) && (10..15).contains(&y);
            block && !hole
        });
        let c = clean_mask(&holed, 200, 100);
        assert_eq!(c.count_ones(), 400);
    }

    #[test]
    fn params_validation_names_field() {
        let p = ChangeParams { geom_radius_px: -1.0, ..Default::default() };
        assert!(matches!(p.validate(), Err(ChangeError::BadParam { field: "geom_radius_px", .. })));
        let p = ChangeParams { blob_bad_ratio: 1.5, ..Default::default() };
        assert!(matches!(p.validate(), Err(ChangeError::BadParam { field: "blob_bad_ratio", .. })));
        ChangeParams::default().validate().unwrap();
    }
}
