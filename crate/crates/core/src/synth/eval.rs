//! Runs the pipeline on a generated scene and scores every stage.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::{make_section, GroundTruth, SceneSpec};
use crate::config::PipelineConfig;
use crate::mapupdate::{augment_map, transform_error, AugmentParams};
use crate::metrics::{aggregate_scores, confusion, Confusion, Scores};
use crate::model::{warp_point, ImageKind, MapBundle};
use crate::pipeline::{run_pipeline, PipelineError, StageFailure};
use crate::preprocess::common_fov_mask;
use crate::propagate::Provenance;
use crate::Vec2;

/// Map-side mask of one accepted pair against the truth inside the pair's true common view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMaskReport {
    pub key: String,
    pub dof: u8,
    pub inliers: usize,
    pub homography_err_px: Option<f64>,
    /// The truth has changed pixels inside the common view.
    pub covered: bool,
    pub iou: f64,
    pub predicted_px: usize,
    pub truth_px: usize,
    pub confusion: Confusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasterReport {
    pub map_id: String,
    pub support: usize,
    pub iou: f64,
    pub tagged: usize,
}

/// Tag quality over map features that carry a 3D point.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TagReport {
    pub direct: usize,
    pub propagated: usize,
    pub true_changed: usize,
    pub removed_changed: usize,
    pub unchanged: usize,
    pub removed_unchanged: usize,
    /// Share of truly changed features removed; `None` without changed features.
    pub recall: Option<f64>,
    /// Share of tags that hit changed features; `None` without tags.
    pub precision: Option<f64>,
    /// Share of unchanged features removed.
    pub lost_unchanged: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    pub merged: bool,
    pub failure: Option<String>,
    pub n_correspondences: usize,
    pub n_inliers: usize,
    pub scale_rel_err: Option<f64>,
    pub rotation_err_deg: Option<f64>,
    pub translation_err_m: Option<f64>,
    /// Rms distance between merged section points and their originals.
    pub point_rms_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_map_images: usize,
    pub n_query_images: usize,
    pub n_pairs: usize,
    pub n_true_pairs: usize,
    pub pair_precision: Option<f64>,
    pub pair_recall: Option<f64>,
    pub n_accepted: usize,
    pub n_dof5: usize,
    pub n_dof8: usize,
    pub median_homography_err_px: Option<f64>,
    pub pairs: Vec<PairMaskReport>,
    pub n_covered: usize,
    pub min_covered_iou: Option<f64>,
    pub n_nonempty_masks: usize,
    pub mask_scores: Option<Scores>,
    pub masters: Vec<MasterReport>,
    pub skipped_masters: BTreeMap<String, String>,
    pub tags: TagReport,
    pub significant_images: Vec<String>,
    pub registration: Option<RegistrationReport>,
    pub failures: Vec<StageFailure>,
}

/// Mean distance between estimated and true warps over a grid of query
/// pixels that land inside the map image.
pub fn homography_error_px(est: &Matrix3<f64>, truth: &Matrix3<f64>, dims: (u32, u32)) -> Option<f64> {
    let (w, h) = (f64::from(dims.0), f64::from(dims.1));
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..10 {
        for j in 0..10 {
            let p = Vec2::new((f64::from(i) + 0.5) * w / 10.0, (f64::from(j) + 0.5) * h / 10.0);
            let (Ok(a), Ok(b)) = (warp_point(est, &p), warp_point(truth, &p)) else { continue };
            if b.x >= 0.0 && b.x < w && b.y >= 0.0 && b.y < h {
                sum += (a - b).norm();
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn true_pairs(bundle: &MapBundle, cfg: &PipelineConfig) -> BTreeSet<(String, String)> {
    let mut out = BTreeSet::new();
    for q in bundle.of_kind(ImageKind::Query) {
        for m in bundle.of_kind(ImageKind::Map) {
            let d = (q.pose.position - m.pose.position).norm();
            let ang = q.pose.los().dot(&m.pose.los()).clamp(-1.0, 1.0).acos();
            if d <= cfg.pairing.max_dist_m && ang <= cfg.pairing.max_ang_rad {
                out.insert((q.id.clone(), m.id.clone()));
            }
        }
    }
    out
}

fn tag_report(bundle: &MapBundle, gt: &GroundTruth, run: &crate::pipeline::PipelineRun) -> TagReport {
    let mut r = TagReport::default();
    for t in run.propagation.tags.values() {
        for p in t.values() {
            match p {
                Provenance::Direct => r.direct += 1,
                Provenance::Propagated => r.propagated += 1,
            }
        }
    }
    let mut tagged_total = 0;
    for img in bundle.of_kind(ImageKind::Map) {
        let truth = gt.changed_features.get(&img.id);
        let tags = run.tags.get(&img.id);
        for (i, f) in img.features.iter().enumerate() {
            if f.world.is_none() {
                continue;
            }
            let changed = truth.is_some_and(|s| s.contains(&i));
            let tagged = tags.is_some_and(|s| s.contains(&i));
            tagged_total += usize::from(tagged);
            match (changed, tagged) {
                (true, t) => {
                    r.true_changed += 1;
                    r.removed_changed += usize::from(t);
                }
                (false, t) => {
                    r.unchanged += 1;
                    r.removed_unchanged += usize::from(t);
                }
            }
        }
    }
    r.recall = ratio(r.removed_changed, r.true_changed);
    r.precision = ratio(r.removed_changed, tagged_total);
    r.lost_unchanged = ratio(r.removed_unchanged, r.unchanged).unwrap_or(0.0);
    r
}

fn registration_report(bundle: &MapBundle, spec: &SceneSpec, cfg: &PipelineConfig) -> Option<RegistrationReport> {
    let s = spec.section.as_ref()?;
    let (section, corr) = make_section(bundle, s, cfg.seed);
    let params = AugmentParams { ransac: cfg.ransac6(), icp: cfg.icp() };
    let (merged, rep) = augment_map(bundle, &section, &corr, &params);
    let mut out = RegistrationReport {
        merged: rep.merged,
        failure: rep.failure.clone(),
        n_correspondences: rep.n_correspondences,
        n_inliers: rep.n_inliers,
        scale_rel_err: None,
        rotation_err_deg: None,
        translation_err_m: None,
        point_rms_m: None,
    };
    if !rep.merged {
        return Some(out);
    }
    let truth = s.truth();
    let m = rep.transform.expect("merged report carries a transform");
    let est_scale = rep.scale.expect("merged report carries a scale");
    let rot = Matrix3::from_fn(|r, c| m[r * 4 + c] / est_scale);
    let t = crate::Vec3::new(m[3], m[7], m[11]);
    let est = crate::RigidTransform { rotation: rot, translation: t, scale: est_scale };
    let (deg, dist) = transform_error(&est, &truth);
    out.scale_rel_err = Some((est_scale - truth.scale).abs() / truth.scale);
    out.rotation_err_deg = Some(deg);
    out.translation_err_m = Some(dist);
    let mut sse = 0.0;
    let mut n = 0usize;
    for img in section.iter() {
        let new_id = rep.renamed.get(&img.id).unwrap_or(&img.id);
        let (Some(moved), Some(orig)) = (merged.get(new_id), bundle.get(&img.id)) else { continue };
        for (f, g) in moved.features.iter().zip(&orig.features) {
            if let (Some(a), Some(b)) = (f.world, g.world) {
                sse += (a - b).norm_squared();
                n += 1;
            }
        }
    }
    out.point_rms_m = (n > 0).then(|| (sse / n as f64).sqrt());
    Some(out)
}

/// Runs every stage on `bundle` and compares against `gt`.
pub fn evaluate_pipeline(
    bundle: &MapBundle,
    gt: &GroundTruth,
    spec: &SceneSpec,
    cfg: &PipelineConfig,
) -> Result<EvalReport, PipelineError> {
    let run = run_pipeline(bundle, cfg)?;
    let truth_pairs = true_pairs(bundle, cfg);
    let found: BTreeSet<(String, String)> = run.pairs.iter().map(|p| (p.query_id.clone(), p.map_id.clone())).collect();
    let hits = found.intersection(&truth_pairs).count();

    let mut homography_errs = Vec::new();
    let (mut n_dof5, mut n_dof8) = (0, 0);
    for a in run.alignments.iter().filter(|a| a.accepted) {
        match a.chosen.as_ref().map(|h| h.dof.count()) {
            Some(5) => n_dof5 += 1,
            Some(8) => n_dof8 += 1,
            _ => {}
        }
    }

    let mut pairs = Vec::new();
    let mut confusions = Vec::new();
    for pm in &run.masks {
        let q = &bundle.images[&pm.pair.query_id];
        let m = &bundle.images[&pm.pair.map_id];
        let a = run
            .alignments
            .iter()
            .find(|a| a.pair.key() == pm.pair.key())
            .expect("masks come from alignments");
        let chosen = a.chosen.as_ref().expect("accepted alignments carry a model");
        let h_true = gt.homography(q, m);
        let herr = h_true.and_then(|t| homography_error_px(&chosen.h, &t, (m.width, m.height)));
        if let Some(e) = herr {
            homography_errs.push(e);
        }
        let fov = h_true
            .and_then(|t| common_fov_mask(&m.id, &t, (q.width, q.height), (m.width, m.height)))
            .unwrap_or_else(|| crate::ChangeMask::full(m.id.clone(), m.width, m.height));
        let truth = gt.masks[&m.id].and(&fov);
        let c = confusion(&pm.map_mask, &truth).expect("masks share the image size");
        confusions.push(c);
        pairs.push(PairMaskReport {
            key: pm.pair.key(),
            dof: chosen.dof.count(),
            inliers: chosen.inliers.len(),
            homography_err_px: herr,
            covered: !truth.is_empty(),
            iou: pm.map_mask.iou(&truth),
            predicted_px: pm.map_mask.count_ones(),
            truth_px: truth.count_ones(),
            confusion: c,
        });
    }
    let covered: Vec<f64> = pairs.iter().filter(|p| p.covered).map(|p| p.iou).collect();

    let masters = run
        .masters
        .iter()
        .map(|(id, mm)| MasterReport {
            map_id: id.clone(),
            support: mm.support,
            iou: mm.binary.iou(&gt.masks[id]),
            tagged: run.propagation.tags.get(id).map_or(0, |t| t.len()),
        })
        .collect();

    Ok(EvalReport {
        n_map_images: bundle.of_kind(ImageKind::Map).len(),
        n_query_images: bundle.of_kind(ImageKind::Query).len(),
        n_pairs: run.pairs.len(),
        n_true_pairs: truth_pairs.len(),
        pair_precision: ratio(hits, found.len()),
        pair_recall: ratio(hits, truth_pairs.len()),
        n_accepted: run.alignments.iter().filter(|a| a.accepted).count(),
        n_dof5,
        n_dof8,
        median_homography_err_px: crate::scalar::median(&homography_errs),
        n_covered: covered.len(),
        min_covered_iou: covered.iter().copied().reduce(f64::min),
        n_nonempty_masks: pairs.iter().filter(|p| p.predicted_px > 0).count(),
        mask_scores: aggregate_scores(&confusions, cfg.eval.averaging),
        pairs,
        masters,
        skipped_masters: run.skipped_masters.iter().map(|(k, e)| (k.clone(), e.to_string())).collect(),
        tags: tag_report(bundle, gt, &run),
        significant_images: run.significant.iter().cloned().collect(),
        registration: registration_report(bundle, spec, cfg),
        failures: run.failures,
    })
}
