//! Removal of changed features and registration of new map sections.

mod register;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use register::{
    icp_refine, median_of_scales, ransac_6dof, rigid_transform_3d, transform_error, Correspondence3D, IcpParams,
    IcpResult, Ransac6Params, RegistrationError, RegistrationResult, SCALE_EXHAUSTIVE_MAX, SCALE_SAMPLE_PAIRS,
};

use crate::model::{ChangeTag, ImageRecord, MapBundle, ModelError};
use crate::{RigidTransform, Vec3};

/// Prefix given to section image ids that collide with an old-map id.
pub const AUGMENT_PREFIX: &str = "aug-";

/// Feature indices per image id.
pub type FeatureTags = BTreeMap<String, BTreeSet<usize>>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum UpdateError {
    #[error("tag references unknown image '{0}'")]
    UnknownImage(String),
    #[error("image '{image}': feature index {index} out of range ({len} features)")]
    DanglingIndex { image: String, index: usize, len: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn check_tags(bundle: &MapBundle, tags: &FeatureTags) -> Result<(), UpdateError> {
    for (id, set) in tags {
        let img = bundle.get(id).ok_or_else(|| UpdateError::UnknownImage(id.clone()))?;
        if let Some(&index) = set.iter().next_back().filter(|&&i| i >= img.features.len()) {
            return Err(UpdateError::DanglingIndex { image: id.clone(), index, len: img.features.len() });
        }
    }
    Ok(())
}

/// New bundle without the tagged features; keypoint, descriptor and 3D point
/// go together. Images without tags are shared with the input.
pub fn remove_changed(bundle: &MapBundle, tags: &FeatureTags) -> Result<MapBundle, UpdateError> {
    check_tags(bundle, tags)?;
    let mut out = bundle.clone();
    for (id, set) in tags.iter().filter(|(_, s)| !s.is_empty()) {
        let old = &bundle.images[id];
        let mut img = ImageRecord::clone(old);
        img.features = old
            .features
            .iter()
            .enumerate()
            .filter(|(i, _)| !set.contains(i))
            .map(|(_, f)| f.clone())
            .collect();
        out.images.insert(id.clone(), Arc::new(img));
    }
    Ok(out)
}

/// New bundle with the tagged features marked [`ChangeTag::Changed`] and kept.
pub fn mark_changed(bundle: &MapBundle, tags: &FeatureTags) -> Result<MapBundle, UpdateError> {
    check_tags(bundle, tags)?;
    let mut out = bundle.clone();
    for (id, set) in tags.iter().filter(|(_, s)| !s.is_empty()) {
        let mut img = ImageRecord::clone(&bundle.images[id]);
        for &i in set {
            let f = &mut img.features[i];
            f.changed = f.changed.advance(ChangeTag::Changed).map_err(|e| e.in_image(id))?;
        }
        out.images.insert(id.clone(), Arc::new(img));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentParams {
    pub ransac: Ransac6Params,
    pub icp: IcpParams,
}

/// Per-stage figures of one registration; the matrix is row-major `[sR t; 0 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentReport {
    pub merged: bool,
    pub failure: Option<String>,
    pub scale: Option<f64>,
    pub transform: Option<[f64; 16]>,
    pub n_correspondences: usize,
    pub n_inliers: usize,
    pub ransac_rms: Option<f64>,
    /// ICP rms over the whole section cloud, initial then final.
    pub icp_rms: Option<(f64, f64)>,
    pub icp_iterations: usize,
    /// Rms over the RANSAC inliers under the final transform.
    pub final_rms: Option<f64>,
    pub renamed: BTreeMap<String, String>,
}

impl AugmentReport {
    fn failed(n: usize, reason: impl Into<String>) -> Self {
        AugmentReport {
            merged: false,
            failure: Some(reason.into()),
            scale: None,
            transform: None,
            n_correspondences: n,
            n_inliers: 0,
            ransac_rms: None,
            icp_rms: None,
            icp_iterations: 0,
            final_rms: None,
            renamed: BTreeMap::new(),
        }
    }
}

fn row_major(t: &RigidTransform) -> [f64; 16] {
    let m = t.to_matrix4();
    std::array::from_fn(|k| m[(k / 4, k % 4)])
}

fn world_points(bundle: &MapBundle) -> Vec<Vec3> {
    bundle.iter().flat_map(|i| i.features.iter().filter_map(|f| f.world)).collect()
}

fn scaled(s: f64) -> RigidTransform {
    RigidTransform { scale: s, ..RigidTransform::identity() }
}

/// Registers `section` into the frame of `old` and merges it.
///
/// Scale from distance ratios, then rigid RANSAC on the rescaled section,
/// then ICP over all 3D points. ICP is kept only if it does not worsen the
/// inlier residual by more than the RANSAC threshold, since a section that
/// extends past the old map can pull ICP off. On failure the old bundle is
/// returned unchanged along with the reason.
pub fn augment_map(
    old: &MapBundle,
    section: &MapBundle,
    corr: &[Correspondence3D],
    p: &AugmentParams,
) -> (MapBundle, AugmentReport) {
    let n = corr.len();
    if section.images.is_empty() {
        return (old.clone(), AugmentReport::failed(n, "empty section"));
    }
    if section.descriptor_len != old.descriptor_len {
        let why = format!("descriptor length {} vs {}", section.descriptor_len, old.descriptor_len);
        return (old.clone(), AugmentReport::failed(n, why));
    }
    let scale = match median_of_scales(corr, p.ransac.seed) {
        Ok(s) => s,
        Err(e) => return (old.clone(), AugmentReport::failed(n, format!("scale: {e}"))),
    };
    let rescaled: Vec<Correspondence3D> = corr.iter().map(|c| Correspondence3D::new(c.a, c.b * scale)).collect();
    let reg = match ransac_6dof(&rescaled, &p.ransac) {
        Ok(Some(r)) => r,
        Ok(None) => return (old.clone(), AugmentReport::failed(n, "ransac: no consensus")),
        Err(e) => return (old.clone(), AugmentReport::failed(n, format!("ransac: {e}"))),
    };

    let inlier_rms = |t: &RigidTransform| {
        let (sse, k) = rescaled
            .iter()
            .zip(&reg.inlier_flags)
            .filter(|(_, &f)| f)
            .fold((0.0, 0usize), |(s, k), (c, _)| (s + (t.apply(&c.b) - c.a).norm_squared(), k + 1));
        (sse / k as f64).sqrt()
    };
    let src: Vec<Vec3> = world_points(section).iter().map(|w| w * scale).collect();
    let dst = world_points(old);
    let icp = icp_refine(&src, &dst, &reg.transform, &p.icp);
    let rigid = if inlier_rms(&icp.transform) <= reg.rms_err + p.ransac.inlier_m {
        icp.transform
    } else {
        reg.transform
    };
    let final_rms = inlier_rms(&rigid);
    let full = rigid.compose(&scaled(scale));

    let mut merged = old.clone();
    let mut renamed = BTreeMap::new();
    for img in section.iter() {
        let mut id = img.id.clone();
        while merged.images.contains_key(&id) {
            id = format!("{AUGMENT_PREFIX}{id}");
        }
        if id != img.id {
            renamed.insert(img.id.clone(), id.clone());
        }
        let mut moved = img.clone();
        moved.id = id.clone();
        moved.pose.position = full.apply(&img.pose.position);
        moved.pose.orientation = rigid.rotation * img.pose.orientation;
        for f in &mut moved.features {
            f.world = f.world.map(|w| full.apply(&w));
        }
        merged.images.insert(id, Arc::new(moved));
    }

    let report = AugmentReport {
        merged: true,
        failure: None,
        scale: Some(scale),
        transform: Some(row_major(&full)),
        n_correspondences: n,
        n_inliers: reg.n_inliers,
        ransac_rms: Some(reg.rms_err),
        icp_rms: match (icp.rms_history.first(), icp.rms_history.last()) {
            (Some(&a), Some(&b)) => Some((a, b)),
            _ => None,
        },
        icp_iterations: icp.iterations,
        final_rms: Some(final_rms),
        renamed,
    };
    (merged, report)
}
