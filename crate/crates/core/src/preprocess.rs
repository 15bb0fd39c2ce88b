//! Filters applied before change detection: near-field depth rejection,
//! semantic exemption and common field of view.

use std::collections::BTreeSet;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::model::{warp_point, ChangeMask, ImageRecord, LabelRaster};
use crate::Vec2;

pub const DEFAULT_MIN_FEATURE_DIST_M: f64 = 3.0;

/// Label scheme of the synthetic bundles and of the default configuration.
pub mod labels {
    pub const UNKNOWN: u16 = 0;
    pub const BUILDING: u16 = 1;
    pub const SKY: u16 = 2;
    pub const GROUND: u16 = 3;
    pub const PERSON: u16 = 4;
    pub const PLANT: u16 = 5;
}

/// Label ids that never count as change (sky, ground, people, vegetation in
/// whatever scheme the bundle uses).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticPolicy {
    pub exempt_class_ids: BTreeSet<u16>,
}

impl SemanticPolicy {
    pub fn new(ids: impl IntoIterator<Item = u16>) -> Self {
        SemanticPolicy { exempt_class_ids: ids.into_iter().collect() }
    }

    /// Sky, ground, people and plants under [`labels`].
    pub fn street() -> Self {
        SemanticPolicy::new([labels::SKY, labels::GROUND, labels::PERSON, labels::PLANT])
    }

    pub fn is_exempt(&self, label: u16) -> bool {
        self.exempt_class_ids.contains(&label)
    }
}

/// Feature usability after the depth filter.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UsableFeatures {
    /// Ascending indices of features kept.
    pub indices: Vec<usize>,
    /// Kept features with no 3D point; they may vote visually but are never tagged.
    pub no_3d: BTreeSet<usize>,
}

impl UsableFeatures {
    /// Every feature of `img`, with the no-3D flags filled in.
    pub fn all(img: &ImageRecord) -> Self {
        UsableFeatures {
            indices: (0..img.features.len()).collect(),
            no_3d: img.features.iter().enumerate().filter(|(_, f)| f.world.is_none()).map(|(i, _)| i).collect(),
        }
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }
}

/// Drops features whose 3D point is closer than `min_dist` to the camera center.
pub fn depth_filter(img: &ImageRecord, min_dist: f64) -> UsableFeatures {
    let c = img.pose.position;
    let mut out = UsableFeatures::default();
    for (i, f) in img.features.iter().enumerate() {
        match f.world {
            Some(w) => {
                if (w - c).norm() >= min_dist {
                    out.indices.push(i);
                }
            }
            None => {
                out.indices.push(i);
                out.no_3d.insert(i);
            }
        }
    }
    out
}

/// Bit set where the pixel's class is eligible for change.
pub fn semantic_exempt_mask(image_id: &str, sem: &LabelRaster, policy: &SemanticPolicy) -> ChangeMask {
    ChangeMask {
        image_id: image_id.to_string(),
        width: sem.width,
        height: sem.height,
        bits: sem.labels.iter().map(|&l| !policy.is_exempt(l)).collect(),
    }
}

/// Bit set at destination pixel `p` when `H⁻¹ p` lands inside the source
/// image; `h` maps source pixels into the destination frame.
///
/// Pixel centers (`x + 0.5`, `y + 0.5`) are tested. Returns `None` when `h`
/// is not invertible.
pub fn common_fov_mask(
    image_id: &str,
    h: &Matrix3<f64>,
    src_dims: (u32, u32),
    dst_dims: (u32, u32),
) -> Option<ChangeMask> {
    let inv = h.try_inverse()?;
    let (sw, sh) = (f64::from(src_dims.0), f64::from(src_dims.1));
    Some(ChangeMask::from_fn(image_id, dst_dims.0, dst_dims.1, |x, y| {
        let p = Vec2::new(f64::from(x) + 0.5, f64::from(y) + 0.5);
        match warp_point(&inv, &p) {
            Ok(q) => q.x >= 0.0 && q.x < sw && q.y >= 0.0 && q.y < sh,
            Err(_) => false,
        }
    }))
}
