//! Indirect change detection: carry change tags from master map images to
//! other map images that look alike and see the same 3D points.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::grid::SpatialGrid;
use crate::model::{ChangeTag, ImageKind, ImageRecord, MapBundle};
use crate::pairing::angular_separation;
use crate::Vec3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PropagateError {
    #[error("image {0} has no global descriptor")]
    MissingDescriptor(String),
    #[error("global descriptors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("invalid propagation parameter {field}: {detail}")]
    BadParam { field: &'static str, detail: String },
    #[error("tag refers to unknown image {0}")]
    UnknownImage(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationParams {
    pub min_global_corr: f64,
    pub max_fov_sep_rad: f64,
    pub search_radius_m: f64,
    pub significant_change_frac: f64,
}

impl Default for PropagationParams {
    fn default() -> Self {
        PropagationParams {
            min_global_corr: 0.25,
            max_fov_sep_rad: 0.4,
            search_radius_m: 1.0,
            significant_change_frac: 0.05,
        }
    }
}

impl PropagationParams {
    pub fn validate(&self) -> Result<(), PropagateError> {
        let check = |field, v: f64, upper: Option<f64>| {
            let ok = v > 0.0 && v.is_finite() && upper.is_none_or(|u| v < u);
            if ok {
                Ok(())
            } else {
                let range = if upper.is_some() { "in (0, 1)" } else { "positive" };
                Err(PropagateError::BadParam { field, detail: format!("must be {range}, got {v}") })
            }
        };
        check("min_global_corr", self.min_global_corr, Some(1.0))?;
        check("max_fov_sep_rad", self.max_fov_sep_rad, None)?;
        check("search_radius_m", self.search_radius_m, None)?;
        check("significant_change_frac", self.significant_change_frac, Some(1.0))
    }
}

/// Inner product of two unit-norm global descriptors.
pub fn global_similarity(g1: &[f64], g2: &[f64]) -> Result<f64, PropagateError> {
    if g1.len() != g2.len() {
        return Err(PropagateError::LengthMismatch(g1.len(), g2.len()));
    }
    Ok(g1.iter().zip(g2).map(|(a, b)| a * b).sum())
}

/// Similarity of two images' global descriptors.
pub fn image_similarity(a: &ImageRecord, b: &ImageRecord) -> Result<f64, PropagateError> {
    let ga = a.global_desc.as_deref().ok_or_else(|| PropagateError::MissingDescriptor(a.id.clone()))?;
    let gb = b.global_desc.as_deref().ok_or_else(|| PropagateError::MissingDescriptor(b.id.clone()))?;
    global_similarity(ga, gb)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasterMatch {
    pub map_id: String,
    pub similarity: f64,
    pub fov_sep: f64,
}

/// Most similar master passing both gates; ties go to the smaller id.
///
/// Masters without a global descriptor, and the target itself, are skipped.
pub fn find_master_match(target: &ImageRecord, masters: &[&ImageRecord], p: &PropagationParams) -> Option<MasterMatch> {
    let mut best: Option<MasterMatch> = None;
    for m in masters {
        if m.id == target.id {
            continue;
        }
        let Ok(similarity) = image_similarity(target, m) else { continue };
        let Ok(fov_sep) = angular_separation(&target.pose.los(), &m.pose.los()) else { continue };
        if !(similarity >= p.min_global_corr && fov_sep <= p.max_fov_sep_rad) {
            continue;
        }
        let wins = match &best {
            None => true,
            Some(b) => similarity > b.similarity || (similarity == b.similarity && m.id < b.map_id),
        };
        if wins {
            best = Some(MasterMatch { map_id: m.id.clone(), similarity, fov_sep });
        }
    }
    best
}

/// Target features with a 3D point within `radius` of any changed point.
pub fn propagate_change(changed_points: &[Vec3], target: &ImageRecord, radius: f64) -> BTreeSet<usize> {
    if changed_points.is_empty() || !(radius >= 0.0) {
        return BTreeSet::new();
    }
    let cell = if radius > 0.0 && radius.is_finite() { radius } else { 1.0 };
    let grid = SpatialGrid::new(changed_points.iter().map(|p| [p.x, p.y, p.z]).collect(), cell);
    target
        .features
        .iter()
        .enumerate()
        .filter_map(|(i, f)| f.world.filter(|w| grid.any_within(&[w.x, w.y, w.z], radius)).map(|_| i))
        .collect()
}

/// Changed share among features carrying a 3D point; `None` when there are none.
pub fn changed_fraction(img: &ImageRecord, changed: &BTreeSet<usize>) -> Option<f64> {
    let with_3d = img.features.iter().filter(|f| f.world.is_some()).count();
    if with_3d == 0 {
        return None;
    }
    let n = changed.iter().filter(|&&i| img.features.get(i).is_some_and(|f| f.world.is_some())).count();
    Some(n as f64 / with_3d as f64)
}

/// Whether at least `frac` of the image's 3D features carry a changed tag.
pub fn is_significantly_changed(img: &ImageRecord, frac: f64) -> bool {
    let changed: BTreeSet<usize> =
        img.features.iter().enumerate().filter(|(_, f)| f.changed == ChangeTag::Changed).map(|(i, _)| i).collect();
    is_significantly_changed_by(img, &changed, frac)
}

/// Same as [`is_significantly_changed`] with the tags given externally.
pub fn is_significantly_changed_by(img: &ImageRecord, changed: &BTreeSet<usize>, frac: f64) -> bool {
    changed_fraction(img, changed).is_some_and(|f| f >= frac)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Direct,
    Propagated,
}

/// Per image, changed feature index to how it was found.
pub type TagMap = BTreeMap<String, BTreeMap<usize, Provenance>>;

/// Outcome of propagating from a set of masters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PropagationOutcome {
    pub tags: TagMap,
    /// Target image to the master it was matched with.
    pub matches: BTreeMap<String, MasterMatch>,
}

/// Starts from the direct tags of master images and adds propagated tags to
/// every other map image. Existing tags are never removed.
pub fn propagate_tags(
    bundle: &MapBundle,
    direct: &BTreeMap<String, BTreeSet<usize>>,
    p: &PropagationParams,
) -> Result<PropagationOutcome, PropagateError> {
    let mut out = PropagationOutcome::default();
    let mut masters = Vec::new();
    for (id, set) in direct {
        let img = bundle.get(id).ok_or_else(|| PropagateError::UnknownImage(id.clone()))?;
        masters.push(img);
        out.tags.entry(id.clone()).or_default().extend(set.iter().map(|&i| (i, Provenance::Direct)));
    }
    let changed_points: BTreeMap<&str, Vec<Vec3>> = direct
        .iter()
        .map(|(id, set)| {
            let img = bundle.get(id).expect("checked above");
            let pts = set.iter().filter_map(|&i| img.features.get(i).and_then(|f| f.world)).collect();
            (id.as_str(), pts)
        })
        .collect();
    for target in bundle.of_kind(ImageKind::Map) {
        if direct.contains_key(&target.id) {
            continue;
        }
        let Some(m) = find_master_match(target, &masters, p) else { continue };
        let found = propagate_change(&changed_points[m.map_id.as_str()], target, p.search_radius_m);
        out.matches.insert(target.id.clone(), m);
        if !found.is_empty() {
            let entry = out.tags.entry(target.id.clone()).or_default();
            for i in found {
                entry.entry(i).or_insert(Provenance::Propagated);
            }
        }
    }
    Ok(out)
}
