//! Domain types for map bundles: poses, features, images, rasters and transforms.
//!
//! Pixel convention throughout the crate: x to the right, y down, origin at
//! the top-left corner of the image. Camera frames use +Z as the optical axis.

mod io;
pub mod pgm;
mod raster;
mod transform;

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::Matrix3;

pub use io::{read_bundle, write_bundle, BundleError, FORMAT_VERSION};
pub use raster::{components_4, pixel_index, ChangeMask, Component, LabelRaster};
pub use transform::{
    normalise, rotation_angle, rotation_error, row_major, warp_point, warp_point2, Dof, Homography, Rigid3,
    TransformError,
};

use crate::{Vec2, Vec3};

/// Default descriptor length.
pub const DEFAULT_DESCRIPTOR_LEN: usize = 512;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("image '{image}': invalid {field}: {detail}")]
pub struct ModelError {
    pub image: String,
    pub field: String,
    pub detail: String,
}

impl ModelError {
    pub fn invariant(image: &str, field: &str, detail: impl Into<String>) -> Self {
        ModelError { image: image.to_owned(), field: field.to_owned(), detail: detail.into() }
    }

    pub(crate) fn in_image(mut self, image: &str) -> Self {
        if self.image.is_empty() {
            self.image = image.to_owned();
        }
        self
    }
}

/// Camera position and orientation in the world frame.
///
/// `orientation` maps camera-frame vectors into the world frame, so its
/// columns are the camera axes expressed in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub position: Vec3,
    pub orientation: Matrix3<f64>,
}

impl CameraPose {
    pub fn new(position: Vec3, orientation: Matrix3<f64>) -> Result<Self, ModelError> {
        let p = CameraPose { position, orientation };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.position.iter().all(|v| v.is_finite()) {
            return Err(ModelError::invariant("", "pose.position", "non-finite coordinate"));
        }
        let err = rotation_error(&self.orientation);
        if !(err <= 1e-9) {
            return Err(ModelError::invariant(
                "",
                "pose.orientation",
                format!("not a proper rotation (error {err:e})"),
            ));
        }
        Ok(())
    }

    /// Optical axis (camera +Z) in the world frame.
    pub fn los(&self) -> Vec3 {
        self.orientation.column(2).normalize()
    }

    /// World point expressed in the camera frame.
    pub fn to_camera(&self, world: &Vec3) -> Vec3 {
        self.orientation.transpose() * (world - self.position)
    }
}

/// Fixed-length float descriptor compared by L2 distance.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Descriptor(pub Vec<f32>);

impl Descriptor {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl AsRef<[f32]> for Descriptor {
    fn as_ref(&self) -> &[f32] {
        &self.0
    }
}

/// Change state of a feature within one pipeline run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub enum ChangeTag {
    #[default]
    Untagged,
    Unchanged,
    Changed,
}

impl ChangeTag {
    /// Allowed moves: untagged → anything, unchanged → changed; staying put is fine.
    pub fn advance(self, to: ChangeTag) -> Result<ChangeTag, ModelError> {
        use ChangeTag::*;
        match (self, to) {
            (a, b) if a == b => Ok(b),
            (Untagged, b) => Ok(b),
            (Unchanged, Changed) => Ok(Changed),
            (a, b) => Err(ModelError::invariant(
                "",
                "feature.changed",
                format!("illegal transition {a:?} -> {b:?}"),
            )),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ChangeTag::Untagged => "untagged",
            ChangeTag::Unchanged => "unchanged",
            ChangeTag::Changed => "changed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "untagged" => Some(ChangeTag::Untagged),
            "unchanged" => Some(ChangeTag::Unchanged),
            "changed" => Some(ChangeTag::Changed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePoint {
    pub px: Vec2,
    pub descriptor: Descriptor,
    /// Triangulated world point in meters; `None` when the feature has no 3D value.
    pub world: Option<Vec3>,
    pub changed: ChangeTag,
}

impl FeaturePoint {
    pub fn new(px: Vec2, descriptor: Vec<f32>, world: Option<Vec3>) -> Self {
        FeaturePoint { px, descriptor: Descriptor(descriptor), world, changed: ChangeTag::Untagged }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ImageKind {
    Map,
    Query,
}

impl ImageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ImageKind::Map => "map",
            ImageKind::Query => "query",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub kind: ImageKind,
    pub pose: CameraPose,
    pub width: u32,
    pub height: u32,
    pub features: Vec<FeaturePoint>,
    pub global_desc: Option<Vec<f64>>,
    pub semantic: Option<LabelRaster>,
    pub visual: Option<LabelRaster>,
}

impl ImageRecord {
    pub fn new(id: impl Into<String>, kind: ImageKind, pose: CameraPose, width: u32, height: u32) -> Self {
        ImageRecord {
            id: id.into(),
            kind,
            pose,
            width,
            height,
            features: Vec::new(),
            global_desc: None,
            semantic: None,
            visual: None,
        }
    }

    pub fn pixels(&self) -> Vec<Vec2> {
        self.features.iter().map(|f| f.px).collect()
    }

    /// Checks every per-image invariant; errors carry this image's id.
    pub fn validate(&self, descriptor_len: usize) -> Result<(), ModelError> {
        self.validate_inner(descriptor_len).map_err(|e| e.in_image(&self.id))
    }

    fn validate_inner(&self, descriptor_len: usize) -> Result<(), ModelError> {
        validate_id(&self.id)?;
        self.pose.validate()?;
        if self.width == 0 || self.height == 0 {
            return Err(ModelError::invariant("", "dims", "zero width or height"));
        }
        let (w, h) = (f64::from(self.width), f64::from(self.height));
        for (i, f) in self.features.iter().enumerate() {
            if !(f.px.x >= 0.0 && f.px.x < w && f.px.y >= 0.0 && f.px.y < h) {
                return Err(ModelError::invariant(
                    "",
                    &format!("features[{i}].px"),
                    format!("({}, {}) outside {}x{}", f.px.x, f.px.y, self.width, self.height),
                ));
            }
            if f.descriptor.len() != descriptor_len {
                return Err(ModelError::invariant(
                    "",
                    &format!("features[{i}].descriptor"),
                    format!("length {} but bundle uses {descriptor_len}", f.descriptor.len()),
                ));
            }
            if !f.descriptor.is_finite() {
                return Err(ModelError::invariant(
                    "",
                    &format!("features[{i}].descriptor"),
                    "non-finite value",
                ));
            }
            if let Some(p) = &f.world {
                if !p.iter().all(|v| v.is_finite()) {
                    return Err(ModelError::invariant(
                        "",
                        &format!("features[{i}].world"),
                        "non-finite coordinate",
                    ));
                }
            }
        }
        if let Some(g) = &self.global_desc {
            let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !((n - 1.0).abs() <= 1e-6) {
                return Err(ModelError::invariant("", "global_desc", format!("norm {n}, expected 1")));
            }
        }
        for (name, raster) in [("semantic", &self.semantic), ("visual", &self.visual)] {
            if let Some(r) = raster {
                r.check_len(name)?;
                if r.width != self.width || r.height != self.height {
                    return Err(ModelError::invariant(
                        "",
                        name,
                        format!("{}x{} raster on a {}x{} image", r.width, r.height, self.width, self.height),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Image ids double as file names, so they are restricted to a portable set.
pub fn validate_id(id: &str) -> Result<(), ModelError> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && !id.contains("__")
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || b"-_.".contains(&b));
    if ok {
        Ok(())
    } else {
        Err(ModelError::invariant(
            id,
            "id",
            "ids must be non-empty [A-Za-z0-9._-], not start with '.', and not contain '__'",
        ))
    }
}

/// The persistent map: images keyed by id plus bundle-wide metadata.
///
/// Images are reference counted so derived bundles share untouched records.
#[derive(Debug, Clone, PartialEq)]
pub struct MapBundle {
    pub descriptor_len: usize,
    pub created: Option<String>,
    pub images: BTreeMap<String, Arc<ImageRecord>>,
}

impl MapBundle {
    pub fn new(descriptor_len: usize) -> Self {
        MapBundle { descriptor_len, created: None, images: BTreeMap::new() }
    }

    pub fn insert(&mut self, image: ImageRecord) -> Result<(), ModelError> {
        image.validate(self.descriptor_len)?;
        if self.images.contains_key(&image.id) {
            return Err(ModelError::invariant(&image.id, "id", "duplicate image id"));
        }
        self.images.insert(image.id.clone(), Arc::new(image));
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&ImageRecord> {
        self.images.get(id).map(Arc::as_ref)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ImageRecord> {
        self.images.values().map(Arc::as_ref)
    }

    pub fn of_kind(&self, kind: ImageKind) -> Vec<&ImageRecord> {
        self.iter().filter(|i| i.kind == kind).collect()
    }

    pub fn feature_count(&self) -> usize {
        self.iter().map(|i| i.features.len()).sum()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.descriptor_len == 0 {
            return Err(ModelError::invariant("", "descriptor_len", "must be positive"));
        }
        for (key, img) in &self.images {
            if key != &img.id {
                return Err(ModelError::invariant(&img.id, "id", format!("stored under key '{key}'")));
            }
            img.validate(self.descriptor_len)?;
        }
        Ok(())
    }
}
