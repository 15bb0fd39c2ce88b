//! Bundle directory reader and writer.
//!
//! Layout:
//!
//! ```text
//! manifest.json          format_version, descriptor_len, created, image ids
//! img/<id>.json          pose, kind, dims, feature pixels + world points, global descriptor
//! img/<id>.desc          little-endian f32, n_features * descriptor_len values
//! img/<id>.sem.pgm       16-bit semantic labels (optional)
//! img/<id>.vis.pgm       16-bit visual segment ids (optional)
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::pgm::{self, PgmError};
use super::{
    CameraPose, ChangeTag, Descriptor, FeaturePoint, ImageKind, ImageRecord, LabelRaster,
    MapBundle, ModelError,
};
use crate::{Vec2, Vec3};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error("no manifest.json in {0}")]
    MissingManifest(PathBuf),
    #[error("bundle format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("image '{image}': {file} truncated: expected {expected} bytes, found {found}")]
    Truncated { image: String, file: String, expected: usize, found: usize },
    #[error("image '{image}': {file}: {source}")]
    Raster { image: String, file: String, source: PgmError },
    #[error(transparent)]
    Invariant(#[from] ModelError),
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    descriptor_len: usize,
    created: Option<String>,
    images: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct PoseDoc {
    position: [f64; 3],
    /// Row-major camera-to-world rotation.
    orientation: [[f64; 3]; 3],
}

#[derive(Serialize, Deserialize)]
struct FeatureDoc {
    px: [f64; 2],
    world: Option<[f64; 3]>,
    changed: String,
}

#[derive(Serialize, Deserialize)]
struct ImageDoc {
    id: String,
    kind: String,
    width: u32,
    height: u32,
    pose: PoseDoc,
    features: Vec<FeatureDoc>,
    global_desc: Option<Vec<f64>>,
    semantic: bool,
    visual: bool,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> BundleError + '_ {
    move |source| BundleError::Io { path: path.to_owned(), source }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), BundleError> {
    fs::write(path, bytes).map_err(io_err(path))
}

/// Writes `bundle` under `dir`; output bytes depend only on the bundle value.
pub fn write_bundle(bundle: &MapBundle, dir: &Path) -> Result<(), BundleError> {
    bundle.validate()?;
    let img_dir = dir.join("img");
    fs::create_dir_all(&img_dir).map_err(io_err(&img_dir))?;

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        descriptor_len: bundle.descriptor_len,
        created: bundle.created.clone(),
        images: bundle.images.keys().cloned().collect(),
    };
    let path = dir.join("manifest.json");
    let bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serialises");
    write_file(&path, &bytes)?;

    for img in bundle.iter() {
        write_image(img, bundle.descriptor_len, &img_dir)?;
    }
    Ok(())
}

fn write_image(img: &ImageRecord, descriptor_len: usize, img_dir: &Path) -> Result<(), BundleError> {
    let o = &img.pose.orientation;
    let doc = ImageDoc {
        id: img.id.clone(),
        kind: img.kind.as_str().to_owned(),
        width: img.width,
        height: img.height,
        pose: PoseDoc {
            position: [img.pose.position.x, img.pose.position.y, img.pose.position.z],
            orientation: [
                [o[(0, 0)], o[(0, 1)], o[(0, 2)]],
                [o[(1, 0)], o[(1, 1)], o[(1, 2)]],
                [o[(2, 0)], o[(2, 1)], o[(2, 2)]],
            ],
        },
        features: img
            .features
            .iter()
            .map(|f| FeatureDoc {
                px: [f.px.x, f.px.y],
                world: f.world.map(|w| [w.x, w.y, w.z]),
                changed: f.changed.as_str().to_owned(),
            })
            .collect(),
        global_desc: img.global_desc.clone(),
        semantic: img.semantic.is_some(),
        visual: img.visual.is_some(),
    };
    let path = img_dir.join(format!("{}.json", img.id));
    write_file(&path, &serde_json::to_vec(&doc).expect("image doc serialises"))?;

    let mut desc = Vec::with_capacity(img.features.len() * descriptor_len * 4);
    for f in &img.features {
        for v in f.descriptor.as_slice() {
            desc.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_file(&img_dir.join(format!("{}.desc", img.id)), &desc)?;

    if let Some(r) = &img.semantic {
        let path = img_dir.join(format!("{}.sem.pgm", img.id));
        write_file(&path, &pgm::encode_u16(r.width, r.height, &r.labels))?;
    }
    if let Some(r) = &img.visual {
        let path = img_dir.join(format!("{}.vis.pgm", img.id));
        write_file(&path, &pgm::encode_u16(r.width, r.height, &r.labels))?;
    }
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, BundleError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|source| BundleError::Json { path: path.to_owned(), source })
}

/// Reads and fully validates a bundle directory.
pub fn read_bundle(dir: &Path) -> Result<MapBundle, BundleError> {
    let path = dir.join("manifest.json");
    if !path.is_file() {
        return Err(BundleError::MissingManifest(dir.to_owned()));
    }
    let manifest: Manifest = read_json(&path)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(BundleError::VersionMismatch {
            found: manifest.format_version,
            expected: FORMAT_VERSION,
        });
    }
    let mut bundle = MapBundle::new(manifest.descriptor_len);
    bundle.created = manifest.created;
    let img_dir = dir.join("img");
    for id in &manifest.images {
        super::validate_id(id)?;
        let img = read_image(id, manifest.descriptor_len, &img_dir)?;
        if bundle.images.insert(id.clone(), Arc::new(img)).is_some() {
            return Err(ModelError::invariant(id, "id", "listed twice in manifest").into());
        }
    }
    bundle.validate()?;
    Ok(bundle)
}

fn read_raster(id: &str, file: String, img_dir: &Path) -> Result<LabelRaster, BundleError> {
    let path = img_dir.join(&file);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    let p = pgm::decode(&bytes).map_err(|source| match source {
        PgmError::Truncated { expected, found } => {
            BundleError::Truncated { image: id.to_owned(), file: file.clone(), expected, found }
        }
        source => BundleError::Raster { image: id.to_owned(), file: file.clone(), source },
    })?;
    Ok(LabelRaster { width: p.width, height: p.height, labels: p.samples })
}

fn read_image(id: &str, descriptor_len: usize, img_dir: &Path) -> Result<ImageRecord, BundleError> {
    let doc: ImageDoc = read_json(&img_dir.join(format!("{id}.json")))?;
    if doc.id != id {
        return Err(ModelError::invariant(id, "id", format!("payload declares id '{}'", doc.id)).into());
    }
    let kind = match doc.kind.as_str() {
        "map" => ImageKind::Map,
        "query" => ImageKind::Query,
        other => return Err(ModelError::invariant(id, "kind", format!("unknown kind '{other}'")).into()),
    };
    let o = doc.pose.orientation;
    let pose = CameraPose {
        position: Vec3::from(doc.pose.position),
        orientation: Matrix3::new(
            o[0][0], o[0][1], o[0][2], o[1][0], o[1][1], o[1][2], o[2][0], o[2][1], o[2][2],
        ),
    };

    let desc_file = format!("{id}.desc");
    let desc_path = img_dir.join(&desc_file);
    let raw = fs::read(&desc_path).map_err(io_err(&desc_path))?;
    let expected = doc.features.len() * descriptor_len * 4;
    if raw.len() != expected {
        return Err(BundleError::Truncated {
            image: id.to_owned(),
            file: desc_file,
            expected,
            found: raw.len(),
        });
    }
    let values: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let mut features = Vec::with_capacity(doc.features.len());
    for (i, f) in doc.features.into_iter().enumerate() {
        let changed = ChangeTag::parse(&f.changed).ok_or_else(|| {
            ModelError::invariant(id, &format!("features[{i}].changed"), format!("unknown tag '{}'", f.changed))
        })?;
        let d = if descriptor_len == 0 {
            Vec::new()
        } else {
            values[i * descriptor_len..(i + 1) * descriptor_len].to_vec()
        };
        features.push(FeaturePoint {
            px: Vec2::new(f.px[0], f.px[1]),
            descriptor: Descriptor(d),
            world: f.world.map(Vec3::from),
            changed,
        });
    }

    let semantic = if doc.semantic { Some(read_raster(id, format!("{id}.sem.pgm"), img_dir)?) } else { None };
    let visual = if doc.visual { Some(read_raster(id, format!("{id}.vis.pgm"), img_dir)?) } else { None };

    let img = ImageRecord {
        id: id.to_owned(),
        kind,
        pose,
        width: doc.width,
        height: doc.height,
        features,
        global_desc: doc.global_desc,
        semantic,
        visual,
    };
    img.validate(descriptor_len)?;
    Ok(img)
}
