//! Synthetic street scenes with exact ground truth.
//!
//! World frame: x along the street, y away from the cameras, z up. Scene
//! geometry is a set of vertical facade planes `y = depth`, each cut into
//! square patches that double as the visual segmentation. Cameras stand on
//! the line `y = 0` and look along +y; pixels follow the usual x-right,
//! y-down convention with the principal point at the image center.
//!
//! Each world point owns a random descriptor. Query images observe the
//! points inside planted change regions with freshly drawn descriptors, so
//! those regions are what the pipeline should flag.

mod eval;

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use eval::{
    evaluate_pipeline, homography_error_px, EvalReport, MasterReport, PairMaskReport, RegistrationReport, TagReport,
};

use crate::alignment::pair_seed;
use crate::mapupdate::Correspondence3D;
use crate::model::{CameraPose, ChangeMask, FeaturePoint, ImageKind, ImageRecord, LabelRaster, MapBundle};
use crate::preprocess::{labels, SemanticPolicy};
use crate::{RigidTransform, Vec2, Vec3};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid scene spec {field}: {detail}")]
pub struct SpecError {
    pub field: String,
    pub detail: String,
}

fn spec_err(field: &str, detail: impl Into<String>) -> SpecError {
    SpecError { field: field.to_string(), detail: detail.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraPath {
    /// Map cameras are spaced evenly over `[map_x_min, map_x_max]`.
    pub map_x_min: f64,
    pub map_x_max: f64,
    pub height_m: f64,
    /// Query cameras are uniform in the map x range, with this much offset in y and z.
    pub query_offset_m: f64,
    /// Uniform heading jitter of every camera, radians.
    pub yaw_jitter_rad: f64,
    /// Roll about the optical axis applied to map cameras only.
    pub map_roll_rad: f64,
}

impl Default for CameraPath {
    fn default() -> Self {
        CameraPath {
            map_x_min: -0.9,
            map_x_max: 0.9,
            height_m: 1.6,
            query_offset_m: 0.3,
            yaw_jitter_rad: 0.05,
            map_roll_rad: 0.0,
        }
    }
}

/// Vertical rectangle `y = depth_m` with uniformly scattered features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FacadePlane {
    pub depth_m: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub density_per_m2: f64,
}

/// Rectangle on plane `plane`, in that plane's x/z coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub plane: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Region {
    fn contains(&self, plane: usize, x: f64, z: f64) -> bool {
        plane == self.plane && x >= self.x_min && x <= self.x_max && z >= self.z_min && z <= self.z_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExemptRegion {
    pub region: Region,
    pub class: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub pixel_sigma: f64,
    pub descriptor_sigma: f64,
    /// Share of world points whose features carry no 3D value.
    pub no_3d_fraction: f64,
    /// Weight of the per-image random component of the global descriptor.
    pub global_noise: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { pixel_sigma: 0.3, descriptor_sigma: 0.02, no_3d_fraction: 0.05, global_noise: 0.1 }
    }
}

/// A copy of some map images re-expressed in another frame, for registration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SectionSpec {
    pub n_images: usize,
    /// Similarity taking section coordinates into the map frame.
    pub scale: f64,
    pub yaw_deg: f64,
    pub translation: [f64; 3],
    pub outlier_fraction: f64,
    pub point_noise_m: f64,
}

impl Default for SectionSpec {
    fn default() -> Self {
        SectionSpec {
            n_images: 3,
            scale: 1.3,
            yaw_deg: 10.0,
            translation: [5.0, 2.0, 0.0],
            outlier_fraction: 0.2,
            point_noise_m: 0.01,
        }
    }
}

impl SectionSpec {
    pub fn truth(&self) -> RigidTransform {
        let r = Rotation3::from_axis_angle(&Vector3::z_axis(), self.yaw_deg.to_radians()).into_inner();
        RigidTransform { rotation: r, translation: Vec3::from(self.translation), scale: self.scale }
    }
}

/// Scene description; the default is the acceptance scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    pub n_map_images: usize,
    pub n_query_images: usize,
    pub width: u32,
    pub height: u32,
    pub focal_px: f64,
    pub camera: CameraPath,
    pub planes: Vec<FacadePlane>,
    pub patch_m: f64,
    /// Points below this height are labeled ground.
    pub ground_below_z: f64,
    pub changes: Vec<Region>,
    pub exempt: Vec<ExemptRegion>,
    pub descriptor_len: usize,
    pub global_len: usize,
    pub noise: NoiseSpec,
    pub section: Option<SectionSpec>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            seed: 7,
            n_map_images: 10,
            n_query_images: 10,
            width: 720,
            height: 540,
            focal_px: 600.0,
            camera: CameraPath::default(),
            planes: vec![FacadePlane {
                depth_m: 15.0,
                x_min: -15.0,
                x_max: 15.0,
                z_min: -6.0,
                z_max: 7.0,
                density_per_m2: 8.0,
            }],
            patch_m: 1.5,
            ground_below_z: 0.0,
            changes: vec![Region { plane: 0, x_min: -1.5, x_max: 1.5, z_min: 1.5, z_max: 4.5 }],
            exempt: vec![ExemptRegion {
                region: Region { plane: 0, x_min: 4.5, x_max: 7.5, z_min: 0.0, z_max: 3.0 },
                class: labels::PLANT,
            }],
            descriptor_len: 32,
            global_len: 64,
            noise: NoiseSpec::default(),
            section: Some(SectionSpec::default()),
        }
    }
}

impl SceneSpec {
    /// The acceptance scene without planted changes.
    pub fn no_change() -> Self {
        SceneSpec { changes: Vec::new(), ..SceneSpec::default() }
    }

    /// The acceptance scene with its only change inside the exempt region.
    pub fn exempt_only() -> Self {
        let spec = SceneSpec::default();
        SceneSpec { changes: vec![spec.exempt[0].region], ..spec }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.planes.is_empty() {
            return Err(spec_err("planes", "at least one plane is required"));
        }
        if self.n_map_images == 0 {
            return Err(spec_err("n_map_images", "must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(spec_err("width/height", "must be positive"));
        }
        for (name, v) in [("focal_px", self.focal_px), ("patch_m", self.patch_m), ("camera.height_m", self.camera.height_m)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(spec_err(name, format!("must be positive, got {v}")));
            }
        }
        if self.camera.map_x_min > self.camera.map_x_max {
            return Err(spec_err("camera.map_x_min", "exceeds map_x_max"));
        }
        if self.descriptor_len == 0 {
            return Err(spec_err("descriptor_len", "must be positive"));
        }
        if self.global_len < 2 {
            return Err(spec_err("global_len", "must be at least 2"));
        }
        for (i, p) in self.planes.iter().enumerate() {
            if !(p.depth_m > 0.0 && p.x_max > p.x_min && p.z_max > p.z_min && p.density_per_m2 > 0.0) {
                return Err(spec_err(&format!("planes[{i}]"), "needs positive depth, nonempty extent and density"));
            }
        }
        let regions = self.changes.iter().chain(self.exempt.iter().map(|e| &e.region));
        for r in regions {
            if r.plane >= self.planes.len() {
                return Err(spec_err("changes/exempt", format!("plane {} does not exist", r.plane)));
            }
        }
        let n = &self.noise;
        if !(n.pixel_sigma >= 0.0 && n.descriptor_sigma >= 0.0 && (0.0..=1.0).contains(&n.no_3d_fraction)) {
            return Err(spec_err("noise", "sigmas must be non-negative and no_3d_fraction in [0, 1]"));
        }
        if !(0.0..1.0).contains(&n.global_noise) {
            return Err(spec_err("noise.global_noise", "must lie in [0, 1)"));
        }
        if self.patch_count() >= usize::from(u16::MAX) {
            return Err(spec_err("patch_m", "too many patches for 16-bit segment ids"));
        }
        if let Some(s) = &self.section {
            if s.n_images == 0 || s.n_images > self.n_map_images || !(s.scale > 0.0) || !(0.0..1.0).contains(&s.outlier_fraction) {
                return Err(spec_err("section", "needs 1..=n_map_images images, positive scale, outliers in [0, 1)"));
            }
        }
        Ok(())
    }

    fn patch_dims(&self, p: &FacadePlane) -> (usize, usize) {
        let cols = ((p.x_max - p.x_min) / self.patch_m).ceil() as usize;
        let rows = ((p.z_max - p.z_min) / self.patch_m).ceil() as usize;
        (cols.max(1), rows.max(1))
    }

    fn patch_count(&self) -> usize {
        self.planes.iter().map(|p| {
            let (c, r) = self.patch_dims(p);
            c * r
        }).sum()
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics { f: self.focal_px, cx: f64::from(self.width) / 2.0, cy: f64::from(self.height) / 2.0 }
    }
}

/// Pinhole intrinsics shared by every synthetic camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub f: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.f, 0.0, self.cx, 0.0, self.f, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn project(&self, pose: &CameraPose, world: &Vec3) -> Option<Vec2> {
        let p = pose.to_camera(world);
        (p.z > 1e-9).then(|| Vec2::new(self.f * p.x / p.z + self.cx, self.f * p.y / p.z + self.cy))
    }

    /// World direction of the ray through continuous pixel position `px`.
    pub fn ray(&self, pose: &CameraPose, px: &Vec2) -> Vec3 {
        pose.orientation * Vec3::new((px.x - self.cx) / self.f, (px.y - self.cy) / self.f, 1.0)
    }
}

/// Camera looking along +y with the given heading and roll.
pub fn street_camera(position: Vec3, yaw: f64, roll: f64) -> CameraPose {
    // camera x -> world x, camera y (down) -> world -z, camera z -> world y
    let base = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0);
    let heading = Rotation3::from_axis_angle(&Vector3::z_axis(), -yaw).into_inner();
    let rolled = Rotation3::from_axis_angle(&Vector3::z_axis(), roll).into_inner();
    let r = heading * base * rolled;
    CameraPose { position, orientation: r }
}

/// Where a ray meets the scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub plane: usize,
    pub t: f64,
    pub point: Vec3,
}

/// Nearest plane hit along `dir` from `origin`, if any.
pub fn cast(planes: &[FacadePlane], origin: &Vec3, dir: &Vec3) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for (i, p) in planes.iter().enumerate() {
        if dir.y.abs() < 1e-12 {
            continue;
        }
        let t = (p.depth_m - origin.y) / dir.y;
        if !(t > 0.0) {
            continue;
        }
        let q = origin + dir * t;
        if q.x < p.x_min || q.x > p.x_max || q.z < p.z_min || q.z > p.z_max {
            continue;
        }
        if best.is_none_or(|b| t < b.t) {
            best = Some(Hit { plane: i, t, point: q });
        }
    }
    best
}

/// One sampled scene point.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldPoint {
    pub plane: usize,
    pub position: Vec3,
    pub has_3d: bool,
    pub descriptor: Vec<f32>,
    /// Descriptor seen by query images when the point lies in a planted change.
    pub changed_descriptor: Option<Vec<f32>>,
}

/// What a generated scene should produce.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub intrinsics: Intrinsics,
    pub planes: Vec<FacadePlane>,
    /// Per image, pixels whose scene point lies in a planted, non-exempt change.
    pub masks: BTreeMap<String, ChangeMask>,
    /// Per map image, features observing such a point.
    pub changed_features: BTreeMap<String, BTreeSet<usize>>,
    /// Per image, index of the world point behind each feature.
    pub feature_points: BTreeMap<String, Vec<usize>>,
    pub points: Vec<WorldPoint>,
}

impl GroundTruth {
    /// Homography taking `query` pixels to `map` pixels through plane `plane`.
    pub fn plane_homography(&self, query: &CameraPose, map: &CameraPose, plane: usize) -> Matrix3<f64> {
        let k = self.intrinsics.matrix();
        let k_inv = k.try_inverse().expect("focal length is positive");
        let n = Vec3::y();
        let d = self.planes[plane].depth_m;
        let m = Matrix3::identity() + (query.position - map.position) * n.transpose() / (d - n.dot(&query.position));
        let h = k * map.orientation.transpose() * m * query.orientation * k_inv;
        h / h[(2, 2)]
    }

    /// Homography through the plane seen at the query's image center.
    pub fn homography(&self, query: &ImageRecord, map: &ImageRecord) -> Option<Matrix3<f64>> {
        let c = Vec2::new(self.intrinsics.cx, self.intrinsics.cy);
        let hit = cast(&self.planes, &query.pose.position, &self.intrinsics.ray(&query.pose, &c))?;
        Some(self.plane_homography(&query.pose, &map.pose, hit.plane))
    }
}

fn rng_for(seed: u64, stream: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(pair_seed(seed, stream))
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, sigma: f64) -> Vec<f64> {
    let dist = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    (0..n).map(|_| dist.sample(rng)).collect()
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn label_at(spec: &SceneSpec, plane: usize, p: &Vec3) -> u16 {
    if let Some(e) = spec.exempt.iter().find(|e| e.region.contains(plane, p.x, p.z)) {
        return e.class;
    }
    if p.z < spec.ground_below_z {
        labels::GROUND
    } else {
        labels::BUILDING
    }
}

fn segment_at(spec: &SceneSpec, plane: usize, p: &Vec3) -> u16 {
    let offset: usize = spec.planes[..plane].iter().map(|q| {
        let (c, r) = spec.patch_dims(q);
        c * r
    }).sum();
    let pl = &spec.planes[plane];
    let (cols, rows) = spec.patch_dims(pl);
    let col = (((p.x - pl.x_min) / spec.patch_m).floor() as usize).min(cols - 1);
    let row = (((p.z - pl.z_min) / spec.patch_m).floor() as usize).min(rows - 1);
    (1 + offset + row * cols + col) as u16
}

/// Counts as change only where the pixel's class is not exempt under the street policy.
fn is_true_change(spec: &SceneSpec, plane: usize, p: &Vec3) -> bool {
    spec.changes.iter().any(|r| r.contains(plane, p.x, p.z)) && !SemanticPolicy::street().is_exempt(label_at(spec, plane, p))
}

fn sample_points(spec: &SceneSpec) -> Vec<WorldPoint> {
    let mut rng = rng_for(spec.seed, "points");
    let mut desc_rng = rng_for(spec.seed, "descriptors");
    let sigma = 1.0 / (spec.descriptor_len as f64).sqrt();
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f32> {
        gaussian_vec(rng, spec.descriptor_len, sigma).into_iter().map(|v| v as f32).collect()
    };
    let mut out = Vec::new();
    for (i, p) in spec.planes.iter().enumerate() {
        let area = (p.x_max - p.x_min) * (p.z_max - p.z_min);
        let n = (area * p.density_per_m2).round() as usize;
        for _ in 0..n {
            let position = Vec3::new(rng.random_range(p.x_min..p.x_max), p.depth_m, rng.random_range(p.z_min..p.z_max));
            let has_3d = rng.random::<f64>() >= spec.noise.no_3d_fraction;
            let descriptor = draw(&mut desc_rng);
            let changed = spec.changes.iter().any(|r| r.contains(i, position.x, position.z));
            let changed_descriptor = changed.then(|| draw(&mut desc_rng));
            out.push(WorldPoint { plane: i, position, has_3d, descriptor, changed_descriptor });
        }
    }
    out
}

type NamedPoses = Vec<(String, CameraPose)>;

fn camera_poses(spec: &SceneSpec) -> (NamedPoses, NamedPoses) {
    let c = &spec.camera;
    let mut rng = rng_for(spec.seed, "cameras");
    let n = spec.n_map_images;
    let maps = (0..n)
        .map(|i| {
            let t = if n == 1 { 0.5 } else { i as f64 / (n - 1) as f64 };
            let x = c.map_x_min + t * (c.map_x_max - c.map_x_min);
            let yaw = rng.random_range(-1.0..=1.0) * c.yaw_jitter_rad;
            (format!("map{i:03}"), street_camera(Vec3::new(x, 0.0, c.height_m), yaw, c.map_roll_rad))
        })
        .collect();
    let queries = (0..spec.n_query_images)
        .map(|i| {
            let x = c.map_x_min + rng.random::<f64>() * (c.map_x_max - c.map_x_min);
            let y = rng.random_range(-1.0..=1.0) * c.query_offset_m;
            let z = c.height_m + rng.random_range(-1.0..=1.0) * c.query_offset_m / 3.0;
            let yaw = rng.random_range(-1.0..=1.0) * c.yaw_jitter_rad;
            (format!("query{i:03}"), street_camera(Vec3::new(x, y, z), yaw, 0.0))
        })
        .collect();
    (maps, queries)
}

/// Unit global descriptor that varies smoothly with where the camera looks.
fn global_descriptor(spec: &SceneSpec, k: &Intrinsics, pose: &CameraPose, anchors: &[(f64, Vec<f64>)], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let center = Vec2::new(k.cx, k.cy);
    let dir = k.ray(pose, &center);
    let x = cast(&spec.planes, &pose.position, &dir).map_or(pose.position.x, |h| h.point.x);
    let width = 3.0 * spec.patch_m;
    let mut v = vec![0.0; spec.global_len];
    for (a, e) in anchors {
        let w = (-(x - a).powi(2) / (2.0 * width * width)).exp();
        for (vi, ei) in v.iter_mut().zip(e) {
            *vi += w * ei;
        }
    }
    let eta = spec.noise.global_noise;
    let base = unit(v);
    let noise = unit(gaussian_vec(rng, spec.global_len, 1.0));
    unit(base.iter().zip(&noise).map(|(b, n)| b * (1.0 - eta * eta).sqrt() + n * eta).collect())
}

struct Rasters {
    semantic: LabelRaster,
    visual: LabelRaster,
    truth: ChangeMask,
}

fn render(spec: &SceneSpec, k: &Intrinsics, id: &str, pose: &CameraPose) -> Rasters {
    let (w, h) = (spec.width, spec.height);
    let n = w as usize * h as usize;
    let mut semantic = vec![labels::SKY; n];
    let mut visual = vec![0u16; n];
    let mut truth = vec![false; n];
    for y in 0..h {
        for x in 0..w {
            let px = Vec2::new(f64::from(x) + 0.5, f64::from(y) + 0.5);
            if let Some(hit) = cast(&spec.planes, &pose.position, &k.ray(pose, &px)) {
                let i = y as usize * w as usize + x as usize;
                semantic[i] = label_at(spec, hit.plane, &hit.point);
                visual[i] = segment_at(spec, hit.plane, &hit.point);
                truth[i] = is_true_change(spec, hit.plane, &hit.point);
            }
        }
    }
    Rasters {
        semantic: LabelRaster { width: w, height: h, labels: semantic },
        visual: LabelRaster { width: w, height: h, labels: visual },
        truth: ChangeMask { image_id: id.to_string(), width: w, height: h, bits: truth },
    }
}

/// Builds the bundle and its ground truth. Identical specs give identical output.
pub fn generate_scene(spec: &SceneSpec) -> Result<(MapBundle, GroundTruth), SpecError> {
    spec.validate()?;
    let k = spec.intrinsics();
    let points = sample_points(spec);
    let (maps, queries) = camera_poses(spec);

    let x_lo = spec.planes.iter().map(|p| p.x_min).fold(f64::INFINITY, f64::min);
    let x_hi = spec.planes.iter().map(|p| p.x_max).fold(f64::NEG_INFINITY, f64::max);
    let mut anchor_rng = rng_for(spec.seed, "anchors");
    let n_anchors = ((x_hi - x_lo) / spec.patch_m).ceil() as usize + 1;
    let anchors: Vec<(f64, Vec<f64>)> = (0..n_anchors)
        .map(|j| (x_lo + j as f64 * spec.patch_m, unit(gaussian_vec(&mut anchor_rng, spec.global_len, 1.0))))
        .collect();

    let mut bundle = MapBundle::new(spec.descriptor_len);
    let mut gt = GroundTruth {
        intrinsics: k,
        planes: spec.planes.clone(),
        masks: BTreeMap::new(),
        changed_features: BTreeMap::new(),
        feature_points: BTreeMap::new(),
        points: Vec::new(),
    };
    let cams = maps.into_iter().map(|c| (ImageKind::Map, c)).chain(queries.into_iter().map(|c| (ImageKind::Query, c)));
    for (kind, (id, pose)) in cams {
        let mut rng = rng_for(spec.seed, &id);
        let pixel_noise = Normal::new(0.0, spec.noise.pixel_sigma).expect("checked sigma");
        let desc_noise = Normal::new(0.0, spec.noise.descriptor_sigma).expect("checked sigma");
        let mut img = ImageRecord::new(id.clone(), kind, pose, spec.width, spec.height);
        let mut behind = Vec::new();
        let mut changed = BTreeSet::new();
        for (pi, wp) in points.iter().enumerate() {
            let Some(clean) = k.project(&pose, &wp.position) else { continue };
            // occluded by a nearer plane
            let to = wp.position - pose.position;
            if cast(&spec.planes, &pose.position, &to).is_some_and(|h| h.t < 1.0 - 1e-9) {
                continue;
            }
            let px = clean + Vec2::new(pixel_noise.sample(&mut rng), pixel_noise.sample(&mut rng));
            if !(px.x >= 0.0 && px.x < f64::from(spec.width) && px.y >= 0.0 && px.y < f64::from(spec.height)) {
                continue;
            }
            let source = match (kind, &wp.changed_descriptor) {
                (ImageKind::Query, Some(d)) => d,
                _ => &wp.descriptor,
            };
            let descriptor: Vec<f32> = source.iter().map(|v| v + desc_noise.sample(&mut rng) as f32).collect();
            let world = (kind == ImageKind::Map && wp.has_3d).then_some(wp.position);
            if kind == ImageKind::Map && is_true_change(spec, wp.plane, &wp.position) {
                changed.insert(img.features.len());
            }
            img.features.push(FeaturePoint::new(px, descriptor, world));
            behind.push(pi);
        }
        img.global_desc = Some(global_descriptor(spec, &k, &pose, &anchors, &mut rng));
        let r = render(spec, &k, &id, &pose);
        img.semantic = Some(r.semantic);
        img.visual = Some(r.visual);
        gt.masks.insert(id.clone(), r.truth);
        if kind == ImageKind::Map {
            gt.changed_features.insert(id.clone(), changed);
        }
        gt.feature_points.insert(id.clone(), behind);
        bundle.insert(img).map_err(|e| spec_err("generated image", e.to_string()))?;
    }
    gt.points = points;
    Ok((bundle, gt))
}

/// Copies the first `spec.n_images` map images into the section frame and
/// pairs their 3D points with the originals, corrupting a share of pairs.
pub fn make_section(bundle: &MapBundle, spec: &SectionSpec, seed: u64) -> (MapBundle, Vec<Correspondence3D>) {
    let inv = spec.truth().inverse();
    let mut rng = rng_for(seed, "section");
    let noise = Normal::new(0.0, spec.point_noise_m.max(0.0)).expect("finite sigma");
    let all: Vec<Vec3> = bundle.iter().flat_map(|i| i.features.iter().filter_map(|f| f.world)).collect();
    let mut section = MapBundle::new(bundle.descriptor_len);
    let mut corr = Vec::new();
    for img in bundle.of_kind(ImageKind::Map).into_iter().take(spec.n_images) {
        let mut moved = img.clone();
        moved.pose.position = inv.apply(&img.pose.position);
        moved.pose.orientation = inv.rotation * img.pose.orientation;
        for f in &mut moved.features {
            let Some(a) = f.world else { continue };
            let b = inv.apply(&a) + Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
            f.world = Some(b);
            let a = if rng.random::<f64>() < spec.outlier_fraction && !all.is_empty() {
                all[rng.random_range(0..all.len())]
            } else {
                a
            };
            corr.push(Correspondence3D::new(a, b));
        }
        section.insert(moved).expect("copied from a valid bundle");
    }
    (section, corr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SceneSpec {
        SceneSpec {
            n_map_images: 3,
            n_query_images: 2,
            width: 240,
            height: 180,
            focal_px: 200.0,
            planes: vec![FacadePlane { depth_m: 15.0, x_min: -15.0, x_max: 15.0, z_min: -6.0, z_max: 7.0, density_per_m2: 2.0 }],
            section: None,
            ..SceneSpec::default()
        }
    }

    #[test]
    fn camera_axes() {
        let c = street_camera(Vec3::zeros(), 0.0, 0.0);
        c.validate().unwrap();
        assert_eq!(c.los(), Vec3::y());
        // a point up and to the right appears right of and above the center
        let k = Intrinsics { f: 100.0, cx: 50.0, cy: 50.0 };
        let p = k.project(&c, &Vec3::new(1.0, 10.0, 1.0)).unwrap();
        assert!(p.x > 50.0 && p.y < 50.0);
        let r = k.ray(&c, &p);
        assert!((r / r.y - Vec3::new(0.1, 1.0, 0.1)).norm() < 1e-12);
    }

    #[test]
    fn deterministic() {
        let (a, ga) = generate_scene(&small()).unwrap();
        let (b, gb) = generate_scene(&small()).unwrap();
        assert_eq!(a, b);
        assert_eq!(ga, gb);
        let (c, _) = generate_scene(&SceneSpec { seed: 8, ..small() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn no_changes_means_empty_truth() {
        let (_, gt) = generate_scene(&SceneSpec { changes: Vec::new(), ..small() }).unwrap();
        assert!(gt.masks.values().all(ChangeMask::is_empty));
        assert!(gt.changed_features.values().all(BTreeSet::is_empty));
    }

    #[test]
    fn invalid_specs_rejected() {
        assert_eq!(generate_scene(&SceneSpec { planes: Vec::new(), ..small() }).unwrap_err().field, "planes");
        let bad_region = Region { plane: 3, x_min: 0.0, x_max: 1.0, z_min: 0.0, z_max: 1.0 };
        assert!(generate_scene(&SceneSpec { changes: vec![bad_region], ..small() }).is_err());
    }

    #[test]
    fn truth_is_self_consistent() {
        let spec = small();
        let (bundle, gt) = generate_scene(&spec).unwrap();
        let region = spec.changes[0];
        for (id, set) in &gt.changed_features {
            for &i in set {
                let wp = &gt.points[gt.feature_points[id][i]];
                assert!(region.contains(wp.plane, wp.position.x, wp.position.z));
            }
        }
        for img in bundle.iter() {
            let m = &gt.masks[&img.id];
            for y in 0..m.height {
                for x in 0..m.width {
                    if m.get(x, y) {
                        let px = Vec2::new(f64::from(x) + 0.5, f64::from(y) + 0.5);
                        let hit = cast(&gt.planes, &img.pose.position, &gt.intrinsics.ray(&img.pose, &px)).unwrap();
                        assert!(region.contains(hit.plane, hit.point.x, hit.point.z));
                    }
                }
            }
        }
    }

    #[test]
    fn truth_masks_follow_visibility() {
        // a region off to the side is seen only by cameras whose view reaches it
        let spec = SceneSpec {
            camera: CameraPath { map_x_min: -12.0, map_x_max: 12.0, ..CameraPath::default() },
            changes: vec![Region { plane: 0, x_min: 9.0, x_max: 11.0, z_min: 1.0, z_max: 3.0 }],
            n_map_images: 7,
            ..small()
        };
        let (bundle, gt) = generate_scene(&spec).unwrap();
        let k = spec.intrinsics();
        let (mut seen, mut unseen) = (0, 0);
        for img in bundle.of_kind(ImageKind::Map) {
            let us: Vec<f64> = [(9.0, 1.0), (11.0, 1.0), (9.0, 3.0), (11.0, 3.0)]
                .iter()
                .map(|&(x, z)| k.project(&img.pose, &Vec3::new(x, 15.0, z)).unwrap().x)
                .collect();
            let n = gt.masks[&img.id].count_ones();
            if us.iter().all(|&u| u > 1.0 && u < 239.0) {
                assert!(n > 0, "{} should see the region", img.id);
                seen += 1;
            }
            if us.iter().all(|&u| u >= 240.0) || us.iter().all(|&u| u < 0.0) {
                assert_eq!(n, 0, "{} should not see the region", img.id);
                unseen += 1;
            }
        }
        assert!(seen > 0 && unseen > 0);
    }

    #[test]
    fn exempt_change_has_no_truth() {
        let spec = SceneSpec { changes: vec![SceneSpec::default().exempt[0].region], ..small() };
        let (_, gt) = generate_scene(&spec).unwrap();
        assert!(gt.masks.values().all(ChangeMask::is_empty));
    }

    #[test]
    fn homography_maps_plane_points() {
        let spec = small();
        let (bundle, gt) = generate_scene(&spec).unwrap();
        let q = bundle.get("query000").unwrap();
        let m = bundle.get("map001").unwrap();
        let h = gt.homography(q, m).unwrap();
        for x in [-3.0, 0.0, 4.0] {
            for z in [0.0, 2.0, 5.0] {
                let w = Vec3::new(x, 15.0, z);
                let (pq, pm) = (gt.intrinsics.project(&q.pose, &w).unwrap(), gt.intrinsics.project(&m.pose, &w).unwrap());
                let warped = crate::model::warp_point(&h, &pq).unwrap();
                assert!((warped - pm).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn section_inverts_truth() {
        let spec = small();
        let (bundle, _) = generate_scene(&spec).unwrap();
        let s = SectionSpec { outlier_fraction: 0.0, point_noise_m: 0.0, n_images: 2, ..SectionSpec::default() };
        let (section, corr) = make_section(&bundle, &s, 1);
        assert_eq!(section.images.len(), 2);
        let t = s.truth();
        for c in &corr {
            assert!((t.apply(&c.b) - c.a).norm() < 1e-9);
        }
    }
}
