//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

mod common;

use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_2;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use mapdelta::aggregate::{build_master, AggregateError};
use mapdelta::alignment::{align_pair, eval_h5, fit_h5, h5_to_matrix, ransac_h5, AlignConfig, H5Coeffs, Match, RansacParams};
use mapdelta::mapupdate::{icp_refine, median_of_scales, ransac_6dof, rigid_transform_3d, transform_error, Correspondence3D, IcpParams, Ransac6Params};
use mapdelta::metrics::{confusion, f1, fwiou, miou, Confusion};
use mapdelta::model::{warp_point, Dof};
use mapdelta::pairing::{select_pairs, select_pairs_indexed};
use mapdelta::pipeline::run_pipeline;
use mapdelta::propagate::{find_master_match, propagate_change, PropagationParams};
use mapdelta::synth::{evaluate_pipeline, generate_scene, SceneSpec};
use mapdelta::{read_bundle, write_bundle, CameraPose, ChangeMask, FeaturePoint, ImageKind, ImageRecord, PipelineConfig, Rational, RigidTransform, Vec2, Vec3};
use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Collected sub-checks of one criterion.
#[derive(Default)]
struct Checks {
    failed: Vec<String>,
    notes: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if ok {
            self.notes.push(what);
        } else {
            self.failed.push(what);
        }
    }

    fn within(&mut self, elapsed: Duration, limit_s: f64, what: &str) {
        let s = elapsed.as_secs_f64();
        self.check(s < limit_s, format!("{what} {s:.2}s < {limit_s}s"));
    }
}

fn ident(n: usize) -> Vec<Match> {
    (0..n).map(|i| Match { idx_a: i, idx_b: i, dist: 0.0, ratio: 0.5 }).collect()
}

const C5: H5Coeffs<f64> = [1.08, -12.0, 1.03, 6.0, 3.0e-4];

fn c1_five_dof_recovery() -> Checks {
    let mut c = Checks::default();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let noise = Normal::new(0.0, 0.5).unwrap();
    let (n_in, n_out) = (140, 60);
    let mut a = Vec::new();
    let mut b = Vec::new();
    for _ in 0..n_in {
        let p = Vec2::new(rng.random_range(0.0..720.0), rng.random_range(0.0..540.0));
        a.push(p);
        b.push(eval_h5(&C5, &p) + Vec2::new(noise.sample(&mut rng), noise.sample(&mut rng)));
    }
    for _ in 0..n_out {
        a.push(Vec2::new(rng.random_range(0.0..720.0), rng.random_range(0.0..540.0)));
        b.push(Vec2::new(rng.random_range(0.0..720.0), rng.random_range(0.0..540.0)));
    }
    let t = Instant::now();
    let h = ransac_h5(&ident(200), &a, &b, &RansacParams { seed: 5, ..Default::default() });
    let elapsed = t.elapsed();
    let Ok(h) = h else {
        c.check(false, "ransac_h5 returned an error");
        return c;
    };
    let true_in = h.inliers.iter().filter(|(i, _)| *i < n_in).count();
    c.check(true_in as f64 >= 0.95 * n_in as f64, format!("true inliers {true_in}/{n_in}"));
    // rmse over the recovered inliers, recomputed here
    let se: f64 = h.inliers.iter().map(|&(i, j)| (warp_point(&h.h, &a[i]).unwrap() - b[j]).norm_squared()).sum();
    let rmse = (se / h.inliers.len() as f64).sqrt();
    c.check(rmse <= 1.0, format!("rmse {rmse:.3}px"));
    let got = [h.h[(0, 0)], h.h[(0, 2)], h.h[(1, 1)], h.h[(1, 2)], h.h[(2, 0)]];
    let rel = (0..5).map(|k| (got[k] - C5[k]).abs() / C5[k].abs()).fold(0.0, f64::max);
    let per: Vec<String> = (0..5).map(|k| format!("{:.1e}", (got[k] - C5[k]).abs() / C5[k].abs())).collect();
    c.check(rel <= 1e-2, format!("max coefficient rel err {rel:.2e} (a, b, c, d, e: {})", per.join(", ")));
    // least squares on the true inliers alone bounds what any estimator can reach
    let oracle = fit_h5(&a[..n_in], &b[..n_in]).unwrap();
    let oracle_rel = (0..5).map(|k| (oracle[k] - C5[k]).abs() / C5[k].abs()).fold(0.0, f64::max);
    let gap = (0..5).map(|k| (got[k] - oracle[k]).abs() / C5[k].abs()).fold(0.0, f64::max);
    c.check(gap <= 1e-2, format!("inlier-only least squares reaches {oracle_rel:.2e}, estimate within {gap:.1e} of it"));
    c.check(h.h[(0, 1)] == 0.0 && h.h[(1, 0)] == 0.0 && h.h[(2, 1)] == 0.0, "structural zeros");
    c.within(elapsed, 1.0, "runtime");
    c
}

/// Image A with `n` textured features and image B seeing them through `h`,
/// plus `extra` unrelated features in B.
fn warped_pair(h: &Matrix3<f64>, n: usize, extra: usize, sigma: f64, seed: u64) -> (ImageRecord, ImageRecord) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let pose = CameraPose::new(Vec3::zeros(), Matrix3::identity()).unwrap();
    let mut a = ImageRecord::new("a", ImageKind::Query, pose, 720, 540);
    let mut b = ImageRecord::new("b", ImageKind::Map, pose, 720, 540);
    let desc = |rng: &mut ChaCha8Rng| -> Vec<f32> { (0..32).map(|_| rng.random_range(-1.0f32..1.0)).collect() };
    while a.features.len() < n {
        let p = Vec2::new(rng.random_range(0.0..720.0), rng.random_range(0.0..540.0));
        let q = warp_point(h, &p).unwrap() + Vec2::new(noise.sample(&mut rng), noise.sample(&mut rng));
        if !(0.0..720.0).contains(&q.x) || !(0.0..540.0).contains(&q.y) {
            continue;
        }
        let d = desc(&mut rng);
        a.features.push(FeaturePoint::new(p, d.clone(), None));
        b.features.push(FeaturePoint::new(q, d, None));
    }
    for _ in 0..extra {
        let q = Vec2::new(rng.random_range(0.0..720.0), rng.random_range(0.0..540.0));
        b.features.push(FeaturePoint::new(q, desc(&mut rng), None));
    }
    (a, b)
}

fn c2_model_selection() -> Checks {
    let mut c = Checks::default();
    let cfg = AlignConfig::default();
    let h5 = h5_to_matrix(&C5);
    let (a, b) = warped_pair(&h5, 300, 60, 0.5, 21);
    let r = align_pair(&a, &b, &cfg, 8);
    let counts = |r: &mapdelta::alignment::AlignmentResult| {
        let n = |h: &Option<mapdelta::Homography>| h.as_ref().map_or(0, |h| h.inliers.len());
        (n(&r.chosen), n(&r.rejected_model))
    };
    let (k, o) = counts(&r);
    let dof = r.chosen.as_ref().map(|h| h.dof);
    c.check(r.accepted && dof == Some(Dof::Five), format!("5DOF pair -> {dof:?} ({k} vs {o} inliers)"));
    c.check(align_pair(&a, &b, &cfg, 8) == r, "5DOF run repeats");

    // roll the map camera by 6 degrees about the image center
    let roll = 6f64.to_radians();
    let (s, co) = roll.sin_cos();
    let to_c = Matrix3::new(1.0, 0.0, -360.0, 0.0, 1.0, -270.0, 0.0, 0.0, 1.0);
    let rot = Matrix3::new(co, -s, 0.0, s, co, 0.0, 0.0, 0.0, 1.0);
    let tilted = to_c.try_inverse().unwrap() * rot * to_c * h5;
    let (a, b) = warped_pair(&tilted, 300, 60, 0.5, 22);
    let r = align_pair(&a, &b, &cfg, 8);
    let (k, o) = counts(&r);
    let dof = r.chosen.as_ref().map(|h| h.dof);
    c.check(r.accepted && dof == Some(Dof::Eight), format!("rolled pair -> {dof:?} ({k} vs {o} inliers)"));
    c.check(align_pair(&a, &b, &cfg, 8) == r, "rolled run repeats");
    c
}

fn random_cameras(seed: u64, n: usize) -> Vec<ImageRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = |v: f64| (v * 1024.0).round() / 1024.0;
    let base = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0);
    (0..n)
        .map(|i| {
            let kind = if i % 2 == 0 { ImageKind::Query } else { ImageKind::Map };
            let pos = Vec3::new(q(rng.random_range(-6.0..6.0)), q(rng.random_range(-6.0..6.0)), q(rng.random_range(0.0..2.0)));
            let r = Rotation3::from_euler_angles(0.0, 0.0, rng.random_range(-0.5..0.5)).into_inner()
                * base
                * Rotation3::from_euler_angles(rng.random_range(-0.2..0.2), 0.0, 0.0).into_inner();
            ImageRecord::new(format!("c{i:03}"), kind, CameraPose::new(pos, r).unwrap(), 8, 8)
        })
        .collect()
}

fn c3_pair_oracle() -> Checks {
    let mut c = Checks::default();
    let images = random_cameras(31, 500);
    let q: Vec<&ImageRecord> = images.iter().filter(|i| i.kind == ImageKind::Query).collect();
    let m: Vec<&ImageRecord> = images.iter().filter(|i| i.kind == ImageKind::Map).collect();
    let mut want = Vec::new();
    for a in &q {
        for b in &m {
            let d = a.pose.position - b.pose.position;
            let dist = (d.x * d.x + d.y * d.y + d.z * d.z).sqrt();
            let (u, v) = (a.pose.orientation.column(2), b.pose.orientation.column(2));
            let ang = ((u.x * v.x + u.y * v.y + u.z * v.z) / (u.norm() * v.norm())).clamp(-1.0, 1.0).acos();
            if dist <= 1.0 && ang <= 0.2 {
                want.push((a.id.clone(), b.id.clone()));
            }
        }
    }
    want.sort();
    let ids = |p: Vec<mapdelta::pairing::PairCandidate>| {
        let mut v: Vec<_> = p.into_iter().map(|p| (p.query_id, p.map_id)).collect();
        v.sort();
        v
    };
    c.check(ids(select_pairs(&q, &m, 1.0, 0.2)) == want, format!("select_pairs = double loop ({} pairs)", want.len()));
    c.check(ids(select_pairs_indexed(&q, &m, 1.0, 0.2)) == want, "indexed = double loop");
    let before = select_pairs_indexed(&q, &m, 1.0, 0.2);
    let mut exact = true;
    for turns in 1..4 {
        let r = Rotation3::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2 * f64::from(turns)).into_inner().map(f64::round);
        let t = Vec3::new(-5.0, 12.0, 3.0);
        let moved: Vec<ImageRecord> = images
            .iter()
            .map(|i| {
                let mut i = i.clone();
                i.pose.position = r * i.pose.position + t;
                i.pose.orientation = r * i.pose.orientation;
                i
            })
            .collect();
        let q2: Vec<&ImageRecord> = moved.iter().filter(|i| i.kind == ImageKind::Query).collect();
        let m2: Vec<&ImageRecord> = moved.iter().filter(|i| i.kind == ImageKind::Map).collect();
        exact &= select_pairs_indexed(&q2, &m2, 1.0, 0.2) == before && select_pairs(&q2, &m2, 1.0, 0.2) == before;
    }
    c.check(exact, "bit-exact under rigid motions");
    c
}

fn scene_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.aggregate.min_support = 5;
    cfg
}

fn c4_planted_change() -> Checks {
    let mut c = Checks::default();
    let t = Instant::now();
    let spec = SceneSpec::default();
    let (bundle, gt) = generate_scene(&spec).unwrap();
    let r = evaluate_pipeline(&bundle, &gt, &spec, &scene_config()).unwrap();
    let elapsed = t.elapsed();
    let covered: Vec<_> = r.pairs.iter().filter(|p| p.covered).collect();
    let min_iou = covered.iter().map(|p| p.iou).fold(f64::INFINITY, f64::min);
    c.check(!covered.is_empty(), format!("{} covered pairs of {}", covered.len(), r.pairs.len()));
    c.check(min_iou >= 0.7, format!("min covered IoU {min_iou:.3}"));
    for (name, spec) in [("no-change", SceneSpec::no_change()), ("exempt-only", SceneSpec::exempt_only())] {
        let spec = SceneSpec { section: None, ..spec };
        let (bundle, gt) = generate_scene(&spec).unwrap();
        let r = evaluate_pipeline(&bundle, &gt, &spec, &scene_config()).unwrap();
        c.check(r.n_accepted > 0 && r.n_nonempty_masks == 0, format!("{name}: {} nonempty of {} masks", r.n_nonempty_masks, r.n_accepted));
    }
    c.within(elapsed, 30.0, "acceptance scene");
    c
}

fn c5_aggregation() -> Checks {
    let mut c = Checks::default();
    let (w, h) = (64u32, 48u32);
    let truth = ChangeMask::from_fn("m", w, h, |x, y| (16..44).contains(&x) && (10..34).contains(&y));
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let masks: Vec<ChangeMask> = (0..24)
        .map(|_| {
            let mut m = truth.clone();
            for b in m.bits.iter_mut() {
                *b ^= rng.random_bool(0.2);
            }
            m
        })
        .collect();
    let master = build_master("m", &masks, 20, 0.5).unwrap();
    let inter = master.binary.bits.iter().zip(&truth.bits).filter(|(a, b)| **a && **b).count();
    let union = master.binary.bits.iter().zip(&truth.bits).filter(|(a, b)| **a || **b).count();
    let iou = inter as f64 / union as f64;
    c.check(iou >= 0.95, format!("24 noisy masks -> IoU {iou:.4}"));

    // pixel 0 set in 12 masks, pixel 1 in 11
    let boundary: Vec<ChangeMask> =
        (0..24).map(|k| ChangeMask::from_fn("m", 2, 1, |x, _| if x == 0 { k < 12 } else { k < 11 })).collect();
    let m = build_master("m", &boundary, 20, 0.5).unwrap();
    c.check(m.avg.value::<Rational>(0) == Rational::new(1, 2), "12/24 averages to exactly 1/2");
    c.check(m.binary.bits == vec![true, false], "set at 12 of 24, unset at 11");
    let short = build_master("m", &masks[..19], 20, 0.5);
    c.check(matches!(short, Err(AggregateError::InsufficientSupport { found: 19, .. })), "19 masks rejected at min_support 20");
    c
}

fn view(id: &str, yaw: f64, rho: f64) -> ImageRecord {
    let r = Rotation3::from_euler_angles(0.0, yaw, 0.0).into_inner();
    let mut i = ImageRecord::new(id, ImageKind::Map, CameraPose::new(Vec3::zeros(), r).unwrap(), 8, 8);
    i.global_desc = Some(vec![rho, (1.0 - rho * rho).sqrt()]);
    i
}

fn c6_propagation() -> Checks {
    let mut c = Checks::default();
    let p = PropagationParams::default();
    let master = view("master", 0.0, 1.0);
    let gate = |yaw: f64, rho: f64| find_master_match(&view("t", yaw, rho), &[&master], &p).is_some();
    c.check(!gate(0.0, 0.24) && gate(0.0, 0.26), "rho 0.24 rejected, 0.26 accepted");
    c.check(gate(0.39, 0.9) && !gate(0.41, 0.9), "LOS 0.39 accepted, 0.41 rejected");

    let mut target = view("t", 0.0, 1.0);
    for d in [0.99, 1.01] {
        target.features.push(FeaturePoint::new(Vec2::new(1.0, 1.0), vec![0.0], Some(Vec3::new(d, 0.0, 0.0))));
    }
    let tagged = propagate_change(&[Vec3::zeros()], &target, p.search_radius_m);
    c.check(tagged == BTreeSet::from([0]), "0.99 m tagged, 1.01 m not");

    // randomized monotonicity: wider radius and looser gates never lose anything
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut ok = true;
    for _ in 0..200 {
        let mut t = view("t", rng.random_range(-0.8..0.8), rng.random_range(-1.0..1.0));
        for _ in 0..30 {
            let w = Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            t.features.push(FeaturePoint::new(Vec2::new(1.0, 1.0), vec![0.0], Some(w)));
        }
        let changed: Vec<Vec3> = (0..5).map(|_| Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), 0.0)).collect();
        let (r1, r2) = (rng.random_range(0.1..2.0), rng.random_range(0.0..1.0));
        ok &= propagate_change(&changed, &t, r1).is_subset(&propagate_change(&changed, &t, r1 + r2));
        let tight = PropagationParams { min_global_corr: rng.random_range(0.3..0.9), max_fov_sep_rad: rng.random_range(0.1..0.6), ..p };
        let loose = PropagationParams { min_global_corr: tight.min_global_corr * 0.5, max_fov_sep_rad: tight.max_fov_sep_rad * 1.5, ..p };
        ok &= !find_master_match(&t, &[&master], &tight).is_some() || find_master_match(&t, &[&master], &loose).is_some();
    }
    c.check(ok, "monotone on 200 random instances");
    c
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let axis = Unit::new_normalize(Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    Rotation3::from_axis_angle(&axis, rng.random_range(-3.0..3.0)).into_inner()
}

fn cloud(rng: &mut ChaCha8Rng, n: usize, half: f64) -> Vec<Vec3> {
    (0..n).map(|_| Vec3::new(rng.random_range(-half..half), rng.random_range(-half..half), rng.random_range(-half..half))).collect()
}

fn c7_registration() -> Checks {
    let mut c = Checks::default();
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(71);

    let truth = RigidTransform::new(random_rotation(&mut rng), Vec3::new(1.5, -2.0, 0.7));
    let src = cloud(&mut rng, 100, 5.0);
    let dst: Vec<Vec3> = src.iter().map(|p| truth.apply(p)).collect();
    let (fit, _) = rigid_transform_3d(&src, &dst).unwrap();
    let dr = (fit.rotation - truth.rotation).abs().max();
    let dt = (fit.translation - truth.translation).norm();
    c.check(dr <= 1e-9 && dt <= 1e-9, format!("noiseless fit |dR| {dr:.1e}, |dt| {dt:.1e}"));

    let noise = Normal::new(0.0, 0.02).unwrap();
    let truth = RigidTransform::new(random_rotation(&mut rng), Vec3::new(3.0, 1.0, -2.0));
    let mut corr: Vec<Correspondence3D> = cloud(&mut rng, 140, 5.0)
        .into_iter()
        .map(|b| {
            let j = Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
            Correspondence3D::new(truth.apply(&b) + j, b)
        })
        .collect();
    for _ in 0..60 {
        corr.push(Correspondence3D::new(cloud(&mut rng, 1, 5.0)[0], cloud(&mut rng, 1, 5.0)[0]));
    }
    match ransac_6dof(&corr, &Ransac6Params { seed: 3, ..Default::default() }) {
        Ok(Some(r)) => {
            let true_in = r.inlier_flags[..140].iter().filter(|&&f| f).count();
            let (deg, dist) = transform_error(&r.transform, &truth);
            c.check(true_in >= 133, format!("ransac true inliers {true_in}/140"));
            c.check(deg < 1.0 && dist < 0.05, format!("ransac error {deg:.3} deg, {:.1} mm", dist * 1e3));
        }
        other => c.check(false, format!("ransac_6dof: {other:?}")),
    }

    let src = cloud(&mut rng, 2000, 5.0);
    let truth = RigidTransform::new(random_rotation(&mut rng), Vec3::new(0.5, -1.0, 2.0));
    let dst: Vec<Vec3> = src.iter().map(|p| truth.apply(p)).collect();
    let wobble = Rotation3::from_axis_angle(&Unit::new_normalize(Vec3::new(1.0, -2.0, 0.5)), 2f64.to_radians()).into_inner();
    let start = RigidTransform::new(wobble * truth.rotation, truth.translation + Vec3::new(0.03, 0.03, -0.0283));
    let (d0, t0m) = transform_error(&start, &truth);
    let r = icp_refine(&src, &dst, &start, &IcpParams::default());
    let (deg, dist) = transform_error(&r.transform, &truth);
    c.check(deg < 0.2 && dist < 0.01, format!("icp from {d0:.2} deg/{:.0} mm to {deg:.4} deg/{:.2} mm", t0m * 1e3, dist * 1e3));
    c.check(r.rms_history.windows(2).all(|w| w[1] <= w[0]), format!("icp rms non-increasing over {} steps", r.rms_history.len()));

    let s = 1.37;
    let corr: Vec<Correspondence3D> = cloud(&mut rng, 80, 5.0)
        .into_iter()
        .map(|a| {
            let j = Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
            Correspondence3D::new(a + j * 0.5, a / s)
        })
        .collect();
    let got = median_of_scales(&corr, 7).unwrap();
    c.check((got - s).abs() <= 0.01 * s, format!("scale {got:.4} vs {s}"));
    c.within(t0.elapsed(), 5.0, "combined");
    c
}

/// Per-pixel evaluation straight from the class-confusion definitions.
fn brute_scores(pred: &[bool], gt: &[bool]) -> (f64, f64, f64) {
    // n[i][j]: reference class i predicted as j; class 0 is "changed"
    let mut n = [[0f64; 2]; 2];
    for (&p, &g) in pred.iter().zip(gt) {
        n[usize::from(!g)][usize::from(!p)] += 1.0;
    }
    let total = pred.len() as f64;
    let mut mean = 0.0;
    let mut weighted = 0.0;
    for (i, row) in n.iter().enumerate() {
        let s_i = row[0] + row[1];
        let col = n[0][i] + n[1][i];
        let union = s_i + col - row[i];
        let iou = if union > 0.0 { row[i] / union } else { 1.0 };
        mean += iou / 2.0;
        weighted += s_i * iou / total;
    }
    let (tp, fp, fn_) = (n[0][0], n[1][0], n[0][1]);
    let f = if tp + fp + fn_ > 0.0 { 2.0 * tp / (2.0 * tp + fp + fn_) } else { 1.0 };
    (weighted, mean, f)
}

fn c8_metrics() -> Checks {
    let mut c = Checks::default();
    let mut rng = ChaCha8Rng::seed_from_u64(81);
    let mut worst = 0f64;
    for _ in 0..100 {
        let (pp, pg) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let pred = ChangeMask::from_fn("i", 16, 16, |_, _| rng.random_bool(pp));
        let gt = ChangeMask::from_fn("i", 16, 16, |_, _| rng.random_bool(pg));
        let conf = confusion(&pred, &gt).unwrap();
        let (w, m, f) = brute_scores(&pred.bits, &gt.bits);
        for d in [fwiou::<f64>(&conf) - w, miou::<f64>(&conf) - m, f1::<f64>(&conf) - f] {
            worst = worst.max(d.abs());
        }
    }
    c.check(worst <= 1e-12, format!("100 random 16x16 pairs, max deviation {worst:.1e}"));
    let ex = Confusion::new(50, 25, 25, 100);
    c.check(f1::<Rational>(&ex) == Rational::new(2, 3), "worked example F1 = 2/3");
    c.check(miou::<Rational>(&ex) == Rational::new(7, 12), format!("worked example mIOU = 7/12 ({:.4})", miou::<f64>(&ex)));
    c.check(fwiou::<Rational>(&ex) == Rational::new(145, 240), format!("worked example fwIOU = 145/240 ({:.4})", fwiou::<f64>(&ex)));
    c
}

fn c9_map_update() -> Checks {
    let mut c = Checks::default();
    let spec = SceneSpec { section: None, ..SceneSpec::default() };
    let (bundle, gt) = generate_scene(&spec).unwrap();
    let mut cfg = scene_config();
    cfg.workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let run = run_pipeline(&bundle, &cfg).unwrap();
    let (mut changed, mut gone, mut unchanged, mut lost) = (0usize, 0usize, 0usize, 0usize);
    let mut order_kept = true;
    for img in bundle.of_kind(ImageKind::Map) {
        let truth = gt.changed_features.get(&img.id).cloned().unwrap_or_default();
        let after = run.updated.get(&img.id).unwrap();
        // removal keeps order, so survivors are a subsequence of the original
        let mut k = 0;
        let mut survived = vec![false; img.features.len()];
        for f in &after.features {
            while k < img.features.len() && img.features[k] != *f {
                k += 1;
            }
            if k == img.features.len() {
                order_kept = false;
                break;
            }
            survived[k] = true;
            k += 1;
        }
        for (i, f) in img.features.iter().enumerate() {
            if f.world.is_none() {
                continue;
            }
            if truth.contains(&i) {
                changed += 1;
                gone += usize::from(!survived[i]);
            } else {
                unchanged += 1;
                lost += usize::from(!survived[i]);
            }
        }
    }
    c.check(order_kept, "updated map keeps untagged features in order");
    let recall = gone as f64 / changed.max(1) as f64;
    let lost_frac = lost as f64 / unchanged.max(1) as f64;
    c.check(changed > 0 && recall >= 0.9, format!("{gone}/{changed} planted-change features removed ({:.1}%)", 100.0 * recall));
    c.check(lost_frac <= 0.05, format!("{lost}/{unchanged} unchanged features lost ({:.2}%)", 100.0 * lost_frac));
    c
}

fn c10_determinism() -> Checks {
    let mut c = Checks::default();
    let spec = SceneSpec { n_map_images: 3, n_query_images: 3, section: None, ..SceneSpec::default() };
    let (bundle, _) = generate_scene(&spec).unwrap();
    let d = tempfile::tempdir().unwrap();
    write_bundle(&bundle, &d.path().join("a")).unwrap();
    let back = read_bundle(&d.path().join("a")).unwrap();
    write_bundle(&back, &d.path().join("b")).unwrap();
    c.check(back == bundle, "read(write(b)) == b");
    c.check(common::hash_tree(&d.path().join("a")) == common::hash_tree(&d.path().join("b")), "rewrite is byte-identical");
    let (r1, r2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let h1 = common::run_chain(r1.path(), &["--seed", "4"]);
    let h2 = common::run_chain(r2.path(), &["--seed", "4"]);
    let differing: Vec<&String> = h1.keys().filter(|k| h1.get(*k) != h2.get(*k)).collect();
    c.check(differing.is_empty(), format!("{} subcommand outputs rehash identically {differing:?}", h1.len()));
    c
}

type Criterion = (&'static str, fn() -> Checks);

fn main() {
    let criteria: [Criterion; 10] = [
        ("5DOF recovery", c1_five_dof_recovery),
        ("model selection", c2_model_selection),
        ("pair-selection oracle", c3_pair_oracle),
        ("planted-change recovery", c4_planted_change),
        ("aggregation arithmetic", c5_aggregation),
        ("propagation thresholds", c6_propagation),
        ("rigid registration", c7_registration),
        ("metrics oracle", c8_metrics),
        ("map update", c9_map_update),
        ("determinism and round trip", c10_determinism),
    ];
    let mut failures = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let checks = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Checks { failed: vec![format!("panicked: {}", msg.unwrap_or_default())], notes: vec![] }
        });
        let pass = checks.failed.is_empty();
        failures += usize::from(!pass);
        let mut detail = checks.failed.join("; ");
        if !checks.notes.is_empty() {
            detail = if pass { checks.notes.join("; ") } else { format!("{detail} | held: {}", checks.notes.join("; ")) };
        }
        println!("{} criterion {:>2} {name} [{:.1}s]: {detail}", if pass { "PASS" } else { "FAIL" }, k + 1, t.elapsed().as_secs_f64());
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
