//! One function per subcommand.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mapdelta::aggregate::{build_master, tag_changed_features};
use mapdelta::alignment::AlignmentResult;
use mapdelta::mapupdate::{augment_map, mark_changed, remove_changed, AugmentParams, Correspondence3D, FeatureTags};
use mapdelta::metrics::{aggregate_scores, confusion, Confusion, Scores};
use mapdelta::model::pgm::{decode_mask, encode_mask, encode_u16};
use mapdelta::model::{ChangeMask, ImageKind, MapBundle};
use mapdelta::pairing::PairCandidate;
use mapdelta::pipeline::{align_pairs, detect_pairs, select_bundle_pairs};
use mapdelta::propagate::{is_significantly_changed_by, propagate_tags, MasterMatch, Provenance};
use mapdelta::synth::{evaluate_pipeline, generate_scene, make_section, SceneSpec};
use mapdelta::{read_bundle, write_bundle, PipelineConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::args::*;
use crate::log::Log;
use crate::CliError;

const MAP_SUFFIX: &str = ".map.pgm";
const QUERY_SUFFIX: &str = ".query.pgm";
const MASTER_SUFFIX: &str = ".master.pgm";
const AVG_SUFFIX: &str = ".avg.pgm";

/// `seed` is the `--seed` flag, which also reseeds generated scenes.
pub fn dispatch(cmd: &Command, cfg: &PipelineConfig, seed: Option<u64>, log: &Log) -> Result<(), CliError> {
    match cmd {
        Command::PairSelect(a) => pair_select(a, cfg, log),
        Command::Align(a) => align(a, cfg, log),
        Command::Detect(a) => detect(a, cfg, log),
        Command::Aggregate(a) => aggregate(a, cfg, log),
        Command::Propagate(a) => propagate(a, cfg, log),
        Command::Update(a) => update(a, log),
        Command::Augment(a) => augment(a, cfg, log),
        Command::Eval(a) => eval(a, cfg, log),
        Command::Synth(a) => synth(a, seed, log),
        Command::E2e(a) => e2e(a, cfg, log),
        Command::Config(ConfigCommand::Init { out }) => config_init(out.as_deref(), cfg),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input { path: path.to_path_buf(), detail: e.to_string() })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("output serializes");
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// Files in `dir` ending in `suffix`, sorted by name, with the suffix stripped.
fn files_with_suffix(dir: &Path, suffix: &str) -> Result<Vec<(String, PathBuf)>, CliError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        if let Some(stem) = name.strip_suffix(suffix) {
            out.push((stem.to_string(), path.clone()));
        }
    }
    out.sort();
    Ok(out)
}

fn read_mask(path: &Path, image_id: &str) -> Result<ChangeMask, CliError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_mask(image_id, &bytes).map_err(|e| CliError::Input { path: path.to_path_buf(), detail: e.to_string() })
}

fn check_dims(bundle: &MapBundle, mask: &ChangeMask, path: &Path) -> Result<(), CliError> {
    let img = bundle.get(&mask.image_id).ok_or_else(|| CliError::Input {
        path: path.to_path_buf(),
        detail: format!("image '{}' is not in the bundle", mask.image_id),
    })?;
    if (img.width, img.height) != (mask.width, mask.height) {
        return Err(CliError::Input {
            path: path.to_path_buf(),
            detail: format!(
                "mask is {}x{}, image '{}' is {}x{}",
                mask.width, mask.height, img.id, img.width, img.height
            ),
        });
    }
    Ok(())
}

fn with_overrides(cfg: &PipelineConfig, f: impl FnOnce(&mut PipelineConfig)) -> Result<PipelineConfig, CliError> {
    let mut c = cfg.clone();
    f(&mut c);
    c.validate()?;
    Ok(c)
}

fn pair_select(a: &PairSelectArgs, cfg: &PipelineConfig, log: &Log) -> Result<(), CliError> {
    let cfg = with_overrides(cfg, |c| {
        if let Some(d) = a.max_dist {
            c.pairing.max_dist_m = d;
        }
        if let Some(r) = a.max_ang {
            c.pairing.max_ang_rad = r;
        }
    })?;
    let t = Instant::now();
    let bundle = read_bundle(&a.bundle)?;
    let pairs = select_bundle_pairs(&bundle, &cfg);
    write_json(&a.out, &pairs)?;
    log.done("pair-select", t, json!({ "images": bundle.images.len(), "pairs": pairs.len() }));
    Ok(())
}

fn align(a: &AlignArgs, cfg: &PipelineConfig, log: &Log) -> Result<(), CliError> {
    let cfg = with_overrides(cfg, |c| {
        if let Some(n) = a.min_inliers {
            c.align.min_inliers = n;
        }
    })?;
    let t = Instant::now();
    let bundle = read_bundle(&a.bundle)?;
    let pairs: Vec<PairCandidate> = read_json(&a.pairs)?;
    let results = align_pairs(&bundle, &pairs, &cfg)?;
    for r in &results {
        log.event(
            "align",
            json!({
                "pair": r.pair.key(),
                "accepted": r.accepted,
                "dof": r.chosen.as_ref().map(|h| u8::from(h.dof)),
                "inliers": r.chosen.as_ref().map_or(0, |h| h.inliers.len()),
                "matches": r.matches_used,
                "failed_stage": r.failed_stage,
            }),
        );
    }
    write_json(&a.out, &results)?;
    let accepted = results.iter().filter(|r| r.accepted).count();
    log.done("align", t, json!({ "pairs": results.len(), "accepted": accepted }));
    Ok(())
}

fn detect(a: &DetectArgs, cfg: &PipelineConfig, log: &Log) -> Result<(), CliError> {
    let t = Instant::now();
    let bundle = read_bundle(&a.bundle)?;
    let alignments: Vec<AlignmentResult> = read_json(&a.alignments)?;
    let (masks, failures) = detect_pairs(&bundle, &alignments, cfg)?;
    fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    for m in &masks {
        let key = m.pair.key();
        write_bytes(&a.out.join(format!("{key}{MAP_SUFFIX}")), &encode_mask(&m.map_mask))?;
        write_bytes(&a.out.join(format!("{key}{QUERY_SUFFIX}")), &encode_mask(&m.query_mask))?;
        log.event(
            "detect",
            json!({ "pair": key, "map_px": m.map_mask.count_ones(), "query_px": m.query_mask.count_ones() }),
        );
    }
    for f in &failures {
        log.event("detect", json!({ "pair": f.key, "failed": f.reason }));
    }
    log.done("detect", t, json!({ "masks": masks.len(), "failures": failures.len() }));
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct MasterSummary {
    map_id: String,
    support: usize,
    changed_px: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct AggregateSummary {
    masters: Vec<MasterSummary>,
    /// Map images without enough masks, with the reason.
    skipped: BTreeMap<String, String>,
}

fn aggregate(a: &AggregateArgs, cfg: &PipelineConfig, log: &Log) -> Result<(), CliError> {
    let cfg = with_overrides(cfg, |c| {
        if let Some(n) = a.min_support {
            c.aggregate.min_support = n;
        }
        if let Some(v) = a.threshold {
            c.aggregate.vote_threshold = v;
        }
    })?;
    let t = Instant::now();
    let bundle = read_bundle(&a.bundle)?;
    let mut per_map: BTreeMap<String, Vec<ChangeMask>> = BTreeMap::new();
    for (stem, path) in files_with_suffix(&a.masks, MAP_SUFFIX)? {
        let Some((_, map_id)) = stem.split_once("__") else {
            return Err(CliError::Input { path, detail: "expected <query_id>__<map_id>.map.pgm".into() });
        };
        let mask = read_mask(&path, map_id)?;
        check_dims(&bundle, &mask, &path)?;
        if bundle.get(map_id).is_some_and(|i| i.kind != ImageKind::Map) {
            return Err(CliError::Input { path, detail: format!("'{map_id}' is not a map image") });
        }
        per_map.entry(map_id.to_string()).or_default().push(mask);
    }
    fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    let mut summary = AggregateSummary { masters: Vec::new(), skipped: BTreeMap::new() };
    for (id, stack) in &per_map {
        match build_master(id, stack, cfg.aggregate.min_support, cfg.aggregate.vote_threshold) {
            Ok(m) => {
                write_bytes(&a.out.join(format!("{id}{AVG_SUFFIX}")), &encode_u16(m.avg.width, m.avg.height, &m.avg.to_u16()))?;
                write_bytes(&a.out.join(format!("{id}{MASTER_SUFFIX}")), &encode_mask(&m.binary))?;
                log.event("aggregate", json!({ "map": id, "support": m.support, "changed_px": m.binary.count_ones() }));
                summary.masters.push(MasterSummary { map_id: id.clone(), support: m.support, changed_px: m.binary.count_ones() });
            }
            Err(e) => {
                log.event("aggregate", json!({ "map": id, "skipped": e.to_string() }));
                summary.skipped.insert(id.clone(), e.to_string());
            }
        }
    }
    write_json(&a.out.join("summary.json"), &summary)?;
    log.done("aggregate", t, json!({ "masters": summary.masters.len(), "skipped": summary.skipped.len() }));
    Ok(())
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct ImageTags {
    direct: Vec<usize>,
    propagated: Vec<usize>,
}

/// `tags.json`: changed feature indices per image, split by provenance.
#[derive(Debug, Default, Serialize, Deserialize)]
struct TagsFile {
    tags: BTreeMap<String, ImageTags>,
    /// Propagation target to the master it was matched with.
    matches: BTreeMap<String, MasterMatch>,
    /// Images whose changed share of 3D features exceeds the significance level.
    significant: Vec<String>,
}

impl TagsFile {
    fn flatten(&self) -> FeatureTags {
        self.tags
            .iter()
            .map(|(id, t)| (id.clone(), t.direct.iter().chain(&t.propagated).copied().collect()))
            .collect()
    }
}

fn propagate(a: &PropagateArgs, cfg: &PipelineConfig, log: &Log) -> Result<(), CliError> {
    let t = Instant::now();
    let bundle = read_bundle(&a.bundle)?;
    let mut direct: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    for (id, path) in files_with_suffix(&a.masters, MASTER_SUFFIX)? {
        let mask = read_mask(&path, &id)?;
        check_dims(&bundle, &mask, &path)?;
        let img = bundle.get(&id).expect("checked");
        direct.insert(id, tag_changed_features(&mask, img));
    }
    let out = propagate_tags(&bundle, &direct, &cfg.propagate).map_err(|e| CliError::Invalid(e.to_string()))?;
    let mut file = TagsFile { matches: out.matches.clone(), ..Default::default() };
    for (id, tags) in &out.tags {
        let entry = file.tags.entry(id.clone()).or_default();
        for (&i, p) in tags {
            match p {
                Provenance::Direct => entry.direct.push(i),
                Provenance::Propagated => entry.propagated.push(i),
            }
        }
    }
    for (id, set) in file.flatten() {
        let img = bundle.get(&id).expect("tags refer to bundle images");
        if is_significantly_changed_by(img, &set, cfg.propagate.significant_change_frac) {
            file.significant.push(id);
        }
    }
    write_json(&a.out, &file)?;
    let direct_n: usize = file.tags.values().map(|t| t.direct.len()).sum();
    let prop_n: usize = file.tags.values().map(|t| t.propagated.len()).sum();
    log.done(
        "propagate",
        t,
        json!({ "masters": direct.len(), "direct": direct_n, "propagated": prop_n, "significant": file.significant.len() }),
    );
    Ok(())
}

fn update(a: &UpdateArgs, log: &Log) -> Result<(), CliError> {
    let t = Instant::now();
    let bundle = read_bundle(&a.bundle)?;
    let tags: TagsFile = read_json(&a.tags)?;
    let flat = tags.flatten();
    let updated = if a.mark { mark_changed(&bundle, &flat) } else { remove_changed(&bundle, &flat) }
        .map_err(|e| CliError::Input { path: a.tags.clone(), detail: e.to_string() })?;
    write_bundle(&updated, &a.out)?;
    log.done(
        "update",
        t,
        json!({ "features_before": bundle.feature_count(), "features_after": updated.feature_count(), "mark": a.mark }),
    );
    Ok(())
}

fn augment(a: &AugmentArgs, cfg: &PipelineConfig, log: &Log) -> Result<(), CliError> {
    let t = Instant::now();
    let old = read_bundle(&a.old)?;
    let section = read_bundle(&a.section)?;
    let corr: Vec<Correspondence3D> = read_json(&a.corr)?;
    let params = AugmentParams { ransac: cfg.ransac6(), icp: cfg.icp() };
    let (merged, report) = augment_map(&old, &section, &corr, &params);
    write_json(&a.report, &report)?;
    log.done(
        "augment",
        t,
        json!({ "merged": report.merged, "inliers": report.n_inliers, "scale": report.scale, "final_rms": report.final_rms }),
    );
    if !report.merged {
        return Err(CliError::Rejected(format!(
            "registration failed: {}",
            report.failure.as_deref().unwrap_or("unknown reason")
        )));
    }
    write_bundle(&merged, &a.out)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct MaskScore {
    pred: String,
    gt: String,
    confusion: Confusion,
    scores: Scores,
}

#[derive(Debug, Serialize, Deserialize)]
struct EvalFile {
    averaging: mapdelta::metrics::Averaging,
    masks: Vec<MaskScore>,
    aggregate: Option<Scores>,
}

/// Reference mask for a predicted one: the same file name, else the image
/// id read from `<query>__<map>.<side>.pgm`.
fn reference_for(gt: &Path, name: &str) -> Option<(PathBuf, String)> {
    let same = gt.join(name);
    if same.is_file() {
        let id = name.strip_suffix(".pgm").unwrap_or(name).to_string();
        return Some((same, id));
    }
    let (key, side) = name
        .strip_suffix(MAP_SUFFIX)
        .map(|k| (k, 1))
        .or_else(|| name.strip_suffix(QUERY_SUFFIX).map(|k| (k, 0)))?;
    let (q, m) = key.split_once("__")?;
    let id = if side == 1 { m } else { q };
    let p = gt.join(format!("{id}.pgm"));
    p.is_file().then(|| (p, id.to_string()))
}

fn eval(a: &EvalArgs, cfg: &PipelineConfig, log: &Log) -> Result<(), CliError> {
    let t = Instant::now();
    let mut masks = Vec::new();
    let mut confusions = Vec::new();
    for (stem, path) in files_with_suffix(&a.pred, ".pgm")? {
        let name = format!("{stem}.pgm");
        let (gt_path, id) = reference_for(&a.gt, &name)
            .ok_or_else(|| CliError::Input { path: path.clone(), detail: "no reference mask".into() })?;
        let pred = read_mask(&path, &id)?;
        let gt = read_mask(&gt_path, &id)?;
        let c = confusion(&pred, &gt).map_err(|e| CliError::Input { path: path.clone(), detail: e.to_string() })?;
        confusions.push(c);
        masks.push(MaskScore {
            pred: name,
            gt: gt_path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string(),
            confusion: c,
            scores: Scores::of(&c),
        });
    }
    let report = EvalFile {
        averaging: cfg.eval.averaging,
        aggregate: aggregate_scores(&confusions, cfg.eval.averaging),
        masks,
    };
    write_json(&a.out, &report)?;
    log.done("eval", t, json!({ "masks": report.masks.len(), "aggregate": report.aggregate }));
    Ok(())
}

fn load_spec(path: Option<&Path>, seed: Option<u64>) -> Result<SceneSpec, CliError> {
    let mut spec = match path {
        Some(p) => read_json(p)?,
        None => SceneSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    spec.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
    Ok(spec)
}

#[derive(Debug, Serialize, Deserialize)]
struct TruthFile {
    /// Per map image, features observing a planted change.
    changed_features: BTreeMap<String, BTreeSet<usize>>,
    /// Section-to-map transform, row-major 4x4, when a section was generated.
    section_transform: Option<[f64; 16]>,
}

fn synth(a: &SynthArgs, seed: Option<u64>, log: &Log) -> Result<(), CliError> {
    let t = Instant::now();
    let spec = load_spec(a.spec.as_deref(), seed)?;
    let (bundle, gt) = generate_scene(&spec).map_err(|e| CliError::Invalid(e.to_string()))?;
    write_bundle(&bundle, &a.out)?;
    let truth_dir = a.out.join("truth");
    for (id, mask) in &gt.masks {
        write_bytes(&truth_dir.join(format!("{id}.pgm")), &encode_mask(mask))?;
    }
    let mut truth = TruthFile { changed_features: gt.changed_features.clone(), section_transform: None };
    if let Some(s) = &spec.section {
        let (section, corr) = make_section(&bundle, s, spec.seed);
        write_bundle(&section, &a.out.join("section"))?;
        write_json(&a.out.join("corr.json"), &corr)?;
        let m = s.truth().to_matrix4();
        truth.section_transform = Some(std::array::from_fn(|k| m[(k / 4, k % 4)]));
    }
    write_json(&truth_dir.join("truth.json"), &truth)?;
    log.done(
        "synth",
        t,
        json!({ "images": bundle.images.len(), "features": bundle.feature_count(), "section": spec.section.is_some() }),
    );
    Ok(())
}

fn e2e(a: &E2eArgs, cfg: &PipelineConfig, log: &Log) -> Result<(), CliError> {
    let t = Instant::now();
    let spec = load_spec(a.spec.as_deref(), None)?;
    let (bundle, gt) = generate_scene(&spec).map_err(|e| CliError::Invalid(e.to_string()))?;
    log.done("synth", t, json!({ "images": bundle.images.len(), "features": bundle.feature_count() }));
    let t = Instant::now();
    let report = evaluate_pipeline(&bundle, &gt, &spec, cfg)?;
    write_json(&a.report, &report)?;
    log.done(
        "e2e",
        t,
        json!({
            "pairs": report.n_pairs,
            "accepted": report.n_accepted,
            "covered": report.n_covered,
            "min_covered_iou": report.min_covered_iou,
            "tag_recall": report.tags.recall,
            "tag_precision": report.tags.precision,
            "lost_unchanged": report.tags.lost_unchanged,
        }),
    );
    Ok(())
}

fn config_init(out: Option<&Path>, cfg: &PipelineConfig) -> Result<(), CliError> {
    let mut text = cfg.to_json_pretty();
    text.push('\n');
    match out {
        Some(p) => write_bytes(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
