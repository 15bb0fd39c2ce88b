//! Stage orchestration over a whole bundle.
//!
//! Per-pair work runs on a pool of `workers` threads. Every pair draws its
//! randomness from a seed derived from its key, and results are collected in
//! pair order, so the output does not depend on the worker count.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{build_master, tag_changed_features, AggregateError, MasterMask};
use crate::alignment::{align_pair, AlignmentResult};
use crate::change::{detect_change, ChangeError};
use crate::config::PipelineConfig;
use crate::mapupdate::{remove_changed, FeatureTags, UpdateError};
use crate::model::{ChangeMask, ImageKind, ImageRecord, MapBundle};
use crate::pairing::{select_pairs_indexed, PairCandidate};
use crate::propagate::{is_significantly_changed_by, propagate_tags, PropagateError, PropagationOutcome};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("pair {key}: image '{id}' is not in the bundle")]
    MissingImage { key: String, id: String },
    #[error("could not start worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Propagate(#[from] PropagateError),
    #[error(transparent)]
    Update(#[from] UpdateError),
}

/// Runs `f` over `items` on `workers` threads, keeping input order.
pub fn par_map<T: Sync, R: Send>(
    items: &[T],
    workers: usize,
    f: impl Fn(&T) -> R + Sync + Send,
) -> Result<Vec<R>, PipelineError> {
    if workers <= 1 {
        return Ok(items.iter().map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}

fn image<'a>(bundle: &'a MapBundle, key: &str, id: &str) -> Result<&'a ImageRecord, PipelineError> {
    bundle.get(id).ok_or_else(|| PipelineError::MissingImage { key: key.to_string(), id: id.to_string() })
}

pub fn select_bundle_pairs(bundle: &MapBundle, cfg: &PipelineConfig) -> Vec<PairCandidate> {
    let queries = bundle.of_kind(ImageKind::Query);
    let maps = bundle.of_kind(ImageKind::Map);
    select_pairs_indexed(&queries, &maps, cfg.pairing.max_dist_m, cfg.pairing.max_ang_rad)
}

pub fn align_pairs(
    bundle: &MapBundle,
    pairs: &[PairCandidate],
    cfg: &PipelineConfig,
) -> Result<Vec<AlignmentResult>, PipelineError> {
    for p in pairs {
        image(bundle, &p.key(), &p.query_id)?;
        image(bundle, &p.key(), &p.map_id)?;
    }
    par_map(pairs, cfg.workers, |p| align_pair(&bundle.images[&p.query_id], &bundle.images[&p.map_id], &cfg.align, cfg.seed))
}

/// Change masks on both sides of one accepted pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMasks {
    pub pair: PairCandidate,
    pub map_mask: ChangeMask,
    pub query_mask: ChangeMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub key: String,
    pub stage: String,
    pub reason: String,
}

/// Detection on every accepted alignment; rejected pairs are skipped.
pub fn detect_pairs(
    bundle: &MapBundle,
    alignments: &[AlignmentResult],
    cfg: &PipelineConfig,
) -> Result<(Vec<PairMasks>, Vec<StageFailure>), PipelineError> {
    let accepted: Vec<&AlignmentResult> = alignments.iter().filter(|a| a.accepted).collect();
    for a in &accepted {
        image(bundle, &a.pair.key(), &a.pair.query_id)?;
        image(bundle, &a.pair.key(), &a.pair.map_id)?;
    }
    let policy = cfg.semantic.policy();
    let results = par_map(&accepted, cfg.workers, |a| -> Result<PairMasks, ChangeError> {
        let q = &bundle.images[&a.pair.query_id];
        let m = &bundle.images[&a.pair.map_id];
        let d = detect_change(a, q, m, &cfg.change, &policy, cfg.semantic.min_feature_dist_m)?;
        Ok(PairMasks { pair: a.pair.clone(), map_mask: d.map.mask, query_mask: d.query.mask })
    })?;
    let mut masks = Vec::new();
    let mut failures = Vec::new();
    for (a, r) in accepted.iter().zip(results) {
        match r {
            Ok(m) => masks.push(m),
            Err(e) => failures.push(StageFailure { key: a.pair.key(), stage: "detect".into(), reason: e.to_string() }),
        }
    }
    Ok((masks, failures))
}

/// Master masks for map images with enough support; the others are listed
/// with their mask count.
pub fn build_masters(
    masks: &[PairMasks],
    cfg: &PipelineConfig,
) -> (BTreeMap<String, MasterMask>, BTreeMap<String, AggregateError>) {
    let mut per_map: BTreeMap<&str, Vec<ChangeMask>> = BTreeMap::new();
    for m in masks {
        per_map.entry(m.pair.map_id.as_str()).or_default().push(m.map_mask.clone());
    }
    let mut masters = BTreeMap::new();
    let mut skipped = BTreeMap::new();
    for (id, stack) in per_map {
        match build_master(id, &stack, cfg.aggregate.min_support, cfg.aggregate.vote_threshold) {
            Ok(m) => {
                masters.insert(id.to_string(), m);
            }
            Err(e) => {
                skipped.insert(id.to_string(), e);
            }
        }
    }
    (masters, skipped)
}

/// Features of each master image falling on its master mask.
pub fn direct_tags(bundle: &MapBundle, masters: &BTreeMap<String, MasterMask>) -> FeatureTags {
    masters
        .iter()
        .filter_map(|(id, m)| bundle.get(id).map(|img| (id.clone(), tag_changed_features(&m.binary, img))))
        .collect()
}

/// Every tag, direct or propagated, as plain index sets.
pub fn flatten_tags(out: &PropagationOutcome) -> FeatureTags {
    out.tags
        .iter()
        .filter(|(_, t)| !t.is_empty())
        .map(|(id, t)| (id.clone(), t.keys().copied().collect()))
        .collect()
}

/// Products of a full run, in stage order.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub pairs: Vec<PairCandidate>,
    pub alignments: Vec<AlignmentResult>,
    pub masks: Vec<PairMasks>,
    pub failures: Vec<StageFailure>,
    pub masters: BTreeMap<String, MasterMask>,
    pub skipped_masters: BTreeMap<String, AggregateError>,
    pub propagation: PropagationOutcome,
    pub tags: FeatureTags,
    /// Map images whose changed share of 3D features exceeds the significance level.
    pub significant: BTreeSet<String>,
    pub updated: MapBundle,
}

/// Pair selection through feature removal.
pub fn run_pipeline(bundle: &MapBundle, cfg: &PipelineConfig) -> Result<PipelineRun, PipelineError> {
    let pairs = select_bundle_pairs(bundle, cfg);
    let alignments = align_pairs(bundle, &pairs, cfg)?;
    let (masks, failures) = detect_pairs(bundle, &alignments, cfg)?;
    let (masters, skipped_masters) = build_masters(&masks, cfg);
    let direct = direct_tags(bundle, &masters);
    let propagation = propagate_tags(bundle, &direct, &cfg.propagate)?;
    let tags = flatten_tags(&propagation);
    let significant = tags
        .iter()
        .filter(|(id, t)| {
            bundle.get(id).is_some_and(|img| is_significantly_changed_by(img, t, cfg.propagate.significant_change_frac))
        })
        .map(|(id, _)| id.clone())
        .collect();
    let updated = remove_changed(bundle, &tags)?;
    Ok(PipelineRun {
        pairs,
        alignments,
        masks,
        failures,
        masters,
        skipped_masters,
        propagation,
        tags,
        significant,
        updated,
    })
}
