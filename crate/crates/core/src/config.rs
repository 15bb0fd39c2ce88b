//! Every pipeline threshold in one serializable document.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::aggregate::{DEFAULT_MIN_SUPPORT, DEFAULT_VOTE_THRESHOLD};
use crate::alignment::AlignConfig;
use crate::change::ChangeParams;
use crate::mapupdate::{IcpParams, Ransac6Params};
use crate::metrics::Averaging;
use crate::pairing::{DEFAULT_MAX_ANG_RAD, DEFAULT_MAX_DIST_M};
use crate::preprocess::{SemanticPolicy, DEFAULT_MIN_FEATURE_DIST_M};
use crate::propagate::PropagationParams;

/// Prefix of environment variables that override config keys.
pub const ENV_PREFIX: &str = "MAPDELTA_";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid {field}: {detail}")]
    Invalid { field: String, detail: String },
    #[error("config parse error: {0}")]
    Parse(String),
}

fn invalid(field: &str, detail: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), detail: detail.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairingConfig {
    pub max_dist_m: f64,
    pub max_ang_rad: f64,
}

impl Default for PairingConfig {
    fn default() -> Self {
        PairingConfig { max_dist_m: DEFAULT_MAX_DIST_M, max_ang_rad: DEFAULT_MAX_ANG_RAD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemanticConfig {
    pub exempt_class_ids: Vec<u16>,
    pub min_feature_dist_m: f64,
}

impl Default for SemanticConfig {
    fn default() -> Self {
        SemanticConfig {
            exempt_class_ids: SemanticPolicy::street().exempt_class_ids.into_iter().collect(),
            min_feature_dist_m: DEFAULT_MIN_FEATURE_DIST_M,
        }
    }
}

impl SemanticConfig {
    pub fn policy(&self) -> SemanticPolicy {
        SemanticPolicy::new(self.exempt_class_ids.iter().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregateConfig {
    pub min_support: usize,
    pub vote_threshold: f64,
}

impl Default for AggregateConfig {
    fn default() -> Self {
        AggregateConfig { min_support: DEFAULT_MIN_SUPPORT, vote_threshold: DEFAULT_VOTE_THRESHOLD }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationConfig {
    pub inlier_m: f64,
    pub confidence: f64,
    pub max_iters: usize,
    pub icp_max_iters: usize,
    pub icp_tol_m: f64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        let (r, i) = (Ransac6Params::default(), IcpParams::default());
        RegistrationConfig {
            inlier_m: r.inlier_m,
            confidence: r.confidence,
            max_iters: r.max_iters,
            icp_max_iters: i.max_iters,
            icp_tol_m: i.tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub averaging: Averaging,
}

/// Full pipeline configuration; missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Root seed; per-pair and per-stage seeds are derived from it.
    pub seed: u64,
    pub workers: usize,
    pub pairing: PairingConfig,
    pub align: AlignConfig,
    pub change: ChangeParams,
    pub semantic: SemanticConfig,
    pub aggregate: AggregateConfig,
    pub propagate: PropagationParams,
    pub registration: RegistrationConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            workers: 1,
            pairing: PairingConfig::default(),
            align: AlignConfig::default(),
            change: ChangeParams::default(),
            semantic: SemanticConfig::default(),
            aggregate: AggregateConfig::default(),
            propagate: PropagationParams::default(),
            registration: RegistrationConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive, got {v}")))
    }
}

fn probability(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must lie in (0, 1), got {v}")))
    }
}

fn at_least_one(field: &str, v: usize) -> Result<(), ConfigError> {
    if v >= 1 {
        Ok(())
    } else {
        Err(invalid(field, "must be at least 1"))
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every value; the error names the offending key as `section.key`.
    pub fn validate(&self) -> Result<(), ConfigError> {
        at_least_one("workers", self.workers)?;
        positive("pairing.max_dist_m", self.pairing.max_dist_m)?;
        positive("pairing.max_ang_rad", self.pairing.max_ang_rad)?;

        let a = &self.align;
        if !(a.lowe_ratio > 0.0 && a.lowe_ratio <= 1.0) {
            return Err(invalid("align.lowe_ratio", format!("must lie in (0, 1], got {}", a.lowe_ratio)));
        }
        positive("align.inlier_px", a.inlier_px)?;
        probability("align.confidence", a.confidence)?;
        at_least_one("align.max_iters", a.max_iters)?;
        positive("align.epipolar_px", a.epipolar_px)?;
        at_least_one("align.min_inliers", a.min_inliers)?;

        self.change.validate().map_err(|e| match e {
            crate::change::ChangeError::BadParam { field, detail } => invalid(&format!("change.{field}"), detail),
            other => invalid("change", other.to_string()),
        })?;
        let s = &self.semantic;
        if !(s.min_feature_dist_m >= 0.0 && s.min_feature_dist_m.is_finite()) {
            return Err(invalid("semantic.min_feature_dist_m", format!("must be non-negative, got {}", s.min_feature_dist_m)));
        }

        at_least_one("aggregate.min_support", self.aggregate.min_support)?;
        let t = self.aggregate.vote_threshold;
        if !(t > 0.0 && t <= 1.0) {
            return Err(invalid("aggregate.vote_threshold", format!("must lie in (0, 1], got {t}")));
        }

        self.propagate.validate().map_err(|e| match e {
            crate::propagate::PropagateError::BadParam { field, detail } => {
                invalid(&format!("propagate.{field}"), detail)
            }
            other => invalid("propagate", other.to_string()),
        })?;

        let r = &self.registration;
        positive("registration.inlier_m", r.inlier_m)?;
        probability("registration.confidence", r.confidence)?;
        at_least_one("registration.max_iters", r.max_iters)?;
        if !(r.icp_tol_m >= 0.0 && r.icp_tol_m.is_finite()) {
            return Err(invalid("registration.icp_tol_m", format!("must be non-negative, got {}", r.icp_tol_m)));
        }
        Ok(())
    }

    pub fn ransac6(&self) -> Ransac6Params {
        let r = &self.registration;
        Ransac6Params { inlier_m: r.inlier_m, confidence: r.confidence, max_iters: r.max_iters, seed: self.seed }
    }

    pub fn icp(&self) -> IcpParams {
        IcpParams { max_iters: self.registration.icp_max_iters, tol: self.registration.icp_tol_m }
    }

    /// Applies `MAPDELTA_<SECTION>_<KEY>` overrides (top-level keys as
    /// `MAPDELTA_<KEY>`). Values are parsed as JSON, falling back to a
    /// string. Returns the names of the variables applied.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<Vec<String>, ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut doc = serde_json::to_value(&*self).expect("config serializes");
        let mut applied = Vec::new();
        for (k, v) in vars {
            let Some(name) = k.as_ref().strip_prefix(ENV_PREFIX) else { continue };
            if let Some(slot) = find_key(&mut doc, &name.to_ascii_lowercase()) {
                *slot = serde_json::from_str(v.as_ref()).unwrap_or_else(|_| Value::String(v.as_ref().to_string()));
                applied.push(k.as_ref().to_string());
            }
        }
        applied.sort();
        let cfg: PipelineConfig = serde_json::from_value(doc).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        *self = cfg;
        Ok(applied)
    }
}

/// Leaf whose `section_key` (or top-level `key`) equals `name`.
fn find_key<'a>(doc: &'a mut Value, name: &str) -> Option<&'a mut Value> {
    let obj = doc.as_object_mut()?;
    let path: Option<(String, String)> = obj.iter().find_map(|(section, v)| match v {
        Value::Object(inner) => inner
            .keys()
            .find(|key| format!("{section}_{key}") == name)
            .map(|key| (section.clone(), key.clone())),
        _ => (section == name).then(|| (section.clone(), String::new())),
    });
    let (section, key) = path?;
    let top = obj.get_mut(&section)?;
    if key.is_empty() {
        Some(top)
    } else {
        top.get_mut(&key)
    }
}
