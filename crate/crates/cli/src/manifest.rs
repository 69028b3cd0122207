//! Run manifests: parsing, default expansion and validation.

use std::path::{Path, PathBuf};

use pseudolabel::augment::DEFAULT_PIVOTS;
use pseudolabel::corpus::{SyntheticSpec, DEFAULT_MAX_CHARS, DEFAULT_MIN_CHARS};
use pseudolabel::multitask::{AuxSpec, DEFAULT_HIDDEN, DEFAULT_MTL_DIM_LOG2, FINETUNE_EPOCHS, PRETRAIN_EPOCHS};
use pseudolabel::provider::Endpoint;
use pseudolabel::selftrain::PipelineConfig;
use pseudolabel::seed;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const ENDPOINT_ENV: &str = "PSEUDOLABEL_ENDPOINT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Providers {
    Named(ProviderName),
    Remote { endpoint: Endpoint },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderName {
    Mock,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TeacherSource {
    #[default]
    Native,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    pub pivots: Vec<String>,
    pub seed: Option<u64>,
    pub skip_failures: bool,
    pub epochs: usize,
}

impl Default for AugmentSection {
    fn default() -> Self {
        AugmentSection {
            pivots: DEFAULT_PIVOTS.map(String::from).to_vec(),
            seed: None,
            skip_failures: false,
            epochs: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MtlSection {
    pub hidden: usize,
    pub dim_log2: u32,
    pub lr0: f64,
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub trials: usize,
    pub seed: Option<u64>,
    /// Generated auxiliary tasks, used unless the three paths below are set.
    pub aux: AuxSpec,
    /// CSV with `sentence1`, `sentence2`, `label` columns.
    pub entailment: Option<PathBuf>,
    /// One sentence per line.
    pub events: Option<PathBuf>,
    pub nonevents: Option<PathBuf>,
}

impl Default for MtlSection {
    fn default() -> Self {
        MtlSection {
            hidden: DEFAULT_HIDDEN,
            dim_log2: DEFAULT_MTL_DIM_LOG2,
            lr0: 0.01,
            pretrain_epochs: PRETRAIN_EPOCHS,
            finetune_epochs: FINETUNE_EPOCHS,
            trials: 5,
            seed: None,
            aux: AuxSpec::default(),
            entailment: None,
            events: None,
            nonevents: None,
        }
    }
}

/// The manifest as written by the operator. Every field is optional; the
/// resolved copy written next to the outputs has all of them filled in.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unlabeled_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_chars: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_chars: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub providers: Option<Providers>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher: Option<TeacherSource>,
    /// Partial [`PipelineConfig`]; missing keys take seed-derived defaults.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pipeline: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augment: Option<AugmentSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mtl: Option<MtlSection>,
}

/// A manifest with defaults expanded and seeds materialized.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub manifest: RunManifest,
    pub pipeline: PipelineConfig,
    pub out_dir: PathBuf,
}

impl Resolved {
    pub fn workers(&self) -> usize {
        self.manifest.workers.expect("resolved")
    }

    pub fn augment(&self) -> &AugmentSection {
        self.manifest.augment.as_ref().expect("resolved")
    }

    pub fn mtl(&self) -> &MtlSection {
        self.manifest.mtl.as_ref().expect("resolved")
    }

    pub fn text_column(&self) -> &str {
        self.manifest.text_column.as_deref().expect("resolved")
    }

    pub fn label_column(&self) -> &str {
        self.manifest.label_column.as_deref().expect("resolved")
    }
}

pub fn load(path: &Path) -> Result<RunManifest, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read manifest {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Config(format!("invalid manifest {}: {e}", path.display())))
}

/// Overwrites `base` with every key present in `patch`, recursing into
/// objects.
fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

/// Relative paths in a manifest are taken relative to the manifest file.
fn rebase(path: &mut Option<PathBuf>, root: &Path) {
    if let Some(p) = path.as_mut() {
        if p.is_relative() {
            *p = root.join(&*p);
        }
    }
}

pub fn resolve(
    mut m: RunManifest,
    root: &Path,
    seed_override: Option<u64>,
    out_override: Option<PathBuf>,
    env_endpoint: Option<String>,
) -> Result<Resolved, CliError> {
    let base_seed = seed_override.or(m.seed).unwrap_or(0);
    m.seed = Some(base_seed);

    for p in [&mut m.train, &mut m.dev, &mut m.unlabeled_dir, &mut m.out_dir] {
        rebase(p, root);
    }
    if let Some(out) = out_override {
        m.out_dir = Some(out);
    }
    let out_dir = m
        .out_dir
        .clone()
        .ok_or_else(|| CliError::Config("no output directory: set `out_dir` or pass --out-dir".into()))?;

    m.text_column.get_or_insert_with(|| "text".into());
    m.label_column.get_or_insert_with(|| "label".into());
    m.min_chars.get_or_insert(DEFAULT_MIN_CHARS);
    m.max_chars.get_or_insert(DEFAULT_MAX_CHARS);
    m.workers.get_or_insert(1);
    m.teacher.get_or_insert_with(TeacherSource::default);
    if m.providers.is_none() {
        if let Some(url) = env_endpoint.filter(|u| !u.trim().is_empty()) {
            m.providers = Some(Providers::Remote {
                endpoint: Endpoint::new(url),
            });
        }
    }

    let mut pipeline = serde_json::to_value(PipelineConfig::from_seed(base_seed)).expect("configs serialize");
    if let Some(patch) = &m.pipeline {
        if !patch.is_object() {
            return Err(CliError::Config("`pipeline` must be a JSON object".into()));
        }
        merge(&mut pipeline, patch);
    }
    let pipeline_cfg: PipelineConfig = serde_json::from_value(pipeline)
        .map_err(|e| CliError::Config(format!("invalid `pipeline` section: {e}")))?;
    pipeline_cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    m.pipeline = Some(serde_json::to_value(&pipeline_cfg).expect("configs serialize"));

    let augment = m.augment.get_or_insert_with(AugmentSection::default);
    augment.seed.get_or_insert(seed::derive_named(base_seed, "augment"));
    let mtl = m.mtl.get_or_insert_with(MtlSection::default);
    mtl.seed.get_or_insert(seed::derive_named(base_seed, "mtl"));
    for p in [&mut mtl.entailment, &mut mtl.events, &mut mtl.nonevents] {
        rebase(p, root);
    }

    if let Some(spec) = &m.synthetic {
        spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(Resolved {
        manifest: m,
        pipeline: pipeline_cfg,
        out_dir,
    })
}

/// Which inputs a subcommand needs.
#[derive(Debug, Clone, Copy)]
pub struct Needs {
    pub train: bool,
    pub dev: bool,
    pub unlabeled: bool,
}

pub fn check_inputs(r: &Resolved, needs: Needs) -> Result<(), CliError> {
    let m = &r.manifest;
    if m.synthetic.is_some() {
        if m.train.is_some() || m.dev.is_some() || m.unlabeled_dir.is_some() {
            return Err(CliError::Config(
                "`synthetic` cannot be combined with `train`, `dev` or `unlabeled_dir`".into(),
            ));
        }
        return Ok(());
    }
    let required = [
        (needs.train, "train", &m.train),
        (needs.dev, "dev", &m.dev),
        (needs.unlabeled, "unlabeled_dir", &m.unlabeled_dir),
    ];
    for (needed, key, path) in required {
        if !needed {
            continue;
        }
        match path {
            None => return Err(CliError::Config(format!("manifest is missing `{key}` (or `synthetic`)"))),
            Some(p) if !p.exists() => {
                return Err(CliError::Config(format!("`{key}` path {} does not exist", p.display())))
            }
            Some(_) => {}
        }
    }
    if let (Some(lo), Some(hi)) = (m.min_chars, m.max_chars) {
        if lo > hi {
            return Err(CliError::Config(format!("min_chars {lo} exceeds max_chars {hi}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(json: &str) -> RunManifest {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunManifest>(r#"{"seeds": 1}"#).is_err());
        assert!(serde_json::from_str::<RunManifest>(r#"{"mtl": {"hiden": 3}}"#).is_err());
        let m = parse(r#"{"out_dir": "o", "pipeline": {"threshhold": 0.9}}"#);
        assert!(matches!(resolve(m, Path::new("."), None, None, None), Err(CliError::Config(_))));
    }

    #[test]
    fn pipeline_patch_keeps_derived_seeds() {
        let m = parse(r#"{"out_dir": "o", "seed": 3, "pipeline": {"threshold": 0.95, "split": {"total": 40, "ratio": "1:3"}}}"#);
        let r = resolve(m, Path::new("/base"), None, None, None).unwrap();
        let defaults = PipelineConfig::from_seed(3);
        assert_eq!(r.pipeline.threshold, 0.95);
        assert_eq!(r.pipeline.split.counts(), (10, 30));
        assert_eq!(r.pipeline.split.seed, defaults.split.seed);
        assert_eq!(r.pipeline.teacher, defaults.teacher);
        assert_eq!(r.out_dir, Path::new("/base/o"));
    }

    #[test]
    fn resolved_manifest_reproduces_itself() {
        let m = parse(r#"{"out_dir": "/o", "synthetic": {"n_labeled": 10}}"#);
        let r = resolve(m, Path::new("."), Some(9), None, None).unwrap();
        let again = resolve(r.manifest.clone(), Path::new("."), None, None, None).unwrap();
        assert_eq!(again.manifest, r.manifest);
        assert_eq!(again.pipeline, r.pipeline);
        assert_eq!(r.manifest.seed, Some(9));
    }

    #[test]
    fn endpoint_comes_from_environment_when_unset() {
        let m = parse(r#"{"out_dir": "/o"}"#);
        let r = resolve(m, Path::new("."), None, None, Some("http://h:1".into())).unwrap();
        assert!(matches!(r.manifest.providers, Some(Providers::Remote { .. })));
        let m = parse(r#"{"out_dir": "/o", "providers": "mock"}"#);
        let r = resolve(m, Path::new("."), None, None, Some("http://h:1".into())).unwrap();
        assert_eq!(r.manifest.providers, Some(Providers::Named(ProviderName::Mock)));
    }
}
