//! Classifiers: the hashed-feature softmax model, its optimizer, and the
//! handle through which every pipeline stage asks for probabilities.

pub mod features;
pub mod linear;
pub mod optim;

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::multitask::MtlModel;
use crate::provider::ProviderClient;

pub use features::{featurize, FeatureVector};
pub use linear::{train_linear_model, LinearModel, LinearTrainer, TrainStats};
pub use optim::{adamw_step, lr_at, AdamState, Schedule, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    NativeLinear,
    NativeMtl,
    Remote,
}

/// A trained predictor. Native handles are immutable and can be shared
/// freely between threads.
#[derive(Debug, Clone)]
pub enum ClassifierHandle {
    NativeLinear {
        model: Arc<LinearModel>,
        config: TrainConfig,
    },
    NativeMtl {
        model: Arc<MtlModel>,
        config: TrainConfig,
    },
    Remote(Arc<ProviderClient>),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum SavedModel {
    NativeLinear { config: TrainConfig, model: LinearModel },
    NativeMtl { config: TrainConfig, model: MtlModel },
}

impl ClassifierHandle {
    pub fn linear(model: LinearModel, config: TrainConfig) -> Self {
        ClassifierHandle::NativeLinear {
            model: Arc::new(model),
            config,
        }
    }

    pub fn mtl(model: MtlModel, config: TrainConfig) -> Self {
        ClassifierHandle::NativeMtl {
            model: Arc::new(model),
            config,
        }
    }

    pub fn kind(&self) -> ClassifierKind {
        match self {
            ClassifierHandle::NativeLinear { .. } => ClassifierKind::NativeLinear,
            ClassifierHandle::NativeMtl { .. } => ClassifierKind::NativeMtl,
            ClassifierHandle::Remote(_) => ClassifierKind::Remote,
        }
    }

    pub fn as_linear(&self) -> Option<&LinearModel> {
        match self {
            ClassifierHandle::NativeLinear { model, .. } => Some(model),
            _ => None,
        }
    }

    /// `(p0, p1)` per text, in input order.
    pub fn predict_proba<S: AsRef<str>>(&self, texts: &[S]) -> Result<Vec<[f64; 2]>> {
        match self {
            ClassifierHandle::NativeLinear { model, .. } => {
                Ok(texts.iter().map(|t| model.predict_text(t.as_ref())).collect())
            }
            ClassifierHandle::NativeMtl { model, .. } => {
                Ok(texts.iter().map(|t| model.predict_text(t.as_ref())).collect())
            }
            ClassifierHandle::Remote(client) => client.classify(texts),
        }
    }

    /// Argmax labels; ties go to class 0.
    pub fn predict_labels<S: AsRef<str>>(&self, texts: &[S]) -> Result<Vec<u8>> {
        Ok(self
            .predict_proba(texts)?
            .into_iter()
            .map(|p| u8::from(p[1] > p[0]))
            .collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let saved = match self {
            ClassifierHandle::NativeLinear { model, config } => SavedModel::NativeLinear {
                config: config.clone(),
                model: (**model).clone(),
            },
            ClassifierHandle::NativeMtl { model, config } => SavedModel::NativeMtl {
                config: config.clone(),
                model: (**model).clone(),
            },
            ClassifierHandle::Remote(_) => {
                return Err(Error::Model("remote classifiers have no local parameters to save".into()))
            }
        };
        let body = serde_json::to_vec(&saved).map_err(|e| Error::Model(e.to_string()))?;
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let body = fs::read(path).map_err(|e| Error::io(path, e))?;
        let saved: SavedModel = serde_json::from_slice(&body)
            .map_err(|e| Error::Model(format!("{}: {e}", path.display())))?;
        Ok(match saved {
            SavedModel::NativeLinear { config, model } => {
                model.check()?;
                ClassifierHandle::linear(model, config)
            }
            SavedModel::NativeMtl { config, model } => {
                model.check()?;
                ClassifierHandle::mtl(model, config)
            }
        })
    }
}

/// Trains a fresh native linear classifier for `cfg.epochs` epochs.
pub fn train_linear(dataset: &Dataset, cfg: &TrainConfig) -> Result<ClassifierHandle> {
    let (model, _) = train_linear_model(dataset, cfg)?;
    Ok(ClassifierHandle::linear(model, cfg.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_roundtrip_is_exact() {
        let mut model = LinearModel::zeros(4);
        model.weights[3] = 0.1 + 0.2;
        model.weights[17] = -1e-300;
        model.bias = [std::f64::consts::PI, -0.0];
        let cfg = TrainConfig { dim_log2: 4, seed: 99, ..Default::default() };
        let handle = ClassifierHandle::linear(model.clone(), cfg.clone());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.model");
        handle.save(&path).unwrap();
        match ClassifierHandle::load(&path).unwrap() {
            ClassifierHandle::NativeLinear { model: m, config } => {
                assert_eq!(*m, model);
                assert_eq!(config, cfg);
            }
            other => panic!("wrong kind {:?}", other.kind()),
        }
    }

    #[test]
    fn corrupt_model_is_model_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.model");
        fs::write(&path, b"{\"kind\":\"native_linear\",\"oops\"").unwrap();
        assert!(matches!(ClassifierHandle::load(&path), Err(Error::Model(_))));
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut model = LinearModel::zeros(6);
        for (i, w) in model.weights.iter_mut().enumerate() {
            *w = ((i * 37 % 11) as f64 - 5.0) * 0.7;
        }
        let h = ClassifierHandle::linear(model, TrainConfig::default());
        let texts = ["a b c", "", "the strike caused delays", "x y z w v u"];
        for p in h.predict_proba(&texts).unwrap() {
            assert!((p[0] + p[1] - 1.0).abs() <= 1e-9);
        }
    }
}
