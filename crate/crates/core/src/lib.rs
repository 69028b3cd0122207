//! Teacher–student self-training for binary sentence classification.
//!
//! A teacher trained on a small labeled set labels a large unlabeled stream;
//! confident predictions become a class-balanced pseudo-labeled split that a
//! fresh student trains on before the original data. Around that loop sit
//! data augmentation through model providers, a multi-task variant with a
//! shared encoder, and a JSON wire protocol for remote models.
//!
//! ```
//! use pseudolabel::corpus::{generate_synthetic_corpus, SyntheticSpec};
//! use pseudolabel::classifier::{train_linear, TrainConfig};
//!
//! let corpus = generate_synthetic_corpus(&SyntheticSpec {
//!     n_labeled: 100,
//!     n_unlabeled: 0,
//!     n_test: 50,
//!     ..Default::default()
//! })?;
//! let model = train_linear(&corpus.labeled, &TrainConfig::default())?;
//! let p = model.predict_proba(&["The bridge closed because the river rose."])?;
//! assert!((p[0][0] + p[0][1] - 1.0).abs() < 1e-9);
//! # Ok::<(), pseudolabel::Error>(())
//! ```

pub mod augment;
pub mod classifier;
pub mod corpus;
mod error;
pub mod metrics;
pub mod multitask;
pub mod provider;
pub mod seed;
pub mod selftrain;

pub use error::{Error, ErrorClass, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    struct Readme;
    #[doc = include_str!("../../../book/src/pipeline.md")]
    struct Pipeline;
    #[doc = include_str!("../../../book/src/classifier.md")]
    struct Classifier;
    #[doc = include_str!("../../../book/src/metrics.md")]
    struct Metrics;
    #[doc = include_str!("../../../book/src/augmentation.md")]
    struct Augmentation;
    #[doc = include_str!("../../../book/src/multitask.md")]
    struct Multitask;
    #[doc = include_str!("../../../book/src/protocol.md")]
    struct Protocol;
}
