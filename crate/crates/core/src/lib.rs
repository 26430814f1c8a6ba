//! Embedding-based zero-shot classification of software requirements.
//!
//! Requirement texts and label strings are embedded by a pluggable backend,
//! labels are ranked by cosine similarity to the requirement, and the
//! top-ranked label (or the top-k labels) is taken as the prediction. The
//! crate also carries the datasets, label configurations, evaluation metrics
//! and the annotation-agreement statistics used to curate labels.
//!
//! Module map:
//!
//! * [`embedding`]: lexicon loading, tokenization, static and remote
//!   embedders, the embedding cache.
//! * [`labelspace`]: class ids, label configurations, builtin configurations.
//! * [`classifier`]: cosine similarity, ranking, argmax and top-k prediction.
//! * [`corpus`]: PROMISE NFR and SecReq loaders, task construction.
//! * [`metrics`]: confusion tallies, precision/recall/F1, report rendering.
//! * [`agreement`]: agreement breakdown, majority voting, Fleiss' kappa,
//!   Krippendorff's alpha.
//! * [`labelgen`]: nearest-term suggestion for label enrichment.
//! * [`experiment`]: the end-to-end experiment runner and run comparison.
//! * [`api`]: JSON request/response types shared by the service and client.

pub mod agreement;
pub mod api;
pub mod classifier;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod experiment;
pub mod labelgen;
pub mod labelspace;
pub mod metrics;

pub use error::ErrorKind;
