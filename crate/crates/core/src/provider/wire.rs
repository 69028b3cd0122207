//! JSON bodies of the model-service protocol.
//!
//! ```text
//! POST /v1/classify   {"texts":[..]}                              -> {"probs":[[p0,p1],..]}
//! POST /v1/fill_mask  {"text":..,"start":..,"end":..,"top_k":..}  -> {"candidates":[{"token":..,"score":..}]}
//! POST /v1/translate  {"texts":[..],"src":..,"tgt":..}            -> {"texts":[..]}
//! POST /v1/ner        {"text":..}                                 -> {"entities":[{"start":..,"end":..,"kind":..}]}
//! non-2xx                                                         -> {"error":..}
//! ```
//!
//! Offsets are in Unicode scalar values, end exclusive. Field order in the
//! structs below is the serialized order.

use serde::{Deserialize, Serialize};

use crate::augment::{EntitySpan, MaskCandidate};

pub const CLASSIFY: &str = "/v1/classify";
pub const FILL_MASK: &str = "/v1/fill_mask";
pub const TRANSLATE: &str = "/v1/translate";
pub const NER: &str = "/v1/ner";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub probs: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FillMaskRequest {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillMaskResponse {
    pub candidates: Vec<MaskCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslateRequest {
    pub texts: Vec<String>,
    pub src: String,
    pub tgt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslateResponse {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NerRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NerResponse {
    pub entities: Vec<EntitySpan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
