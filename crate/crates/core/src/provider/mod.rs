//! Client for the model-service protocol.
//!
//! Any stage that needs a model (teacher inference, translation, fill-mask,
//! NER) can be served by an external process speaking JSON over HTTP; see
//! [`wire`] for the bodies. The transport is pluggable so tests can swap the
//! HTTP layer for the in-process [`LoopbackTransport`].

mod loopback;
pub mod wire;

use std::sync::Mutex;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::augment::{validate_spans, AugmentProvider, EntitySpan, MaskCandidate};
use crate::corpus::char_len;
use crate::error::{Error, Result};

pub use loopback::LoopbackTransport;

pub const DEFAULT_BATCH_SIZE: usize = 32;
const PROB_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Endpoint {
    pub base_url: String,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
    /// Extra attempts after a transport failure.
    pub retry: usize,
    pub batch_size: usize,
}

impl Default for Endpoint {
    fn default() -> Self {
        Endpoint {
            base_url: String::new(),
            timeout_ms: 30_000,
            max_in_flight: 4,
            retry: 2,
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }
}

impl Endpoint {
    pub fn new(base_url: impl Into<String>) -> Self {
        Endpoint {
            base_url: base_url.into(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_url.trim().is_empty() {
            return Err(Error::Argument("endpoint base_url is empty".into()));
        }
        if self.timeout_ms == 0 || self.max_in_flight == 0 || self.batch_size == 0 {
            return Err(Error::Argument(
                "endpoint timeout_ms, max_in_flight and batch_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

/// Connection-level failure; the only kind of failure that is retried.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportError(pub String);

pub trait Transport: Send + Sync {
    fn post(&self, path: &str, body: &[u8]) -> std::result::Result<HttpResponse, TransportError>;
}

impl<F> Transport for F
where
    F: Fn(&str, &[u8]) -> std::result::Result<HttpResponse, TransportError> + Send + Sync,
{
    fn post(&self, path: &str, body: &[u8]) -> std::result::Result<HttpResponse, TransportError> {
        self(path, body)
    }
}

/// Blocking HTTP transport.
pub struct HttpTransport {
    base_url: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(endpoint: &Endpoint) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(endpoint.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport {
            base_url: endpoint.base_url.trim_end_matches('/').to_owned(),
            agent,
        }
    }
}

impl Transport for HttpTransport {
    fn post(&self, path: &str, body: &[u8]) -> std::result::Result<HttpResponse, TransportError> {
        let url = format!("{}{path}", self.base_url);
        let mut response = self
            .agent
            .post(&url)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| TransportError(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_vec()
            .map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}

pub struct ProviderClient {
    endpoint: Endpoint,
    transport: Box<dyn Transport>,
}

impl std::fmt::Debug for ProviderClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProviderClient")
            .field("endpoint", &self.endpoint)
            .finish_non_exhaustive()
    }
}

impl ProviderClient {
    pub fn http(endpoint: Endpoint) -> Result<Self> {
        endpoint.validate()?;
        let transport = HttpTransport::new(&endpoint);
        Ok(ProviderClient {
            endpoint,
            transport: Box::new(transport),
        })
    }

    pub fn with_transport(endpoint: Endpoint, transport: impl Transport + 'static) -> Result<Self> {
        endpoint.validate()?;
        Ok(ProviderClient {
            endpoint,
            transport: Box::new(transport),
        })
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    fn call<Req: Serialize>(&self, path: &str, request: &Req) -> Result<Vec<u8>> {
        let body = serde_json::to_vec(request).map_err(|e| Error::provider(e.to_string()))?;
        let mut attempt = 0;
        let response = loop {
            match self.transport.post(path, &body) {
                Ok(r) => break r,
                Err(TransportError(msg)) if attempt >= self.endpoint.retry => {
                    return Err(Error::Provider {
                        status: None,
                        message: format!("{path}: {msg} (after {} attempts)", attempt + 1),
                    })
                }
                Err(_) => attempt += 1,
            }
        };
        if !(200..300).contains(&response.status) {
            let detail = serde_json::from_slice::<wire::ErrorBody>(&response.body)
                .map(|b| b.error)
                .unwrap_or_else(|_| String::from_utf8_lossy(&response.body).into_owned());
            return Err(Error::Provider {
                status: Some(response.status),
                message: format!("{path}: {detail}"),
            });
        }
        Ok(response.body)
    }

    /// Runs `f` over `items` in chunks of the endpoint's batch size with at
    /// most `max_in_flight` chunks outstanding; output keeps input order.
    fn batched<T, U, F>(&self, items: &[T], f: F) -> Result<Vec<U>>
    where
        T: Sync,
        U: Send,
        F: Fn(&[T]) -> Result<Vec<U>> + Sync,
    {
        let chunks: Vec<&[T]> = items.chunks(self.endpoint.batch_size).collect();
        let workers = self.endpoint.max_in_flight.min(chunks.len());
        if workers <= 1 {
            let mut out = Vec::with_capacity(items.len());
            for chunk in chunks {
                out.extend(f(chunk)?);
            }
            return Ok(out);
        }
        let slots: Vec<Mutex<Option<Result<Vec<U>>>>> =
            chunks.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for w in 0..workers {
                let (chunks, slots, f) = (&chunks, &slots, &f);
                scope.spawn(move || {
                    for i in (w..chunks.len()).step_by(workers) {
                        let result = f(chunks[i]);
                        let failed = result.is_err();
                        *slots[i].lock().unwrap() = Some(result);
                        if failed {
                            break;
                        }
                    }
                });
            }
        });
        let mut out = Vec::with_capacity(items.len());
        for slot in slots {
            match slot.into_inner().unwrap() {
                Some(result) => out.extend(result?),
                None => {
                    return Err(Error::provider("batch abandoned after an earlier failure"))
                }
            }
        }
        Ok(out)
    }

    /// Remote teacher inference. Pairs are checked to sum to one within 1e-6.
    pub fn classify<S: AsRef<str>>(&self, texts: &[S]) -> Result<Vec<[f64; 2]>> {
        let texts: Vec<String> = texts.iter().map(|t| t.as_ref().to_owned()).collect();
        self.batched(&texts, |chunk| {
            let body = self.call(wire::CLASSIFY, &wire::ClassifyRequest { texts: chunk.to_vec() })?;
            let probs: Vec<[f64; 2]> = parse_list(&body, "probs")?;
            if probs.len() != chunk.len() {
                return Err(Error::protocol(
                    "probs",
                    format!("{} pairs for {} texts", probs.len(), chunk.len()),
                ));
            }
            for (i, p) in probs.iter().enumerate() {
                let ok = p.iter().all(|x| x.is_finite() && *x >= 0.0)
                    && (p[0] + p[1] - 1.0).abs() <= PROB_SUM_TOLERANCE;
                if !ok {
                    return Err(Error::Validation(format!(
                        "probs[{i}] = [{}, {}] is not a probability pair",
                        p[0], p[1]
                    )));
                }
            }
            Ok(probs)
        })
    }

    /// Candidates for the character span `start..end` of `text`.
    pub fn fill_mask(&self, text: &str, start: usize, end: usize, top_k: usize) -> Result<Vec<MaskCandidate>> {
        if start >= end || end > char_len(text) {
            return Err(Error::Argument(format!(
                "span {start}..{end} outside text of {} characters",
                char_len(text)
            )));
        }
        if top_k == 0 {
            return Ok(Vec::new());
        }
        let request = wire::FillMaskRequest {
            text: text.to_owned(),
            start,
            end,
            top_k,
        };
        let body = self.call(wire::FILL_MASK, &request)?;
        let candidates: Vec<MaskCandidate> = parse_list(&body, "candidates")?;
        if candidates.len() > top_k {
            return Err(Error::protocol(
                "candidates",
                format!("{} candidates for top_k = {top_k}", candidates.len()),
            ));
        }
        if candidates.iter().any(|c| !(0.0..=1.0).contains(&c.score)) {
            return Err(Error::Validation("candidate score outside [0, 1]".into()));
        }
        if candidates.windows(2).any(|w| w[0].score < w[1].score) {
            return Err(Error::Validation("candidates not sorted by descending score".into()));
        }
        Ok(candidates)
    }

    pub fn translate<S: AsRef<str>>(&self, texts: &[S], src: &str, tgt: &str) -> Result<Vec<String>> {
        if src == tgt {
            return Err(Error::Argument(format!("source and target language are both `{src}`")));
        }
        let texts: Vec<String> = texts.iter().map(|t| t.as_ref().to_owned()).collect();
        self.batched(&texts, |chunk| {
            let request = wire::TranslateRequest {
                texts: chunk.to_vec(),
                src: src.to_owned(),
                tgt: tgt.to_owned(),
            };
            let body = self.call(wire::TRANSLATE, &request)?;
            let out: Vec<String> = parse_list(&body, "texts")?;
            if out.len() != chunk.len() {
                return Err(Error::protocol(
                    "texts",
                    format!("{} translations for {} texts", out.len(), chunk.len()),
                ));
            }
            Ok(out)
        })
    }

    pub fn ner(&self, text: &str) -> Result<Vec<EntitySpan>> {
        if text.is_empty() {
            return Ok(Vec::new());
        }
        let body = self.call(wire::NER, &wire::NerRequest { text: text.to_owned() })?;
        let entities: Vec<EntitySpan> = parse_list(&body, "entities")?;
        validate_spans(&entities, char_len(text))?;
        Ok(entities)
    }
}

impl AugmentProvider for ProviderClient {
    fn translate(&self, texts: &[String], src: &str, tgt: &str) -> Result<Vec<String>> {
        ProviderClient::translate(self, texts, src, tgt)
    }

    fn fill_mask(&self, text: &str, span: (usize, usize), top_k: usize) -> Result<Vec<MaskCandidate>> {
        ProviderClient::fill_mask(self, text, span.0, span.1, top_k)
    }

    fn ner(&self, text: &str) -> Result<Vec<EntitySpan>> {
        ProviderClient::ner(self, text)
    }
}

/// Extracts the array `field` of a JSON object body, naming the offending
/// element on failure.
fn parse_list<T: DeserializeOwned>(body: &[u8], field: &str) -> Result<Vec<T>> {
    let value: serde_json::Value =
        serde_json::from_slice(body).map_err(|e| Error::protocol("<body>", e.to_string()))?;
    let items = value
        .as_object()
        .ok_or_else(|| Error::protocol("<body>", "not a JSON object"))?
        .get(field)
        .ok_or_else(|| Error::protocol(field, "missing"))?
        .as_array()
        .ok_or_else(|| Error::protocol(field, "not an array"))?;
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            T::deserialize(item).map_err(|e| Error::protocol(format!("{field}[{i}]"), e.to_string()))
        })
        .collect()
}
