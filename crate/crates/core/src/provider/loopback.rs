use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::wire;
use super::{HttpResponse, Transport, TransportError};
use crate::augment::AugmentProvider;
use crate::classifier::ClassifierHandle;

/// In-process fake of a model service.
///
/// Requests are decoded from and responses encoded to the exact wire bodies,
/// so a client talking to the loopback exercises the same serialization as
/// one talking to a real server. Endpoints without a backing implementation
/// answer 501, like an unconfigured server would.
#[derive(Clone, Default)]
pub struct LoopbackTransport {
    classifier: Option<ClassifierHandle>,
    provider: Option<Arc<dyn AugmentProvider>>,
}

impl LoopbackTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_classifier(mut self, classifier: ClassifierHandle) -> Self {
        self.classifier = Some(classifier);
        self
    }

    pub fn with_provider(mut self, provider: Arc<dyn AugmentProvider>) -> Self {
        self.provider = Some(provider);
        self
    }

    fn dispatch(&self, path: &str, body: &[u8]) -> HttpResponse {
        match path {
            wire::CLASSIFY => self.serve(body, |req: wire::ClassifyRequest| {
                let classifier = self.classifier.as_ref().ok_or(NotServed)?;
                let probs = classifier.predict_proba(&req.texts)?;
                Ok(wire::ClassifyResponse { probs })
            }),
            wire::FILL_MASK => self.serve(body, |req: wire::FillMaskRequest| {
                let provider = self.provider.as_ref().ok_or(NotServed)?;
                let mut candidates = provider.fill_mask(&req.text, (req.start, req.end), req.top_k)?;
                candidates.truncate(req.top_k);
                Ok(wire::FillMaskResponse { candidates })
            }),
            wire::TRANSLATE => self.serve(body, |req: wire::TranslateRequest| {
                let provider = self.provider.as_ref().ok_or(NotServed)?;
                let texts = provider.translate(&req.texts, &req.src, &req.tgt)?;
                Ok(wire::TranslateResponse { texts })
            }),
            wire::NER => self.serve(body, |req: wire::NerRequest| {
                let provider = self.provider.as_ref().ok_or(NotServed)?;
                let entities = provider.ner(&req.text)?;
                Ok(wire::NerResponse { entities })
            }),
            other => error_response(404, &format!("no route {other}")),
        }
    }

    fn serve<Req, Resp, F>(&self, body: &[u8], handler: F) -> HttpResponse
    where
        Req: DeserializeOwned,
        Resp: Serialize,
        F: FnOnce(Req) -> Result<Resp, Failure>,
    {
        let request: Req = match serde_json::from_slice(body) {
            Ok(r) => r,
            Err(e) => return error_response(400, &e.to_string()),
        };
        match handler(request) {
            Ok(resp) => HttpResponse {
                status: 200,
                body: serde_json::to_vec(&resp).expect("response bodies always serialize"),
            },
            Err(Failure::NotServed) => error_response(501, "endpoint not configured"),
            Err(Failure::Backend(e)) => error_response(500, &e.to_string()),
        }
    }
}

struct NotServed;

enum Failure {
    NotServed,
    Backend(crate::error::Error),
}

impl From<NotServed> for Failure {
    fn from(_: NotServed) -> Self {
        Failure::NotServed
    }
}

impl From<crate::error::Error> for Failure {
    fn from(e: crate::error::Error) -> Self {
        Failure::Backend(e)
    }
}

fn error_response(status: u16, message: &str) -> HttpResponse {
    HttpResponse {
        status,
        body: serde_json::to_vec(&wire::ErrorBody {
            error: message.to_owned(),
        })
        .expect("error bodies always serialize"),
    }
}

impl Transport for LoopbackTransport {
    fn post(&self, path: &str, body: &[u8]) -> Result<HttpResponse, TransportError> {
        Ok(self.dispatch(path, body))
    }
}
