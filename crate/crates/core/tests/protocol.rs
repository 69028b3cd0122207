use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use pseudolabel::augment::{
    ner_fillmask_augment, random_fillmask_augment, seq2seq_augment, AugmentOptions, AugmentProvider, EntitySpan,
    MockProvider, DEFAULT_PIVOTS,
};
use pseudolabel::classifier::{ClassifierHandle, LinearModel, TrainConfig};
use pseudolabel::corpus::{generate_synthetic_corpus, Dataset, Example, Provenance, Source, SyntheticSpec};
use pseudolabel::provider::{
    wire, Endpoint, HttpResponse, LoopbackTransport, ProviderClient, Transport, TransportError,
};
use pseudolabel::selftrain::pseudo_label;
use pseudolabel::{Error, ErrorClass};
use serde::Deserialize;

#[derive(Deserialize)]
struct Case {
    name: String,
    path: String,
    status: u16,
    #[serde(default)]
    unserved: bool,
}

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/protocol")
}

fn cases() -> Vec<Case> {
    serde_json::from_slice(&std::fs::read(fixture_dir().join("cases.json")).unwrap()).unwrap()
}

fn fixture(name: &str, part: &str) -> Vec<u8> {
    std::fs::read(fixture_dir().join(format!("{name}.{part}.json"))).unwrap()
}

fn reference_server() -> LoopbackTransport {
    LoopbackTransport::new()
        .with_classifier(ClassifierHandle::linear(LinearModel::zeros(8), TrainConfig::default()))
        .with_provider(Arc::new(MockProvider::default()))
}

fn endpoint() -> Endpoint {
    Endpoint::new("http://fixture.invalid")
}

/// Replays fixture responses and records every request it sees.
fn recording(log: Arc<Mutex<Vec<(String, Vec<u8>)>>>) -> impl Transport {
    move |path: &str, body: &[u8]| {
        log.lock().unwrap().push((path.to_owned(), body.to_vec()));
        let name = cases()
            .into_iter()
            .find(|c| c.status == 200 && c.path == path && fixture(&c.name, "request") == body)
            .map(|c| c.name)
            .ok_or_else(|| TransportError(format!("no fixture for {path}")))?;
        Ok(HttpResponse {
            status: 200,
            body: fixture(&name, "response"),
        })
    }
}

#[test]
fn reference_server_matches_every_fixture() {
    let served = reference_server();
    let unserved = LoopbackTransport::new();
    for case in cases() {
        let server = if case.unserved { &unserved } else { &served };
        let response = server.post(&case.path, &fixture(&case.name, "request")).unwrap();
        assert_eq!(response.status, case.status, "{}", case.name);
        if case.status == 200 {
            assert_eq!(
                String::from_utf8(response.body).unwrap(),
                String::from_utf8(fixture(&case.name, "response")).unwrap(),
                "{}",
                case.name
            );
        } else {
            let body: wire::ErrorBody = serde_json::from_slice(&response.body).unwrap();
            assert!(!body.error.is_empty(), "{}", case.name);
        }
    }
}

#[test]
fn fixture_bodies_round_trip_through_the_wire_types() {
    fn check<T: serde::de::DeserializeOwned + serde::Serialize>(name: &str, part: &str) {
        let bytes = fixture(name, part);
        let value: T = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(serde_json::to_vec(&value).unwrap(), bytes, "{name}.{part}");
    }
    check::<wire::ClassifyRequest>("classify", "request");
    check::<wire::ClassifyResponse>("classify", "response");
    check::<wire::ClassifyRequest>("classify_empty", "request");
    check::<wire::ClassifyResponse>("classify_empty", "response");
    check::<wire::FillMaskRequest>("fill_mask", "request");
    check::<wire::FillMaskResponse>("fill_mask", "response");
    check::<wire::TranslateRequest>("translate", "request");
    check::<wire::TranslateResponse>("translate", "response");
    check::<wire::NerRequest>("ner", "request");
    check::<wire::NerResponse>("ner", "response");
    assert!(serde_json::from_slice::<wire::ClassifyRequest>(&fixture("classify_bad_field", "request")).is_err());
    assert!(
        serde_json::from_slice::<wire::FillMaskRequest>(&fixture("fill_mask_unknown_field", "request")).is_err()
    );
}

#[test]
fn client_sends_fixture_requests_byte_for_byte() {
    let log = Arc::new(Mutex::new(Vec::new()));
    let client = ProviderClient::with_transport(endpoint(), recording(log.clone())).unwrap();

    let probs = client
        .classify(&["Prices rose because demand surged.", "The river is calm."])
        .unwrap();
    assert_eq!(probs, vec![[0.5, 0.5], [0.5, 0.5]]);
    let candidates = client.fill_mask("Workers marched through Paris.", 0, 7, 3).unwrap();
    assert_eq!(
        serde_json::to_vec(&wire::FillMaskResponse { candidates }).unwrap(),
        fixture("fill_mask", "response")
    );
    let texts = client
        .translate(&["Workers marched through Paris.", "Prices rose because demand surged."], "en", "de")
        .unwrap();
    assert_eq!(
        serde_json::to_vec(&wire::TranslateResponse { texts }).unwrap(),
        fixture("translate", "response")
    );
    let entities = client.ner("Protests spread from Paris to Lyon.").unwrap();
    assert_eq!(
        serde_json::to_vec(&wire::NerResponse { entities }).unwrap(),
        fixture("ner", "response")
    );

    let sent: Vec<String> = log.lock().unwrap().iter().map(|(p, _)| p.clone()).collect();
    assert_eq!(sent, [wire::CLASSIFY, wire::FILL_MASK, wire::TRANSLATE, wire::NER]);
}

fn counting() -> (Arc<AtomicUsize>, impl Transport) {
    let calls = Arc::new(AtomicUsize::new(0));
    let c = calls.clone();
    (calls, move |_: &str, _: &[u8]| -> Result<HttpResponse, TransportError> {
        c.fetch_add(1, Ordering::SeqCst);
        Err(TransportError("should not be called".into()))
    })
}

#[test]
fn trivial_requests_never_reach_the_transport() {
    let (calls, transport) = counting();
    let client = ProviderClient::with_transport(endpoint(), transport).unwrap();
    assert!(client.classify::<&str>(&[]).unwrap().is_empty());
    assert!(client.translate::<&str>(&[], "en", "de").unwrap().is_empty());
    assert!(client.fill_mask("abc", 0, 1, 0).unwrap().is_empty());
    assert!(client.ner("").unwrap().is_empty());
    assert!(matches!(client.fill_mask("abc", 1, 9, 3), Err(Error::Argument(_))));
    assert!(matches!(client.fill_mask("abc", 2, 2, 3), Err(Error::Argument(_))));
    assert!(matches!(client.translate(&["x"], "en", "en"), Err(Error::Argument(_))));
    assert_eq!(calls.load(Ordering::SeqCst), 0);
}

fn answering(status: u16, body: &'static str) -> impl Transport {
    move |_: &str, _: &[u8]| {
        Ok(HttpResponse {
            status,
            body: body.as_bytes().to_vec(),
        })
    }
}

#[test]
fn server_errors_carry_status_and_are_not_retried() {
    let calls = Arc::new(AtomicUsize::new(0));
    let c = calls.clone();
    let transport = move |_: &str, _: &[u8]| {
        c.fetch_add(1, Ordering::SeqCst);
        Ok(HttpResponse {
            status: 500,
            body: br#"{"error":"CUDA out of memory"}"#.to_vec(),
        })
    };
    let client = ProviderClient::with_transport(endpoint(), transport).unwrap();
    match client.classify(&["x"]) {
        Err(e @ Error::Provider { status: Some(500), .. }) => {
            assert!(e.to_string().contains("CUDA out of memory"));
            assert_eq!(e.class(), ErrorClass::Provider);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(calls.load(Ordering::SeqCst), 1);

    let client = ProviderClient::with_transport(endpoint(), answering(404, "not json")).unwrap();
    assert!(matches!(client.ner("A B"), Err(Error::Provider { status: Some(404), .. })));
}

#[test]
fn transport_failures_are_retried_then_reported() {
    let calls = Arc::new(AtomicUsize::new(0));
    let c = calls.clone();
    let flaky = move |_: &str, _: &[u8]| {
        if c.fetch_add(1, Ordering::SeqCst) < 2 {
            Err(TransportError("connection reset".into()))
        } else {
            Ok(HttpResponse {
                status: 200,
                body: br#"{"probs":[[0.25,0.75]]}"#.to_vec(),
            })
        }
    };
    let client = ProviderClient::with_transport(endpoint(), flaky).unwrap();
    assert_eq!(client.classify(&["x"]).unwrap(), vec![[0.25, 0.75]]);
    assert_eq!(calls.load(Ordering::SeqCst), 3);

    let (calls, transport) = counting();
    let client = ProviderClient::with_transport(Endpoint { retry: 1, ..endpoint() }, transport).unwrap();
    assert!(matches!(client.classify(&["x"]), Err(Error::Provider { status: None, .. })));
    assert_eq!(calls.load(Ordering::SeqCst), 2);
}

#[test]
fn malformed_bodies_name_the_offending_field() {
    let client = ProviderClient::with_transport(endpoint(), answering(200, r#"{"probs":[[0.5,0.5],[0.5]]}"#)).unwrap();
    match client.classify(&["a", "b"]) {
        Err(Error::Protocol { field, .. }) => assert_eq!(field, "probs[1]"),
        other => panic!("unexpected {other:?}"),
    }
    let client = ProviderClient::with_transport(endpoint(), answering(200, r#"{"prob":[]}"#)).unwrap();
    assert!(matches!(client.classify(&["a"]), Err(Error::Protocol { field, .. }) if field == "probs"));
    let client = ProviderClient::with_transport(endpoint(), answering(200, "[]")).unwrap();
    assert!(matches!(client.classify(&["a"]), Err(Error::Protocol { .. })));
}

#[test]
fn response_shapes_are_validated() {
    let client = ProviderClient::with_transport(endpoint(), answering(200, r#"{"probs":[[0.5,0.5]]}"#)).unwrap();
    assert!(matches!(client.classify(&["a", "b"]), Err(Error::Protocol { .. })));

    let client = ProviderClient::with_transport(endpoint(), answering(200, r#"{"probs":[[0.5,0.6]]}"#)).unwrap();
    assert!(matches!(client.classify(&["a"]), Err(Error::Validation(_))));
    let client =
        ProviderClient::with_transport(endpoint(), answering(200, r#"{"probs":[[0.3,0.7000001]]}"#)).unwrap();
    assert!(client.classify(&["a"]).is_ok());

    let client = ProviderClient::with_transport(endpoint(), answering(200, r#"{"texts":["one"]}"#)).unwrap();
    assert!(matches!(client.translate(&["a", "b"], "en", "de"), Err(Error::Protocol { .. })));

    let unsorted = r#"{"candidates":[{"token":"a","score":0.1},{"token":"b","score":0.6}]}"#;
    let client = ProviderClient::with_transport(endpoint(), answering(200, unsorted)).unwrap();
    assert!(matches!(client.fill_mask("xyz", 0, 1, 3), Err(Error::Validation(_))));
    let too_many = r#"{"candidates":[{"token":"a","score":0.6},{"token":"b","score":0.1}]}"#;
    let client = ProviderClient::with_transport(endpoint(), answering(200, too_many)).unwrap();
    assert!(matches!(client.fill_mask("xyz", 0, 1, 1), Err(Error::Protocol { .. })));

    let overlapping = r#"{"entities":[{"start":0,"end":5,"kind":"ORG"},{"start":3,"end":8,"kind":"LOC"}]}"#;
    let client = ProviderClient::with_transport(endpoint(), answering(200, overlapping)).unwrap();
    assert!(matches!(client.ner("Acme Corp built it"), Err(Error::Validation(_))));
    let beyond = r#"{"entities":[{"start":0,"end":50,"kind":"ORG"}]}"#;
    let client = ProviderClient::with_transport(endpoint(), answering(200, beyond)).unwrap();
    assert!(matches!(client.ner("short"), Err(Error::Validation(_))));
}

#[test]
fn batches_are_merged_in_request_order() {
    let server = reference_server();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let s = seen.clone();
    let transport = move |path: &str, body: &[u8]| {
        let req: wire::TranslateRequest = serde_json::from_slice(body).unwrap();
        s.lock().unwrap().push(req.texts.len());
        server.post(path, body)
    };
    let ep = Endpoint {
        batch_size: 3,
        max_in_flight: 4,
        ..endpoint()
    };
    let client = ProviderClient::with_transport(ep, transport).unwrap();
    let texts: Vec<String> = (0..20).map(|i| format!("w{i} x{i}")).collect();
    let out = client.translate(&texts, "en", "de").unwrap();
    let expected = MockProvider::default().translate(&texts, "en", "de").unwrap();
    assert_eq!(out, expected);
    let mut sizes = seen.lock().unwrap().clone();
    sizes.sort_unstable();
    assert_eq!(sizes, [2, 3, 3, 3, 3, 3, 3]);
}

#[test]
fn invalid_endpoints_are_rejected() {
    assert!(ProviderClient::http(Endpoint::new("")).is_err());
    assert!(ProviderClient::http(Endpoint {
        batch_size: 0,
        ..Endpoint::new("http://x")
    })
    .is_err());
    let parsed: Endpoint = serde_json::from_str(r#"{"base_url":"http://h:1"}"#).unwrap();
    assert_eq!((parsed.timeout_ms, parsed.max_in_flight, parsed.retry), (30_000, 4, 2));
    assert!(serde_json::from_str::<Endpoint>(r#"{"base_url":"x","retries":3}"#).is_err());
}

fn dataset(texts: &[&str]) -> Dataset {
    let examples = texts
        .iter()
        .enumerate()
        .map(|(i, t)| Example::labeled(format!("d{i}"), *t, (i % 2) as u8, Source::Original))
        .collect();
    Dataset::from_examples(Provenance::new("fixture", 0), examples).unwrap()
}

#[test]
fn loopback_stages_match_the_native_mock() {
    let native: Arc<dyn AugmentProvider> = Arc::new(MockProvider::default());
    let remote: Arc<dyn AugmentProvider> = Arc::new(
        ProviderClient::with_transport(endpoint(), LoopbackTransport::new().with_provider(native.clone())).unwrap(),
    );
    let d = dataset(&[
        "Workers in Lagos marched after the Union called a strike.",
        "Prices rose because demand surged in Berlin.",
        "The river is calm today.",
    ]);
    let opts = AugmentOptions::default();
    assert_eq!(
        seq2seq_augment(&d, native.as_ref(), &DEFAULT_PIVOTS, opts).unwrap(),
        seq2seq_augment(&d, remote.as_ref(), &DEFAULT_PIVOTS, opts).unwrap()
    );
    assert_eq!(
        random_fillmask_augment(&d, native.as_ref(), 5, opts).unwrap(),
        random_fillmask_augment(&d, remote.as_ref(), 5, opts).unwrap()
    );
    assert_eq!(
        ner_fillmask_augment(&d, native.as_ref(), opts).unwrap(),
        ner_fillmask_augment(&d, remote.as_ref(), opts).unwrap()
    );
}

#[test]
fn loopback_teacher_matches_the_native_teacher() {
    let corpus = generate_synthetic_corpus(&SyntheticSpec {
        n_labeled: 100,
        n_unlabeled: 300,
        n_test: 0,
        ..Default::default()
    })
    .unwrap();
    let native = pseudolabel::classifier::train_linear(&corpus.labeled, &TrainConfig::default()).unwrap();
    let client = ProviderClient::with_transport(
        Endpoint {
            batch_size: 7,
            ..endpoint()
        },
        LoopbackTransport::new().with_classifier(native.clone()),
    )
    .unwrap();
    let remote = ClassifierHandle::Remote(Arc::new(client));
    let a = pseudo_label(&native, &corpus.unlabeled.examples, 0.8, 1).unwrap();
    let b = pseudo_label(&remote, &corpus.unlabeled.examples, 0.8, 3).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

/// One-connection-per-request HTTP/1.1 server in front of a loopback backend.
fn spawn_http(backend: LoopbackTransport, requests: usize) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming().take(requests) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let path = line.split_whitespace().nth(1).unwrap().to_owned();
            let mut length = 0;
            loop {
                let mut header = String::new();
                reader.read_line(&mut header).unwrap();
                if header.trim().is_empty() {
                    break;
                }
                if let Some((k, v)) = header.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        length = v.trim().parse().unwrap();
                    }
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            let response = backend.post(&path, &body).unwrap();
            write!(
                stream,
                "HTTP/1.1 {} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n",
                response.status,
                response.body.len()
            )
            .unwrap();
            stream.write_all(&response.body).unwrap();
        }
    });
    format!("http://{addr}")
}

#[test]
fn http_transport_speaks_the_protocol() {
    let url = spawn_http(LoopbackTransport::new().with_provider(Arc::new(MockProvider::default())), 2);
    let client = ProviderClient::http(Endpoint::new(url)).unwrap();
    assert_eq!(
        client.ner("Protests spread from Paris to Lyon.").unwrap(),
        vec![
            EntitySpan {
                start: 21,
                end: 26,
                kind: "ENT".into()
            },
            EntitySpan {
                start: 30,
                end: 34,
                kind: "ENT".into()
            },
        ]
    );
    match client.classify(&["x"]) {
        Err(Error::Provider { status: Some(501), message }) => assert!(message.contains("not configured")),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn unreachable_server_is_a_provider_error() {
    let addr = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let client = ProviderClient::http(Endpoint {
        retry: 1,
        timeout_ms: 2_000,
        ..Endpoint::new(format!("http://{addr}"))
    })
    .unwrap();
    match client.classify(&["x"]) {
        Err(e @ Error::Provider { status: None, .. }) => assert!(e.to_string().contains("2 attempts")),
        other => panic!("unexpected {other:?}"),
    }
}
