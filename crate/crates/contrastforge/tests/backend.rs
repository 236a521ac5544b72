mod common;

use std::sync::Mutex;
use std::time::Duration;

use common::{completion, generation_backend, MockServer};
use contrastforge::backend::{parse_response, request_body, BackendClient, BackendConfig, GenerationRequest, Generator};
use contrastforge::cache::ResponseCache;
use contrastforge::pipeline::{run_pipeline, BackendChain, Chain};
use contrastforge::Error;
use contrastforge_core::data::ItemAttributeRecord;
use contrastforge_core::encode::StubEncoder;
use contrastforge_core::prompt::TemplateId;

fn client(url: &str) -> BackendClient {
    let mut config = BackendConfig::new(url);
    config.initial_backoff = Duration::from_millis(5);
    config.timeout = Duration::from_secs(10);
    BackendClient::new(config)
}

fn request(template: TemplateId) -> GenerationRequest {
    GenerationRequest {
        template_id: template,
        item_id: "i1".into(),
        text_input: "a red cotton blanket".into(),
        image_ref: Some("https://example.com/i1.jpg".into()),
        model: "m".into(),
        temperature: 0.0,
        seed: Some(0),
    }
}

#[test]
fn echo_round_trip() {
    let server = MockServer::start(|_, _| (200, completion("OK")));
    let out = client(&server.url).generate(&request(TemplateId::Mask), "say OK").unwrap();
    assert_eq!(out, "OK");
    assert_eq!(server.count(), 1);
    let body: serde_json::Value = serde_json::from_str(&server.requests.lock().unwrap()[0]).unwrap();
    assert_eq!(body["model"], "m");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["seed"], 0);
}

#[test]
fn retries_server_errors_then_succeeds() {
    let server = MockServer::start(|n, _| if n <= 2 { (500, "{}".into()) } else { (200, completion("fine")) });
    let out = client(&server.url).generate(&request(TemplateId::Mask), "p").unwrap();
    assert_eq!(out, "fine");
    assert_eq!(server.count(), 3);
}

#[test]
fn gives_up_after_max_attempts() {
    let server = MockServer::start(|_, _| (503, "{}".into()));
    let err = client(&server.url).generate(&request(TemplateId::Mask), "p").unwrap_err();
    assert!(matches!(err, Error::Backend { status: Some(503), .. }), "{err}");
    assert_eq!(server.count(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let server = MockServer::start(|_, _| (400, "{\"error\":\"bad\"}".into()));
    assert!(client(&server.url).generate(&request(TemplateId::Mask), "p").is_err());
    assert_eq!(server.count(), 1);
}

#[test]
fn malformed_response_fails_without_caching() {
    let server = MockServer::start(|_, _| (200, "{\"choices\": []".into()));
    let gen = client(&server.url);
    let cache = Mutex::new(ResponseCache::in_memory());
    let chain = Chain::Backend(BackendChain {
        generator: &gen,
        cache: &cache,
        model: "m".into(),
        temperature: 0.0,
        seed: Some(0),
        parallelism: 1,
    });
    let mut r = ItemAttributeRecord::new("i1");
    r.visual_description = Some("a red cotton blanket".into());
    let err = run_pipeline(&[r], &chain, &StubEncoder::new(8).unwrap()).unwrap_err();
    assert!(matches!(err, Error::PipelineFailed { failed: 1, total: 1, .. }), "{err}");
    assert_eq!(server.count(), 1);
    assert!(cache.lock().unwrap().is_empty());
}

#[test]
fn describe_requests_carry_the_image() {
    let body = request_body(&request(TemplateId::Describe), "describe it").unwrap();
    let parts = body["messages"][0]["content"].as_array().unwrap();
    assert_eq!(parts[0]["text"], "describe it");
    assert_eq!(parts[1]["image_url"]["url"], "https://example.com/i1.jpg");

    let mut no_image = request(TemplateId::Describe);
    no_image.image_ref = None;
    assert!(no_image.validate().is_err());
}

#[test]
fn local_images_are_inlined() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.png");
    std::fs::write(&path, [1u8, 2, 3]).unwrap();
    let mut req = request(TemplateId::Describe);
    req.image_ref = Some(path.to_string_lossy().into_owned());
    let body = request_body(&req, "d").unwrap();
    assert_eq!(body["messages"][0]["content"][1]["image_url"]["url"], "data:image/png;base64,AQID");
}

#[test]
fn response_parsing() {
    assert_eq!(parse_response(&completion("  hi  ")).unwrap().trim(), "hi");
    let parts = r#"{"choices":[{"message":{"content":[{"type":"text","text":"a"},{"type":"text","text":"b"}]}}]}"#;
    assert_eq!(parse_response(parts).unwrap(), "ab");
    assert!(parse_response("not json").is_err());
    assert!(parse_response("{\"choices\":[{\"message\":{}}]}").is_err());
}

#[test]
fn full_chain_against_mock() {
    let server = MockServer::start(generation_backend);
    let gen = client(&server.url);
    let cache = Mutex::new(ResponseCache::in_memory());
    let chain = Chain::Backend(BackendChain {
        generator: &gen,
        cache: &cache,
        model: "m".into(),
        temperature: 0.0,
        seed: Some(0),
        parallelism: 2,
    });
    let mut r = ItemAttributeRecord::new("i1");
    r.image_ref = Some("https://example.com/i1.jpg".into());
    let out = run_pipeline(&[r], &chain, &StubEncoder::new(8).unwrap()).unwrap();
    let r = &out.records[0];
    assert_eq!(r.visual_description.as_deref(), Some("A red cotton blanket"));
    assert_eq!(r.masked_description.as_deref(), Some("A [MASK] cotton blanket"));
    assert_eq!(r.negative_description.as_deref(), Some("A blue cotton blanket"));
    assert_eq!(out.stats.backend_calls, 3);
    assert_eq!(server.count(), 3);
}
