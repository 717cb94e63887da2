use std::net::SocketAddr;
use std::sync::Arc;

use retrogen::answers::{BanList, ReferenceDoc};
use retrogen::model::GenerationConfig;
use retrogen::pipeline::{bbart_generate, edgar_generate, EdgarInputs, ModelRoles};
use retrogen::protocol::{
    serve, Backend, BackendError, ExtractRequest, HttpBackend, InferRequest, LogitsRequest,
    MockBackend, MockConfig, ScoreRequest, ServerHandle,
};

fn start(config: MockConfig) -> (ServerHandle, HttpBackend, MockBackend) {
    let mock = MockBackend::new(config.clone());
    let addr: SocketAddr = "127.0.0.1:0".parse().unwrap();
    let server = serve(Arc::new(MockBackend::new(config)), addr).unwrap();
    let client = HttpBackend::new(&server.url()).unwrap();
    (server, client, mock)
}

fn seeded(seed: u64) -> MockConfig {
    MockConfig { seed, ..MockConfig::default() }
}

#[test]
fn every_endpoint_matches_in_process() {
    let (_server, http, mock) = start(seeded(3));
    assert_eq!(http.models().unwrap(), mock.models().unwrap());

    let text = "Who needs to row the boat?";
    let tokens = mock.tokenize("mock-qa", text).unwrap();
    assert_eq!(http.tokenize("mock-qa", text).unwrap(), tokens);
    assert_eq!(http.detokenize("mock-qa", &tokens).unwrap(), text);

    for req in [
        LogitsRequest { model: "mock-qa".into(), tokens: tokens.clone(), context_tokens: None, include_tokens: None },
        LogitsRequest { model: "mock-bart".into(), tokens: vec![], context_tokens: Some(tokens.clone()), include_tokens: None },
    ] {
        // floats survive the JSON round trip bit for bit
        assert_eq!(http.next_logits(&req).unwrap(), mock.next_logits(&req).unwrap());
    }
    let score = ScoreRequest { model: "mock-ranker".into(), tokens: tokens.clone(), context_tokens: None };
    assert_eq!(http.score(&score).unwrap(), mock.score(&score).unwrap());

    let infer = InferRequest {
        model: "mock-comet".into(),
        text: "Mara rowed out to the lighthouse.".into(),
        relations: vec!["xIntent".into(), "xNeed".into()],
        count: 5,
    };
    assert_eq!(http.infer_clauses(&infer).unwrap(), mock.infer_clauses(&infer).unwrap());
    let extract = ExtractRequest {
        model: "mock-extract".into(),
        context: "Mara rowed out to the lighthouse.".into(),
        question: "Who needs to row?".into(),
    };
    assert_eq!(http.extract_span(&extract).unwrap(), mock.extract_span(&extract).unwrap());
}

#[test]
fn protocol_errors_keep_status() {
    let (_server, http, _) = start(seeded(0));
    match http.tokenize("no-such-model", "x") {
        Err(BackendError::Protocol { status: 404, message }) => assert!(message.contains("no-such-model")),
        other => panic!("{other:?}"),
    }
    let bad = LogitsRequest { model: "mock-qa".into(), tokens: vec![1_000_000], context_tokens: None, include_tokens: None };
    assert!(matches!(http.next_logits(&bad), Err(BackendError::Protocol { status: 400, .. })));
    let relation = InferRequest { model: "mock-comet".into(), text: "x".into(), relations: vec!["oReact".into()], count: 1 };
    assert!(matches!(http.infer_clauses(&relation), Err(BackendError::Protocol { status: 400, .. })));
}

#[test]
fn malformed_bodies_are_client_errors() {
    let (server, _, _) = start(seeded(0));
    let raw = reqwest::blocking::Client::new();
    let resp = raw
        .post(format!("{}/v1/logits", server.url()))
        .header("content-type", "application/json")
        .body("{not json")
        .send()
        .unwrap();
    assert!(resp.status().is_client_error(), "{}", resp.status());
    let resp = raw.get(format!("{}/v1/nowhere", server.url())).send().unwrap();
    assert_eq!(resp.status().as_u16(), 404);
}

#[test]
fn closed_port_is_transport_error() {
    let (server, http, _) = start(seeded(0));
    server.shutdown();
    assert!(matches!(http.models(), Err(BackendError::Transport(_))));
}

#[test]
fn include_tokens_round_trip() {
    let (_server, http, mock) = start(MockConfig { vocab_size: 16, ..seeded(9) });
    let req = LogitsRequest { model: "mock-qa".into(), tokens: vec![1, 2], context_tokens: None, include_tokens: Some(vec![3, 15]) };
    let got = http.next_logits(&req).unwrap();
    assert_eq!(got, mock.next_logits(&req).unwrap());
    assert!(got.get(3).is_some() && got.get(15).is_some());
    let out_of_range = LogitsRequest { include_tokens: Some(vec![16]), ..req };
    assert!(matches!(http.next_logits(&out_of_range), Err(BackendError::Protocol { status: 400, .. })));
}

#[test]
fn generators_agree_over_http() {
    let (_server, http, mock) = start(seeded(11));
    let config = GenerationConfig { beam_width: 3, max_length: 12, question_budget: 2, iterations: 2, seed: 11, ..Default::default() };
    let models = ModelRoles::default();
    let ending = "Tomas closed the gate behind the goats. The rain finally stopped.";
    let corpus = vec![
        ReferenceDoc::new("a.txt", "Tomas wanted to keep the goats dry before the storm came over the hill.", "a.txt").unwrap(),
        ReferenceDoc::new("b.txt", "The farm gate had a broken latch that needed a new nail.", "b.txt").unwrap(),
    ];
    let banned = BanList::builtin();
    let local = edgar_generate(&EdgarInputs { backend: &mock, models: &models, corpus: &corpus, banned: &banned, config: &config }, ending).unwrap();
    let remote = edgar_generate(&EdgarInputs { backend: &http, models: &models, corpus: &corpus, banned: &banned, config: &config }, ending).unwrap();
    assert_eq!(local, remote);
    assert_eq!(
        bbart_generate(&mock, &models, ending, &config).unwrap(),
        bbart_generate(&http, &models, ending, &config).unwrap()
    );
}
