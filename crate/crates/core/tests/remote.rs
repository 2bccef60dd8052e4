mod common;

use std::sync::Arc;

use beda_core::belief::{
    BeliefEstimator, DialogueContext, EstimateRequest, Perspective, RemoteEstimator,
    RemoteEstimatorConfig, WorldSet,
};
use beda_core::games::{GameId, Method};
use beda_core::generation::{
    Backend, Generator, GeneratorConfig, Prompt, PromptMeta, PromptRole, RemoteGenerator,
};
use beda_core::harness::{EstimatorChoice, ExperimentConfig, Runner};
use beda_core::Error;
use common::http::{dead_endpoint, MockServer};
use serde_json::json;

fn world() -> WorldSet {
    WorldSet::from_texts(["The box is red.", "The key is under the mat."]).unwrap()
}

fn context() -> DialogueContext {
    let mut c = DialogueContext::default();
    c.push("Ann", "Is the box red?");
    c.push("Bob", "Yes, the box is red.");
    c
}

fn estimator(url: &str, retries: u32) -> RemoteEstimator {
    let mut c = RemoteEstimatorConfig::new(url);
    c.retries = retries;
    c.timeout_ms = 2_000;
    c.backoff_ms = 1;
    RemoteEstimator::new(c)
}

fn probabilities(body: &str) -> String {
    json!({ "probabilities": body.split(',').map(|p| p.parse::<f64>().unwrap()).collect::<Vec<_>>() })
        .to_string()
}

#[test]
fn estimator_wire_documents() {
    let server = MockServer::start(|_| Some((200, probabilities("0.9,0.1"))));
    let v = estimator(&server.url, 0)
        .estimate(&context(), &world(), Perspective::OpponentKnows)
        .unwrap();
    assert_eq!(v.values(), &[0.9, 0.1]);
    assert_eq!(v.perspective, Perspective::OpponentKnows);
    let req = server.last();
    assert!(req
        .header("content-type")
        .unwrap()
        .starts_with("application/json"));
    let doc = req.json();
    let keys: Vec<&str> = doc
        .as_object()
        .unwrap()
        .keys()
        .map(|k| k.as_str())
        .collect();
    assert_eq!(keys, ["context", "events", "perspective"]);
    assert_eq!(doc["perspective"], "opponent_knows");
    assert_eq!(
        doc["events"],
        json!(["The box is red.", "The key is under the mat."])
    );
    let parsed: EstimateRequest = serde_json::from_str(&req.body).unwrap();
    assert_eq!(parsed.context, context().render());
}

#[test]
fn estimator_protocol_errors() {
    for (status, body) in [
        (200, probabilities("0.5")),
        (200, probabilities("0.5,1.5")),
        (200, probabilities("-0.1,0.5")),
        (200, "not json".to_owned()),
        (200, json!({ "probs": [0.1, 0.2] }).to_string()),
        (500, probabilities("0.5,0.5")),
        (404, String::new()),
    ] {
        let reply = body.clone();
        let server = MockServer::start(move |_| Some((status, reply.clone())));
        let err = estimator(&server.url, 2)
            .estimate(&context(), &world(), Perspective::SelfTruth)
            .unwrap_err();
        assert!(
            matches!(err, Error::Protocol(_)),
            "{status} {body}: {err:?}"
        );
        assert!(err.is_infrastructure());
        assert_eq!(server.count(), 1, "protocol errors are not retried");
    }
}

#[test]
fn estimator_retries_then_fails() {
    let server = MockServer::start(|_| None);
    let err = estimator(&server.url, 2)
        .estimate(&context(), &world(), Perspective::SelfTruth)
        .unwrap_err();
    assert!(
        matches!(err, Error::Transport { attempts: 3, .. }),
        "{err:?}"
    );
    assert_eq!(server.count(), 3);
}

#[test]
fn estimator_recovers_after_dropped_attempt() {
    let calls = Arc::new(std::sync::atomic::AtomicUsize::new(0));
    let seen = calls.clone();
    let server = MockServer::start(move |_| {
        if seen.fetch_add(1, std::sync::atomic::Ordering::SeqCst) == 0 {
            None
        } else {
            Some((200, probabilities("1,0")))
        }
    });
    let v = estimator(&server.url, 1)
        .estimate(&context(), &world(), Perspective::SelfTruth)
        .unwrap();
    assert_eq!(v.values(), &[1.0, 0.0]);
    assert_eq!(server.count(), 2);
}

#[test]
fn estimator_unreachable() {
    let err = estimator(&dead_endpoint(), 0)
        .estimate(&context(), &world(), Perspective::SelfTruth)
        .unwrap_err();
    assert!(
        matches!(err, Error::Transport { attempts: 1, .. }),
        "{err:?}"
    );
}

#[test]
fn estimator_concurrent_callers() {
    let server = MockServer::start(|req| {
        let n = req.json()["events"].as_array().unwrap().len();
        Some((200, json!({ "probabilities": vec![0.25; n] }).to_string()))
    });
    let est = Arc::new(estimator(&server.url, 0));
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let est = est.clone();
            std::thread::spawn(move || {
                est.estimate(&context(), &world(), Perspective::SelfTruth)
                    .unwrap()
            })
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap().values(), &[0.25, 0.25]);
    }
    assert_eq!(server.count(), 8);
}

fn completion(text: &str) -> String {
    json!({ "choices": [{ "message": { "role": "assistant", "content": text } }] }).to_string()
}

fn generator_config(retries: u32) -> GeneratorConfig {
    GeneratorConfig {
        backend: Backend::Remote {
            endpoint: None,
            model: None,
        },
        temperature: 0.0,
        max_turn_tokens: 64,
        retries,
        timeout_ms: 2_000,
    }
}

fn prompt() -> Prompt {
    Prompt::new(
        "You are Ann.",
        vec![
            (PromptRole::Interlocutor, "Hello.".into()),
            (PromptRole::SelfRole, "Hi there.".into()),
            (PromptRole::Interlocutor, "Where is it?".into()),
        ],
        PromptMeta::default(),
    )
    .unwrap()
}

#[test]
fn generator_request_shape() {
    let server = MockServer::start(|_| Some((200, completion("  In the box.  "))));
    let gen = RemoteGenerator::new(
        generator_config(0),
        &server.url,
        "test-model",
        Some("sk-1".into()),
    )
    .unwrap();
    let u = gen.generate(&prompt()).unwrap();
    assert_eq!(u.text, "In the box.");
    assert_eq!(u.raw, "  In the box.  ");
    assert_eq!(u.token_count, 3);
    let req = server.last();
    assert_eq!(req.header("authorization"), Some("Bearer sk-1"));
    let doc = req.json();
    assert_eq!(doc["model"], "test-model");
    assert_eq!(doc["temperature"], 0.0);
    assert_eq!(doc["max_tokens"], 64);
    let roles: Vec<&str> = doc["messages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["role"].as_str().unwrap())
        .collect();
    assert_eq!(roles, ["system", "user", "assistant", "user"]);
    assert_eq!(doc["messages"][0]["content"], "You are Ann.");
}

#[test]
fn generator_without_key_sends_no_authorization() {
    let server = MockServer::start(|_| Some((200, completion("ok"))));
    let gen = RemoteGenerator::new(generator_config(0), &server.url, "m", None).unwrap();
    gen.generate(&prompt()).unwrap();
    assert_eq!(server.last().header("authorization"), None);
}

#[test]
fn generator_empty_completion_is_format_error() {
    let server = MockServer::start(|_| Some((200, completion("   "))));
    let gen = RemoteGenerator::new(generator_config(2), &server.url, "m", None).unwrap();
    assert!(matches!(gen.generate(&prompt()), Err(Error::Format(_))));
    assert_eq!(server.count(), 1);
}

#[test]
fn generator_retries_dropped_connections() {
    let server = MockServer::start(|_| None);
    let gen = RemoteGenerator::new(generator_config(2), &server.url, "m", None).unwrap();
    let err = gen.generate(&prompt()).unwrap_err();
    assert!(
        matches!(err, Error::Transport { attempts: 3, .. }),
        "{err:?}"
    );
    assert_eq!(server.count(), 3);
}

#[test]
fn generator_retries_server_errors() {
    let calls = Arc::new(std::sync::atomic::AtomicUsize::new(0));
    let seen = calls.clone();
    let server = MockServer::start(move |_| {
        Some(
            match seen.fetch_add(1, std::sync::atomic::Ordering::SeqCst) {
                0 => (503, "busy".into()),
                1 => (429, "slow down".into()),
                _ => (200, completion("done")),
            },
        )
    });
    let gen = RemoteGenerator::new(generator_config(2), &server.url, "m", None).unwrap();
    assert_eq!(gen.generate(&prompt()).unwrap().text, "done");
    assert_eq!(server.count(), 3);
}

#[test]
fn generator_client_error_is_protocol() {
    let server = MockServer::start(|_| Some((401, "denied".into())));
    let gen = RemoteGenerator::new(generator_config(2), &server.url, "m", None).unwrap();
    assert!(matches!(gen.generate(&prompt()), Err(Error::Protocol(_))));
    assert_eq!(server.count(), 1);
}

fn remote_config(endpoint: String, dir: &std::path::Path) -> ExperimentConfig {
    let mut c: ExperimentConfig = serde_json::from_value(json!({
        "game": "mf",
        "method": "BEDA",
        "n_episodes": 2,
        "repetitions": 1,
        "seed": 5,
        "output": dir.join("r.jsonl"),
    }))
    .unwrap();
    c.estimator = Some(EstimatorChoice::Remote {
        endpoint: Some(endpoint),
        retries: Some(0),
        timeout_ms: Some(2_000),
    });
    c
}

#[test]
fn runner_uses_remote_estimator() {
    let server = MockServer::start(|req| {
        let n = req.json()["events"].as_array().unwrap().len();
        Some((200, json!({ "probabilities": vec![1.0; n] }).to_string()))
    });
    let dir = tempfile::tempdir().unwrap();
    let out = Runner::new(remote_config(server.url.clone(), dir.path()))
        .unwrap()
        .run()
        .unwrap();
    assert_eq!(out.report.game, GameId::Mf);
    assert_eq!(out.report.counts.valid, 2);
    assert!(server.count() > 0);
    assert!(out.records.iter().all(|r| r.method == Method::Beda));
}

#[test]
fn runner_flags_backend_failures() {
    let dir = tempfile::tempdir().unwrap();
    let out = Runner::new(remote_config(dead_endpoint(), dir.path()))
        .unwrap()
        .run()
        .unwrap();
    assert_eq!(out.report.counts.infrastructure_failures, 2);
    assert!(out.report.is_empty());
    for r in &out.records {
        assert!(r.outcome.infrastructure_failure);
        assert!(r.outcome.error.as_deref().unwrap().contains("transport"));
    }
}
