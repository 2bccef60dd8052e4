//! Environment-variable resolution. Kept in its own binary with a single
//! test so no other test observes the mutated environment.

mod common;

use beda_core::belief::{RemoteEstimatorConfig, EST_ENDPOINT_VAR};
use beda_core::generation::{
    Backend, Generator, GeneratorConfig, Prompt, PromptMeta, RemoteGenerator, GEN_API_KEY_VAR,
    GEN_ENDPOINT_VAR, GEN_MODEL_VAR,
};
use beda_core::Error;
use common::http::MockServer;

fn remote(endpoint: Option<&str>, model: Option<&str>) -> GeneratorConfig {
    GeneratorConfig {
        backend: Backend::Remote {
            endpoint: endpoint.map(str::to_owned),
            model: model.map(str::to_owned),
        },
        retries: 0,
        timeout_ms: 2_000,
        ..GeneratorConfig::default()
    }
}

#[test]
fn endpoints_and_credentials_from_environment() {
    for var in [
        GEN_ENDPOINT_VAR,
        GEN_API_KEY_VAR,
        GEN_MODEL_VAR,
        EST_ENDPOINT_VAR,
    ] {
        std::env::remove_var(var);
    }
    assert!(matches!(
        RemoteEstimatorConfig::from_env(),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        RemoteGenerator::from_config(remote(None, Some("m"))),
        Err(Error::Config(m)) if m.contains(GEN_ENDPOINT_VAR)
    ));
    assert!(matches!(
        RemoteGenerator::from_config(remote(Some("http://x"), None)),
        Err(Error::Config(m)) if m.contains(GEN_MODEL_VAR)
    ));
    assert!(matches!(
        RemoteGenerator::from_config(GeneratorConfig::default()),
        Err(Error::Config(_))
    ));

    std::env::set_var(EST_ENDPOINT_VAR, "http://127.0.0.1:9/estimate");
    assert_eq!(
        RemoteEstimatorConfig::from_env().unwrap().endpoint,
        "http://127.0.0.1:9/estimate"
    );

    let server = MockServer::start(|_| {
        Some((
            200,
            r#"{"choices":[{"message":{"content":"hello"}}]}"#.to_owned(),
        ))
    });
    std::env::set_var(GEN_ENDPOINT_VAR, &server.url);
    std::env::set_var(GEN_MODEL_VAR, "env-model");
    std::env::set_var(GEN_API_KEY_VAR, "env-key");
    let prompt = Prompt::new("sys", Vec::new(), PromptMeta::default()).unwrap();
    let gen = RemoteGenerator::from_config(remote(None, None)).unwrap();
    assert_eq!(gen.generate(&prompt).unwrap().text, "hello");
    let req = server.last();
    assert_eq!(req.json()["model"], "env-model");
    assert_eq!(req.header("authorization"), Some("Bearer env-key"));

    let gen = RemoteGenerator::from_config(remote(None, Some("explicit"))).unwrap();
    gen.generate(&prompt).unwrap();
    assert_eq!(server.last().json()["model"], "explicit");

    for var in [
        GEN_ENDPOINT_VAR,
        GEN_API_KEY_VAR,
        GEN_MODEL_VAR,
        EST_ENDPOINT_VAR,
    ] {
        std::env::remove_var(var);
    }
}
