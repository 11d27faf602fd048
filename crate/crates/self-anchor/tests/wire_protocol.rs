//! Remote-backend wire protocol tests against a minimal in-process HTTP
//! server that serves a stub model.

mod common;

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;

use self_anchor::backend::{Backend, RemoteBackend, RemoteConfig, StubBackend, StubFixture, StubRule};
use self_anchor::Error;

fn stub() -> StubBackend {
    StubBackend::new(StubFixture {
        vocab: vec!["<m>".into(), "<eos>".into(), "a".into(), "b".into(), "ab".into()],
        rules: vec![StubRule { suffix: vec![2], logits: vec![0.0, 0.0, 0.0, 3.0, 0.0] }],
        default_logits: vec![0.1, 0.2, 0.3, 0.4, 0.5],
        mask_token: Some(0),
        eos_token: 1,
    })
    .unwrap()
}

fn read_request(stream: &mut TcpStream) -> Option<(String, String, Vec<u8>)> {
    let mut buf = Vec::new();
    let mut tmp = [0u8; 1024];
    let header_end = loop {
        match stream.read(&mut tmp) {
            Ok(0) => return None,
            Ok(n) => {
                buf.extend_from_slice(&tmp[..n]);
                if let Some(i) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
                    break i + 4;
                }
            }
            Err(_) => return None,
        }
    };
    let head = String::from_utf8_lossy(&buf[..header_end]).to_string();
    let mut lines = head.lines();
    let request_line = lines.next()?.to_string();
    let mut parts = request_line.split_whitespace();
    let method = parts.next()?.to_string();
    let path = parts.next()?.to_string();
    let content_length: usize = head
        .lines()
        .find_map(|l| {
            let (name, value) = l.split_once(':')?;
            name.eq_ignore_ascii_case("content-length").then(|| value.trim().parse().ok())?
        })
        .unwrap_or(0);
    let mut body = buf[header_end..].to_vec();
    while body.len() < content_length {
        match stream.read(&mut tmp) {
            Ok(0) => break,
            Ok(n) => body.extend_from_slice(&tmp[..n]),
            Err(_) => break,
        }
    }
    Some((method, path, body))
}

fn respond(stream: &mut TcpStream, status: &str, body: &str) {
    let response = format!(
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.write_all(response.as_bytes());
}

/// Serves the wire protocol over a real socket; `break_logits` makes the
/// logits endpoint return a wrong-length vector.
fn spawn_server(backend: StubBackend, break_logits: bool) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let backend = Arc::new(backend);
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let backend = Arc::clone(&backend);
            std::thread::spawn(move || {
                let Some((method, path, body)) = read_request(&mut stream) else { return };
                match (method.as_str(), path.as_str()) {
                    ("GET", "/v1/descriptor") => {
                        let body = serde_json::to_string(backend.descriptor()).unwrap();
                        respond(&mut stream, "200 OK", &body);
                    }
                    ("POST", "/v1/tokenize") => {
                        #[derive(serde::Deserialize)]
                        struct Req {
                            text: String,
                        }
                        let req: Req = serde_json::from_slice(&body).unwrap();
                        match backend.tokenize(&req.text) {
                            Ok(tokens) => respond(
                                &mut stream,
                                "200 OK",
                                &serde_json::json!({ "tokens": tokens }).to_string(),
                            ),
                            Err(e) => respond(
                                &mut stream,
                                "400 Bad Request",
                                &serde_json::json!({ "error": e.to_string() }).to_string(),
                            ),
                        }
                    }
                    ("POST", "/v1/detokenize") => {
                        #[derive(serde::Deserialize)]
                        struct Req {
                            tokens: Vec<u32>,
                        }
                        let req: Req = serde_json::from_slice(&body).unwrap();
                        match backend.detokenize(&req.tokens) {
                            Ok(text) => respond(
                                &mut stream,
                                "200 OK",
                                &serde_json::json!({ "text": text }).to_string(),
                            ),
                            Err(e) => respond(
                                &mut stream,
                                "400 Bad Request",
                                &serde_json::json!({ "error": e.to_string() }).to_string(),
                            ),
                        }
                    }
                    ("POST", "/v1/logits") => {
                        #[derive(serde::Deserialize)]
                        struct Req {
                            tokens: Vec<u32>,
                        }
                        let req: Req = serde_json::from_slice(&body).unwrap();
                        if break_logits {
                            respond(
                                &mut stream,
                                "200 OK",
                                &serde_json::json!({ "logits": [1.0, 2.0] }).to_string(),
                            );
                            return;
                        }
                        match backend.logits(&req.tokens) {
                            Ok(v) => respond(
                                &mut stream,
                                "200 OK",
                                &serde_json::json!({ "logits": v.values() }).to_string(),
                            ),
                            Err(e) => respond(
                                &mut stream,
                                "400 Bad Request",
                                &serde_json::json!({ "error": e.to_string() }).to_string(),
                            ),
                        }
                    }
                    _ => respond(&mut stream, "404 Not Found", "{}"),
                }
            });
        }
    });
    format!("http://{addr}")
}

#[test]
fn descriptor_is_fetched_at_connect_and_echoed() {
    let url = spawn_server(stub(), false);
    let remote = RemoteBackend::connect(RemoteConfig::new(url)).unwrap();
    let d = remote.descriptor();
    assert_eq!(d.vocab_size, 5);
    assert_eq!(d.mask_token, Some(0));
    assert_eq!(d.eos_token, 1);
}

#[test]
fn tokenize_detokenize_logits_round_trip() {
    let url = spawn_server(stub(), false);
    let remote = RemoteBackend::connect(RemoteConfig::new(url)).unwrap();

    let tokens = remote.tokenize("ab").unwrap();
    assert_eq!(tokens, vec![4]); // longest match on the stub side
    assert_eq!(remote.detokenize(&[4]).unwrap(), "ab");
    assert_eq!(remote.detokenize(&[2, 3]).unwrap(), "ab");

    let logits = remote.logits(&[2]).unwrap();
    assert_eq!(logits.values(), &[0.0, 0.0, 0.0, 3.0, 0.0]);
    let logits = remote.logits(&[3]).unwrap();
    assert_eq!(logits.values(), &[0.1, 0.2, 0.3, 0.4, 0.5]);
}

#[test]
fn http_errors_map_to_backend_errors_with_detail() {
    let url = spawn_server(stub(), false);
    let remote = RemoteBackend::connect(RemoteConfig::new(url)).unwrap();
    let err = remote.tokenize("zzz").unwrap_err();
    match err {
        Error::Backend(msg) => assert!(msg.contains("400"), "missing status detail: {msg}"),
        other => panic!("expected backend error, got {other}"),
    }
}

#[test]
fn wrong_length_logits_are_rejected() {
    let url = spawn_server(stub(), true);
    let remote = RemoteBackend::connect(RemoteConfig::new(url)).unwrap();
    let err = remote.logits(&[2]).unwrap_err();
    match err {
        Error::Backend(msg) => assert!(msg.contains("vocab_size"), "unexpected message: {msg}"),
        other => panic!("expected backend error, got {other}"),
    }
}

#[test]
fn unreachable_server_is_a_backend_error() {
    let mut config = RemoteConfig::new("http://127.0.0.1:9");
    config.connect_timeout = std::time::Duration::from_millis(200);
    config.read_timeout = std::time::Duration::from_millis(200);
    match RemoteBackend::connect(config) {
        Err(Error::Backend(_)) => {}
        Err(other) => panic!("expected backend error, got {other}"),
        Ok(_) => panic!("connect to a dead port must fail"),
    }
}

#[test]
fn anchored_generation_runs_over_the_wire() {
    use self_anchor::orchestrator::generate;
    use self_anchor::prompt::{PromptParts, PromptTemplate};
    use self_anchor::steering::{AnchorMode, SteeringConfig};

    let script = common::script_json(1, "ok", 3);
    let fixture = common::scripted_backend(&script, 2.0);
    let url = spawn_server(StubBackend::new(fixture.clone()).unwrap(), false);
    let remote = RemoteBackend::connect(RemoteConfig::new(url)).unwrap();

    let parts = PromptParts::new("sys: ", "q?").unwrap();
    let template = PromptTemplate::system_then_question(&parts);
    let config = SteeringConfig {
        omega_base: 2.0,
        anchor_mode: AnchorMode::QuestionPlusCurrentPlan,
        ..SteeringConfig::default()
    };
    let over_wire = generate(&parts, &template, &config, &remote).unwrap();

    let local = StubBackend::new(fixture).unwrap();
    let direct = generate(&parts, &template, &config, &local).unwrap();
    assert_eq!(over_wire.tokens, direct.tokens);
    assert_eq!(over_wire.trace.final_answer, direct.trace.final_answer);
    assert_eq!(over_wire.trace.backend_calls, direct.trace.backend_calls);
}
