use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use cohort_core::adapters::{AdapterError, CompletionRequest, EndpointConfig, HttpBackend, Purpose};

struct Canned {
    status: u16,
    body: String,
    delay_ms: u64,
}

/// Minimal HTTP/1.1 server answering each connection with the next canned
/// response and recording the request bodies and auth headers.
struct Stub {
    url: String,
    seen: Arc<Mutex<Vec<(Option<String>, String)>>>,
}

fn read_request(stream: &mut TcpStream) -> (Option<String>, String) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut len = 0;
    let mut auth = None;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap() == 0 || line == "\r\n" {
            break;
        }
        let lower = line.to_ascii_lowercase();
        if let Some(v) = lower.strip_prefix("content-length:") {
            len = v.trim().parse().unwrap();
        }
        if lower.starts_with("authorization:") {
            auth = Some(line["authorization:".len()..].trim().to_string());
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();
    (auth, String::from_utf8(body).unwrap())
}

fn stub(responses: Vec<Canned>) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for r in responses {
            let Ok((mut stream, _)) = listener.accept() else { return };
            log.lock().unwrap().push(read_request(&mut stream));
            thread::sleep(Duration::from_millis(r.delay_ms));
            let reply = format!(
                "HTTP/1.1 {} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                r.status,
                r.body.len(),
                r.body
            );
            let _ = stream.write_all(reply.as_bytes());
        }
    });
    Stub { url, seen }
}

fn ok_body(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

fn request() -> CompletionRequest {
    CompletionRequest::new(Purpose::Plan, "system text", "user text")
}

#[test]
fn canned_reply_round_trip() {
    let s = stub(vec![Canned { status: 200, body: ok_body("hello"), delay_ms: 0 }]);
    std::env::set_var("COHORT_TEST_TOKEN_A", "sekret");
    let mut cfg = EndpointConfig::new(&s.url, "test-model");
    cfg.auth_token_env_var = Some("COHORT_TEST_TOKEN_A".into());
    let reply = HttpBackend::new(cfg).http_complete(&request());
    assert_eq!(reply.result, Ok("hello".into()));
    let seen = s.seen.lock().unwrap();
    assert_eq!(seen[0].0.as_deref(), Some("Bearer sekret"));
    let body: serde_json::Value = serde_json::from_str(&seen[0].1).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"][0]["content"], "system text");
    assert_eq!(body["messages"][1]["content"], "user text");
    assert_eq!(body["stream"], false);
}

#[test]
fn retries_transient_errors() {
    let s = stub(vec![
        Canned { status: 500, body: "{}".into(), delay_ms: 0 },
        Canned { status: 500, body: "{}".into(), delay_ms: 0 },
        Canned { status: 200, body: ok_body("third time"), delay_ms: 0 },
    ]);
    let mut cfg = EndpointConfig::new(&s.url, "m");
    cfg.retries = 2;
    let reply = HttpBackend::new(cfg).http_complete(&request());
    assert_eq!(reply.result, Ok("third time".into()));
    assert_eq!(s.seen.lock().unwrap().len(), 3);
}

#[test]
fn exhausted_retries_report_status() {
    let s = stub(vec![
        Canned { status: 503, body: "{}".into(), delay_ms: 0 },
        Canned { status: 503, body: "{}".into(), delay_ms: 0 },
    ]);
    let reply = HttpBackend::new(EndpointConfig::new(&s.url, "m")).http_complete(&request());
    assert_eq!(reply.result, Err(AdapterError::Status(503)));
}

#[test]
fn client_errors_are_not_retried() {
    let s = stub(vec![
        Canned { status: 400, body: "{}".into(), delay_ms: 0 },
        Canned { status: 200, body: ok_body("unused"), delay_ms: 0 },
    ]);
    let mut cfg = EndpointConfig::new(&s.url, "m");
    cfg.retries = 3;
    let reply = HttpBackend::new(cfg).http_complete(&request());
    assert_eq!(reply.result, Err(AdapterError::Status(400)));
    assert_eq!(s.seen.lock().unwrap().len(), 1);
}

#[test]
fn slow_endpoint_times_out() {
    let s = stub(vec![
        Canned { status: 200, body: ok_body("late"), delay_ms: 400 },
        Canned { status: 200, body: ok_body("late"), delay_ms: 400 },
    ]);
    let mut cfg = EndpointConfig::new(&s.url, "m");
    cfg.timeout_ms = 1;
    cfg.retries = 0;
    let reply = HttpBackend::new(cfg).http_complete(&request());
    assert_eq!(reply.result, Err(AdapterError::Timeout));
}

#[test]
fn malformed_body_is_reported() {
    let s = stub(vec![Canned { status: 200, body: "{\"choices\": []}".into(), delay_ms: 0 }]);
    let reply = HttpBackend::new(EndpointConfig::new(&s.url, "m")).http_complete(&request());
    assert!(matches!(reply.result, Err(AdapterError::MalformedBody(_))));
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut cfg = EndpointConfig::new(format!("http://127.0.0.1:{port}"), "m");
    cfg.retries = 0;
    let reply = HttpBackend::new(cfg).http_complete(&request());
    assert!(matches!(reply.result, Err(AdapterError::Transport(_))), "{:?}", reply.result);
}
