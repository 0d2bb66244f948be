use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread;

use rtlflow::engine::{
    AnalysisContext, Backend, BackendConfig, BackendError, HttpBackend, MockTaintBackend, PromptBundle,
    PromptTemplates, RecordingBackend, Request, SchemaKind, Task,
};
use rtlflow::frontend::{DepOptions, SourceUnit};
use rtlflow::report::{analyze, Mode};
use rtlflow::taint::AssetSeed;
use rtlflow::Design;
use serde_json::{json, Value};

struct Seen {
    auth: Option<String>,
    path: String,
    body: Value,
}

fn read_request(stream: &mut TcpStream) -> Seen {
    let mut r = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    r.read_line(&mut line).unwrap();
    let path = line.split_whitespace().nth(1).unwrap_or("").to_string();
    let mut len = 0;
    let mut auth = None;
    loop {
        let mut h = String::new();
        r.read_line(&mut h).unwrap();
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        let (k, v) = h.split_once(':').unwrap();
        match k.to_ascii_lowercase().as_str() {
            "content-length" => len = v.trim().parse().unwrap(),
            "authorization" => auth = Some(v.trim().to_string()),
            _ => {}
        }
    }
    let mut body = vec![0; len];
    r.read_exact(&mut body).unwrap();
    Seen {
        auth,
        path,
        body: serde_json::from_slice(&body).unwrap(),
    }
}

fn respond(stream: &mut TcpStream, status: u16, body: &str) {
    let reason = if status == 200 { "OK" } else { "Error" };
    let msg = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(msg.as_bytes()).unwrap();
}

fn completion(content: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

/// Serves requests with `answer` until the test process ends; returns the base URL and the log.
fn serve<F>(answer: F) -> (String, Arc<Mutex<Vec<Seen>>>)
where
    F: Fn(usize, &Seen) -> (u16, String) + Send + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let log = Arc::new(Mutex::new(Vec::new()));
    let log2 = log.clone();
    thread::spawn(move || {
        for (i, stream) in listener.incoming().enumerate() {
            let mut stream = stream.unwrap();
            let seen = read_request(&mut stream);
            let (status, body) = answer(i, &seen);
            respond(&mut stream, status, &body);
            log2.lock().unwrap().push(seen);
        }
    });
    (url, log)
}

fn config(url: &str) -> BackendConfig {
    BackendConfig {
        initial_backoff_ms: 5,
        timeout_secs: 10,
        api_key_env: "RTLFLOW_TEST_HTTP_KEY".into(),
        ..BackendConfig::http(url, "test-model")
    }
}

fn prompt() -> PromptBundle {
    PromptBundle {
        system_text: "sys".into(),
        user_text: "user".into(),
        expected_schema: SchemaKind::Finding,
    }
}

fn call(b: &dyn Backend) -> Result<String, BackendError> {
    let p = prompt();
    b.complete(&Request {
        prompt: &p,
        task: &Task::Report,
        attempt: 0,
    })
}

#[test]
fn wire_format_and_auth() {
    std::env::set_var("RTLFLOW_TEST_HTTP_KEY", "sekrit");
    let (url, log) = serve(|_, _| (200, completion("hello")));
    let b = HttpBackend::new(config(&url)).unwrap();
    assert_eq!(call(&b).unwrap(), "hello");
    let log = log.lock().unwrap();
    let seen = &log[0];
    assert_eq!(seen.path, "/v1/chat/completions");
    assert_eq!(seen.auth.as_deref(), Some("Bearer sekrit"));
    assert_eq!(seen.body["model"], "test-model");
    assert_eq!(seen.body["temperature"], 0.0);
    assert_eq!(seen.body["messages"][0], json!({"role": "system", "content": "sys"}));
    assert_eq!(seen.body["messages"][1], json!({"role": "user", "content": "user"}));
}

#[test]
fn server_errors_are_retried() {
    let (url, log) = serve(|i, _| if i < 2 { (500, "busy".into()) } else { (200, completion("ok")) });
    let b = HttpBackend::new(config(&url)).unwrap();
    assert_eq!(call(&b).unwrap(), "ok");
    assert_eq!(log.lock().unwrap().len(), 3);
}

#[test]
fn persistent_failure_reports_attempts() {
    let (url, _log) = serve(|_, _| (503, "down".into()));
    let b = HttpBackend::new(config(&url)).unwrap();
    match call(&b) {
        Err(BackendError::Transport { attempts, message }) => {
            assert_eq!(attempts, 3);
            assert!(message.contains("503"), "{message}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn client_errors_are_not_retried() {
    let (url, log) = serve(|_, _| (400, "bad".into()));
    let b = HttpBackend::new(config(&url)).unwrap();
    assert!(matches!(call(&b), Err(BackendError::Transport { attempts: 1, .. })));
    assert_eq!(log.lock().unwrap().len(), 1);
}

#[test]
fn unreachable_endpoint_fails_after_retries() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let b = HttpBackend::new(config(&format!("http://127.0.0.1:{port}"))).unwrap();
    assert!(matches!(call(&b), Err(BackendError::Transport { attempts: 3, .. })));
}

/// Records replies that would come from the taint backend.
struct Capture<'d> {
    inner: MockTaintBackend<'d>,
    replies: Mutex<HashMap<String, String>>,
}

impl Backend for Capture<'_> {
    fn complete(&self, req: &Request<'_>) -> Result<String, BackendError> {
        let r = self.inner.complete(req)?;
        self.replies.lock().unwrap().insert(req.prompt.user_text.clone(), r.clone());
        Ok(r)
    }
}

#[test]
fn record_then_replay_is_byte_identical() {
    let src = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/suite/soc_config_leak.v");
    let unit = SourceUnit::load(&[src]).unwrap();
    let seed = AssetSeed::new("config_mem_unit", "config_mem_data", "config");
    let d = Design::new(unit, None, &[seed], DepOptions::default()).unwrap();
    let templates = PromptTemplates::default();
    let ctx = AnalysisContext::with_defaults(&templates);

    let cap = Capture {
        inner: MockTaintBackend::new(&d),
        replies: Mutex::new(HashMap::new()),
    };
    analyze(&d, &cap, &templates, ctx.clone(), Mode::DivideAndConquer).unwrap();
    let replies = cap.replies.into_inner().unwrap();
    let calls = replies.len();
    let (url, _log) = serve(move |_, seen| {
        let user = seen.body["messages"][1]["content"].as_str().unwrap_or("");
        match replies.get(user) {
            Some(r) => (200, completion(r)),
            None => (404, "unknown prompt".into()),
        }
    });

    let dir = tempfile::tempdir().unwrap();
    let http = HttpBackend::new(config(&url)).unwrap();
    let rec = RecordingBackend::new(http, dir.path().to_path_buf());
    let live = analyze(&d, &rec, &templates, ctx.clone(), Mode::DivideAndConquer).unwrap();
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), calls);

    let replay = BackendConfig::replay(dir.path()).instantiate(&d).unwrap();
    let again = analyze(&d, &*replay, &templates, ctx, Mode::DivideAndConquer).unwrap();
    assert_eq!(live.report.to_canonical_json(), again.report.to_canonical_json());
    assert!(again.report.vulnerability_found);
}
