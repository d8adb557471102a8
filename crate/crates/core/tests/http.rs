//! Live clients against a local stub server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use malade_core::drugdata::{DrugDataError, LabelSource};
use malade_core::llm::{
    BackendRequest, ChatCompletionsClient, ClientConfig, LlmBackend, RetryPolicy, Role, Sampling, Turn,
};

/// Serves canned `(status, body)` responses in order, repeating the last one.
/// Returns the base URL and the request lines seen so far.
fn stub(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (i, stream) in listener.incoming().enumerate() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut content_length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line.trim().is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        content_length = v.trim().parse().unwrap();
                    }
                }
            }
            let mut body = vec![0; content_length];
            reader.read_exact(&mut body).unwrap();
            log.lock().unwrap().push(request_line.trim().to_string());
            let (status, body) = &responses[i.min(responses.len() - 1)];
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}"), seen)
}

fn fast_client(base_url: &str, max_retries: u32) -> ChatCompletionsClient {
    ChatCompletionsClient::new(ClientConfig {
        base_url: base_url.to_string(),
        api_key: Some("test-key".into()),
        retry: RetryPolicy {
            max_retries,
            base_delay: Duration::from_millis(5),
            max_delay: Duration::from_millis(20),
        },
        ..ClientConfig::default()
    })
    .unwrap()
}

fn request() -> BackendRequest {
    BackendRequest {
        system_prompt: "system".into(),
        turns: vec![Turn {
            role: Role::User,
            content: "hello".into(),
        }],
        tool_schemas: Vec::new(),
        sampling: Sampling::default(),
    }
}

const OK_BODY: &str = r#"{"choices": [{"message": {"role": "assistant", "content": "hi there"}}]}"#;

#[test]
fn rate_limited_requests_are_retried() {
    let (url, seen) = stub(vec![(429, "{}".into()), (429, "{}".into()), (200, OK_BODY.into())]);
    let reply = fast_client(&url, 5).complete(&request()).unwrap();
    assert_eq!(reply.as_deref(), Some("hi there"));
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    assert!(seen.iter().all(|l| l.starts_with("POST /chat/completions")));
}

#[test]
fn retries_give_up_after_the_budget() {
    let (url, seen) = stub(vec![(503, "busy".into())]);
    let err = fast_client(&url, 2).complete(&request()).unwrap_err();
    assert_eq!(err.status, Some(503));
    assert!(err.retriable);
    assert_eq!(err.attempts, 3);
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = stub(vec![(400, r#"{"error": "bad"}"#.into())]);
    let err = fast_client(&url, 5).complete(&request()).unwrap_err();
    assert_eq!(err.status, Some(400));
    assert!(!err.retriable);
    assert_eq!(seen.lock().unwrap().len(), 1);
}

fn label_doc() -> String {
    serde_json::json!({"results": [{
        "id": "stub-1",
        "effective_time": "20230101",
        "openfda": {"generic_name": ["LISINOPRIL"], "brand_name": ["ZESTRIL"]},
        "adverse_reactions": ["Angioedema has been reported."],
    }]})
    .to_string()
}

#[test]
fn label_cache_avoids_second_request() {
    let (url, seen) = stub(vec![(200, label_doc())]);
    let cache = tempfile::tempdir().unwrap();
    let source = LabelSource::live(&url).unwrap().with_cache(cache.path());
    let first = source.fetch_label("Lisinopril").unwrap();
    let second = source.fetch_label("lisinopril").unwrap();
    assert_eq!(first, second);
    assert_eq!(first.sections["adverse_reactions"], "Angioedema has been reported.");
    assert_eq!(seen.lock().unwrap().len(), 1);

    let refreshing = LabelSource::live(&url)
        .unwrap()
        .with_cache(cache.path())
        .with_refresh(true);
    refreshing.fetch_label("Lisinopril").unwrap();
    assert_eq!(seen.lock().unwrap().len(), 2);
}

#[test]
fn brand_name_search_follows_generic_miss() {
    let (url, seen) = stub(vec![(404, "{}".into()), (200, label_doc())]);
    let label = LabelSource::live(&url).unwrap().fetch_label("Zestril").unwrap();
    assert_eq!(label.source_id, "stub-1");
    let seen = seen.lock().unwrap();
    assert!(seen[0].contains("generic_name"));
    assert!(seen[1].contains("brand_name"));
}

#[test]
fn missing_label_is_not_found() {
    let (url, _) = stub(vec![(404, "{}".into())]);
    let err = LabelSource::live(&url).unwrap().fetch_label("Nonexistium").unwrap_err();
    assert!(matches!(err, DrugDataError::NotFound(_)));
}

#[test]
fn upstream_failure_is_reported_with_status() {
    let (url, _) = stub(vec![(500, "oops".into())]);
    let err = LabelSource::live(&url).unwrap().fetch_label("Lisinopril").unwrap_err();
    assert!(matches!(err, DrugDataError::Upstream { status: Some(500), .. }));
}
