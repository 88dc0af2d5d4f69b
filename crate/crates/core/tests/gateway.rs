//! Remote corrector against local stub servers.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use biasforge::corpus_io::UtteranceRecord;
use biasforge::corrector_gateway::{
    correct_batch, correct_remote, CorrectionRequest, DecodeParams, EndpointConfig, GatewayError,
    USER_INSTRUCTION,
};
use biasforge::pipeline::{correct_corpus, CorrectionStatus, CorrectorConfig, PromptRecord};
use biasforge::prompt_builder::biasing_prompt;
use biasforge::text_norm::CommonWordSet;
use serde_json::{json, Value};

struct Reply {
    status: u16,
    body: String,
    delay: Duration,
}

struct Seen {
    auth: Option<String>,
    body: Value,
}

/// Serves each connection on its own thread. `respond` gets the call number
/// (from 0) and the request.
fn stub<F>(respond: F) -> (String, Arc<AtomicUsize>)
where
    F: Fn(usize, &Seen) -> Reply + Send + Sync + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!(
        "http://{}/v1/chat/completions",
        listener.local_addr().unwrap()
    );
    let hits = Arc::new(AtomicUsize::new(0));
    let respond = Arc::new(respond);
    let counter = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let n = counter.fetch_add(1, Ordering::SeqCst);
            let respond = respond.clone();
            std::thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                let mut auth = None;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if lower.starts_with("authorization:") {
                        auth = Some(line["authorization:".len()..].trim().to_owned());
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                let seen = Seen {
                    auth,
                    body: serde_json::from_slice(&body).unwrap_or(Value::Null),
                };
                let reply = respond(n, &seen);
                std::thread::sleep(reply.delay);
                let head = format!(
                    "HTTP/1.1 {} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                    reply.status,
                    reply.body.len()
                );
                let _ = stream.write_all(head.as_bytes());
                let _ = stream.write_all(reply.body.as_bytes());
            });
        }
    });
    (url, hits)
}

fn echo(seen: &Seen) -> Reply {
    let user = seen.body["messages"][1]["content"]
        .as_str()
        .unwrap_or_default();
    let text = user.strip_prefix(USER_INSTRUCTION).unwrap_or(user);
    Reply {
        status: 200,
        body: json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string(),
        delay: Duration::ZERO,
    }
}

fn status(code: u16, body: &str) -> Reply {
    Reply {
        status: code,
        body: body.to_owned(),
        delay: Duration::ZERO,
    }
}

fn config(url: &str) -> EndpointConfig {
    EndpointConfig {
        endpoint_url: url.to_owned(),
        model_id: "stub-model".into(),
        timeout_s: 5.0,
        backoff_ms: 10,
        ..Default::default()
    }
}

fn request(hyp: &str) -> CorrectionRequest {
    CorrectionRequest {
        system: biasing_prompt(&["STEVE"], 100),
        user_text: hyp.to_owned(),
        model_id: "stub-model".into(),
        decode: DecodeParams::default(),
    }
}

#[test]
fn echo_round_trip_carries_prompt_and_key() {
    let seen_ok = Arc::new(AtomicUsize::new(0));
    let flag = seen_ok.clone();
    let (url, _) = stub(move |_, seen| {
        let b = &seen.body;
        if seen.auth.as_deref() == Some("Bearer secret")
            && b["model"] == "stub-model"
            && b["temperature"] == 0.0
            && b["messages"][0]["role"] == "system"
            && b["messages"][0]["content"]
                .as_str()
                .unwrap()
                .ends_with("STEVE.")
        {
            flag.fetch_add(1, Ordering::SeqCst);
        }
        echo(seen)
    });
    let cfg = EndpointConfig {
        api_key: Some("secret".into()),
        ..config(&url)
    };
    let hyp = "MORE THAN THE SPEAKER CHARACE THSATION <sc> AS STEE";
    let resp = correct_remote(&request(hyp), &cfg).unwrap();
    assert_eq!(resp.corrected_text, hyp);
    assert_eq!(seen_ok.load(Ordering::SeqCst), 1);
}

#[test]
fn retries_after_server_error() {
    let (url, hits) = stub(|n, seen| {
        if n == 0 {
            status(500, "busy")
        } else {
            echo(seen)
        }
    });
    let resp = correct_remote(&request("HELLO STEE"), &config(&url)).unwrap();
    assert_eq!(resp.corrected_text, "HELLO STEE");
    assert_eq!(hits.load(Ordering::SeqCst), 2);
    assert!(resp.raw_status.contains('2'));
}

#[test]
fn gives_up_after_max_retries() {
    let (url, hits) = stub(|_, _| status(503, "down"));
    let err = correct_remote(&request("HELLO"), &config(&url)).unwrap_err();
    assert!(
        matches!(err, GatewayError::Http { status: 503, .. }),
        "{err}"
    );
    assert_eq!(hits.load(Ordering::SeqCst), 4);
}

#[test]
fn timeout_is_typed() {
    let (url, _) = stub(|_, seen| Reply {
        delay: Duration::from_secs(3),
        ..echo(seen)
    });
    let cfg = EndpointConfig {
        timeout_s: 0.2,
        max_retries: 0,
        ..config(&url)
    };
    let err = correct_remote(&request("HELLO"), &cfg).unwrap_err();
    assert!(matches!(err, GatewayError::Timeout(_)), "{err}");
}

#[test]
fn auth_failure_is_not_retried() {
    let (url, hits) = stub(|_, _| status(401, r#"{"error":"bad key"}"#));
    let err = correct_remote(&request("HELLO"), &config(&url)).unwrap_err();
    assert!(matches!(err, GatewayError::Auth(401)), "{err}");
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn malformed_body_is_typed() {
    let (url, _) = stub(|_, _| status(200, "not json"));
    let err = correct_remote(&request("HELLO"), &config(&url)).unwrap_err();
    assert!(matches!(err, GatewayError::MalformedResponse(_)), "{err}");
    let (url, _) = stub(|_, _| status(200, r#"{"choices": []}"#));
    let err = correct_remote(&request("HELLO"), &config(&url)).unwrap_err();
    assert!(matches!(err, GatewayError::MalformedResponse(_)), "{err}");
}

#[test]
fn empty_hypothesis_is_rejected_locally() {
    let (url, hits) = stub(|_, seen| echo(seen));
    let err = correct_remote(&request("  "), &config(&url)).unwrap_err();
    assert!(matches!(err, GatewayError::InvalidRequest(_)));
    assert_eq!(hits.load(Ordering::SeqCst), 0);
}

#[test]
fn batch_keeps_input_order() {
    let (url, _) = stub(|n, seen| Reply {
        delay: Duration::from_millis(((7 * n) % 5) as u64 * 20),
        ..echo(seen)
    });
    let cfg = EndpointConfig {
        max_concurrency: 3,
        ..config(&url)
    };
    let requests: Vec<_> = (0..12).map(|i| request(&format!("WORD{i}"))).collect();
    let results = correct_batch(&requests, &cfg);
    for (i, r) in results.into_iter().enumerate() {
        assert_eq!(r.unwrap().corrected_text, format!("WORD{i}"));
    }
}

#[test]
fn corpus_driver_degrades_failures_to_uncorrected() {
    let (url, _) = stub(|_, seen| {
        let user = seen.body["messages"][1]["content"]
            .as_str()
            .unwrap_or_default();
        if user.contains("BROKEN") {
            status(400, "bad request")
        } else {
            Reply {
                body: json!({"choices": [{"message": {"content": "FIXED"}}]}).to_string(),
                ..status(200, "")
            }
        }
    });
    let records = vec![
        UtteranceRecord::new("a", "X").with_hypothesis("FINE"),
        UtteranceRecord::new("b", "Y").with_hypothesis("BROKEN"),
    ];
    let prompts: Vec<PromptRecord> = records
        .iter()
        .map(|r| PromptRecord {
            id: r.id.clone(),
            prompt: biasing_prompt(&["X"], 100),
        })
        .collect();
    let out = correct_corpus(
        &records,
        &prompts,
        &CorrectorConfig::Remote(config(&url)),
        &CommonWordSet::empty(),
        3,
    )
    .unwrap();
    assert_eq!(out[0].corrected, "FIXED");
    assert_eq!(out[0].status, CorrectionStatus::Ok);
    assert_eq!(out[1].corrected, "BROKEN");
    assert_eq!(out[1].status, CorrectionStatus::Failed);
    assert!(out[1].error.as_deref().unwrap().contains("400"));
}
