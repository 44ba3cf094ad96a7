use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use xma_core::inference::{
    build_prompt, call_with_retry, predict_batch, render_request, AnswerMap, CallError, ChatBackend,
    ChatRequest, Completion, EndpointConfig, HttpBackend, InferenceError, Prediction, PredictionJob,
    PromptMode, RunLog, REASK_INSTRUCTION,
};
use xma_core::item::{MediaItem, MediaKind, Split, VisionSource};
use xma_core::labels::{BinaryLabel, TaskDef};

type Handler = dyn Fn(usize, &str) -> (u16, String, u64) + Send + Sync;

struct Server {
    url: String,
    hits: Arc<AtomicUsize>,
    headers: Arc<Mutex<Vec<String>>>,
}

fn read_request(stream: &mut TcpStream) -> Option<(String, String)> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut headers = String::new();
    let mut len = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        if line == "\r\n" {
            break;
        }
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            len = v.trim().parse().ok()?;
        }
        headers.push_str(&line);
    }
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).ok()?;
    Some((headers, String::from_utf8_lossy(&body).into_owned()))
}

fn serve(handler: Arc<Handler>) -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let headers = Arc::new(Mutex::new(Vec::new()));
    let (h2, hd2) = (hits.clone(), headers.clone());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let handler = handler.clone();
            let hits = h2.clone();
            let headers = hd2.clone();
            thread::spawn(move || {
                let Some((head, body)) = read_request(&mut stream) else { return };
                let n = hits.fetch_add(1, Ordering::SeqCst);
                headers.lock().unwrap().push(head);
                let (status, reply, delay_ms) = handler(n, &body);
                thread::sleep(Duration::from_millis(delay_ms));
                let resp = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                    reply.len()
                );
                let _ = stream.write_all(resp.as_bytes());
            });
        }
    });
    Server { url, hits, headers }
}

fn answer(text: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {"prompt_tokens": 10, "completion_tokens": 1}
    })
    .to_string()
}

fn cfg(url: &str) -> EndpointConfig {
    EndpointConfig {
        base_url: url.into(),
        model_name: "test-model".into(),
        timeout_s: 2.0,
        max_retries: 2,
        backoff_base_ms: 1,
        backoff_cap_ms: 5,
        ..EndpointConfig::default()
    }
}

fn meme(dir: &Path, id: &str, text: &str) -> MediaItem {
    let rel = format!("{id}.png");
    image::RgbImage::from_pixel(4, 4, image::Rgb([200, 10, 10]))
        .save(dir.join(&rel))
        .unwrap();
    MediaItem {
        item_id: id.into(),
        kind: MediaKind::Meme,
        title: None,
        text: text.into(),
        vision: VisionSource::Image(rel.into()),
        duration_s: None,
        original_label: "hateful".into(),
        split: Split::Unsplit,
    }
}

fn job(dir: &Path, id: &str, text: &str) -> PredictionJob {
    let item = meme(dir, id, text);
    PredictionJob {
        item_id: id.into(),
        bundle: build_prompt(&item, dir, &[], &TaskDef::mhc(), PromptMode::MultiImage, 0).unwrap(),
    }
}

fn request(dir: &Path) -> ChatRequest {
    render_request(&job(dir, "m0", "hello").bundle, &cfg("http://unused"), None).unwrap()
}

#[test]
fn wire_body_is_chat_completions_shaped() {
    let dir = tempfile::tempdir().unwrap();
    let body = serde_json::to_value(request(dir.path())).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["temperature"], 0.0);
    let parts = body["messages"][1]["content"].as_array().unwrap();
    assert_eq!(parts[0]["type"], "image_url");
    assert!(parts[0]["image_url"]["url"].as_str().unwrap().starts_with("data:image/png;base64,"));
    assert_eq!(parts[1]["type"], "text");
    assert_eq!(
        parts[1]["text"],
        "Text: hello\nIs this meme offensive? Answer yes or no.\nAnswer:"
    );
}

#[test]
fn healthy_endpoint_returns_text_and_sends_bearer() {
    let server = serve(Arc::new(|_, body: &str| {
        assert!(body.contains("\"model\":\"test-model\""));
        (200, answer("Yes, offensive."), 0)
    }));
    std::env::set_var("XMA_API_KEY", "sekrit");
    let backend = HttpBackend::new(&cfg(&server.url)).unwrap();
    std::env::remove_var("XMA_API_KEY");
    let dir = tempfile::tempdir().unwrap();
    let raw = call_with_retry(&backend, &request(dir.path()), &cfg(&server.url)).unwrap();
    assert_eq!(raw.text, "Yes, offensive.");
    assert_eq!(raw.attempts, 1);
    assert_eq!(raw.usage.unwrap().completion_tokens, 1);
    let head = server.headers.lock().unwrap()[0].to_ascii_lowercase();
    assert!(head.contains("post /v1/chat/completions"), "{head}");
    assert!(head.contains("authorization: bearer sekrit"), "{head}");
}

#[test]
fn transient_failure_is_retried() {
    let server = serve(Arc::new(|n, _: &str| {
        if n == 0 {
            (503, "{}".into(), 0)
        } else {
            (200, answer("no"), 0)
        }
    }));
    let dir = tempfile::tempdir().unwrap();
    let backend = HttpBackend::new(&cfg(&server.url)).unwrap();
    let raw = call_with_retry(&backend, &request(dir.path()), &cfg(&server.url)).unwrap();
    assert_eq!((raw.text.as_str(), raw.attempts), ("no", 2));
}

#[test]
fn client_error_is_not_retried() {
    let server = serve(Arc::new(|_, _: &str| (400, "{\"error\":\"bad\"}".into(), 0)));
    let dir = tempfile::tempdir().unwrap();
    let backend = HttpBackend::new(&cfg(&server.url)).unwrap();
    let err = call_with_retry(&backend, &request(dir.path()), &cfg(&server.url)).unwrap_err();
    assert!(matches!(err, InferenceError::Http { status: 400, attempts: 1, .. }), "{err}");
    assert_eq!(server.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn malformed_body_is_typed() {
    let server = serve(Arc::new(|_, _: &str| (200, "{\"nope\":1}".into(), 0)));
    let dir = tempfile::tempdir().unwrap();
    let backend = HttpBackend::new(&cfg(&server.url)).unwrap();
    let err = call_with_retry(&backend, &request(dir.path()), &cfg(&server.url)).unwrap_err();
    assert!(matches!(err, InferenceError::Malformed(_)), "{err}");
}

#[test]
fn slow_endpoint_times_out() {
    let server = serve(Arc::new(|_, _: &str| (200, answer("yes"), 1500)));
    let dir = tempfile::tempdir().unwrap();
    let c = EndpointConfig { timeout_s: 0.3, max_retries: 1, ..cfg(&server.url) };
    let backend = HttpBackend::new(&c).unwrap();
    let err = call_with_retry(&backend, &request(dir.path()), &c).unwrap_err();
    assert!(matches!(err, InferenceError::Timeout { attempts: 2 }), "{err}");
}

#[test]
fn endpoint_down_flags_item_after_retries() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let c = cfg(&format!("http://127.0.0.1:{port}"));
    let backend = HttpBackend::new(&c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let err = call_with_retry(&backend, &request(dir.path()), &c).unwrap_err();
    assert!(matches!(err, InferenceError::Connect { attempts: 3, .. }), "{err}");

    let log = RunLog::open(&dir.path().join("run.log")).unwrap();
    let jobs = vec![job(dir.path(), "m1", "a"), job(dir.path(), "m2", "b")];
    let out = predict_batch(&jobs, &backend, &c, &AnswerMap::for_task(&TaskDef::mhc()), &log).unwrap();
    assert!(out.iter().all(|o| o.prediction == Prediction::PredictionFailed));
    assert_eq!(out[0].item_id, "m1");
    let text = std::fs::read_to_string(dir.path().join("run.log")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().all(|l| l.contains("\"status\":\"connect_error\"")));
}

#[test]
fn responses_commit_in_item_order_under_concurrency() {
    // later items answer sooner
    let server = serve(Arc::new(|_, body: &str| {
        let idx: u64 = body
            .split("Text: item")
            .nth(1)
            .and_then(|s| s.split(|c: char| !c.is_ascii_digit()).next())
            .and_then(|s| s.parse().ok())
            .unwrap();
        let word = if idx % 2 == 0 { "yes" } else { "no" };
        (200, answer(word), (12 - idx) * 15)
    }));
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(&server.url);
    let backend = HttpBackend::new(&c).unwrap();
    let jobs: Vec<_> = (0..12).map(|i| job(dir.path(), &format!("m{i:02}"), &format!("item{i}"))).collect();
    let log_path = dir.path().join("run.log");
    let log = RunLog::open(&log_path).unwrap();
    let out = predict_batch(&jobs, &backend, &c, &AnswerMap::for_task(&TaskDef::mhc()), &log).unwrap();
    for (i, o) in out.iter().enumerate() {
        let want = if i % 2 == 0 { BinaryLabel::Positive } else { BinaryLabel::Negative };
        assert_eq!(o.prediction, Prediction::Label(want));
    }
    let logged: Vec<String> = std::fs::read_to_string(&log_path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["item_id"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(logged, jobs.iter().map(|j| j.item_id.clone()).collect::<Vec<_>>());

    // a rerun is served from the log
    drop(log);
    let before = server.hits.load(Ordering::SeqCst);
    let log = RunLog::open(&log_path).unwrap();
    let again = predict_batch(&jobs, &backend, &c, &AnswerMap::for_task(&TaskDef::mhc()), &log).unwrap();
    assert_eq!(server.hits.load(Ordering::SeqCst), before);
    assert_eq!(log.appended(), 0);
    assert!(again.iter().all(|o| o.calls == 0));
    assert_eq!(
        again.iter().map(|o| o.prediction).collect::<Vec<_>>(),
        out.iter().map(|o| o.prediction).collect::<Vec<_>>()
    );
}

#[test]
fn unparseable_answer_is_reasked_once() {
    let dir = tempfile::tempdir().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let seen2 = seen.clone();
    let backend = move |req: &ChatRequest| -> Result<Completion, CallError> {
        let q = req.query_text().unwrap().to_string();
        seen2.lock().unwrap().push(q.clone());
        let text = if q.contains(REASK_INSTRUCTION) { "no" } else { "I cannot say." };
        Ok(Completion { text: text.into(), usage: None })
    };
    let log = RunLog::open(&dir.path().join("run.log")).unwrap();
    let jobs = vec![job(dir.path(), "m1", "x")];
    let c = cfg("http://unused");
    let out = predict_batch(&jobs, &backend, &c, &AnswerMap::for_task(&TaskDef::mhc()), &log).unwrap();
    assert_eq!(out[0].prediction, Prediction::Label(BinaryLabel::Negative));
    assert_eq!(out[0].calls, 2);
    assert_eq!(seen.lock().unwrap().len(), 2);
    assert_eq!(log.appended(), 2);

    let stubborn = |_: &ChatRequest| -> Result<Completion, CallError> {
        Ok(Completion { text: "maybe".into(), usage: None })
    };
    let log = RunLog::open(&dir.path().join("run2.log")).unwrap();
    let out = predict_batch(&jobs, &stubborn, &c, &AnswerMap::for_task(&TaskDef::mhc()), &log).unwrap();
    assert_eq!(out[0].prediction, Prediction::Unparseable);
}

#[test]
fn missing_image_fails_item_without_calling() {
    let dir = tempfile::tempdir().unwrap();
    let mut j = job(dir.path(), "m1", "x");
    std::fs::remove_file(dir.path().join("m1.png")).unwrap();
    j.item_id = "m1".into();
    let calls = AtomicUsize::new(0);
    let backend = |_: &ChatRequest| -> Result<Completion, CallError> {
        calls.fetch_add(1, Ordering::SeqCst);
        Ok(Completion { text: "yes".into(), usage: None })
    };
    let log = RunLog::open(&dir.path().join("run.log")).unwrap();
    let out = predict_batch(&[j], &backend as &dyn ChatBackend, &cfg("http://x"), &AnswerMap::for_task(&TaskDef::mhc()), &log).unwrap();
    assert_eq!(out[0].prediction, Prediction::PredictionFailed);
    assert_eq!(calls.load(Ordering::SeqCst), 0);
}
