mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::{json, Value};
use synmine::config::PipelineConfig;
use synmine::embed::{CachedProvider, EmbeddingCache, EmbeddingProvider, HashingProvider, HttpOptions, HttpProvider};
use synmine::ingest::{index_dump, TripleFormat};
use synmine::pipeline::mine;
use synmine::synset::write_jsonl;
use synmine::Error;

type Handler = dyn Fn(usize, &[String]) -> (u16, String) + Send + Sync;

/// Minimal HTTP/1.1 server answering `POST /embed` through `handler`.
struct MockService {
    url: String,
    requests: Arc<Mutex<Vec<Vec<String>>>>,
    peak_in_flight: Arc<AtomicUsize>,
}

impl MockService {
    fn start(delay_ms: u64, handler: Box<Handler>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let peak = Arc::new(AtomicUsize::new(0));
        let active = Arc::new(AtomicUsize::new(0));
        let handler: Arc<Handler> = Arc::from(handler);
        let (reqs, pk) = (requests.clone(), peak.clone());
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { break };
                let (reqs, pk, active, handler) = (reqs.clone(), pk.clone(), active.clone(), handler.clone());
                std::thread::spawn(move || serve(stream, delay_ms, &reqs, &pk, &active, &*handler));
            }
        });
        Self {
            url,
            requests,
            peak_in_flight: peak,
        }
    }

    fn request_sizes(&self) -> Vec<usize> {
        self.requests.lock().unwrap().iter().map(Vec::len).collect()
    }
}

fn serve(
    stream: TcpStream,
    delay_ms: u64,
    requests: &Mutex<Vec<Vec<String>>>,
    peak: &AtomicUsize,
    active: &AtomicUsize,
    handler: &Handler,
) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut stream = stream;
    loop {
        let mut content_length = 0usize;
        let mut request_line = String::new();
        if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
            return;
        }
        assert!(request_line.starts_with("POST /embed "), "{request_line}");
        loop {
            let mut h = String::new();
            reader.read_line(&mut h).unwrap();
            if h == "\r\n" {
                break;
            }
            if let Some((k, v)) = h.split_once(':') {
                if k.eq_ignore_ascii_case("content-length") {
                    content_length = v.trim().parse().unwrap();
                }
            }
        }
        let mut body = vec![0u8; content_length];
        reader.read_exact(&mut body).unwrap();
        let now = active.fetch_add(1, Ordering::SeqCst) + 1;
        peak.fetch_max(now, Ordering::SeqCst);
        let v: Value = serde_json::from_slice(&body).unwrap();
        let texts: Vec<String> = serde_json::from_value(v["texts"].clone()).unwrap();
        let n = {
            let mut r = requests.lock().unwrap();
            r.push(texts.clone());
            r.len()
        };
        std::thread::sleep(Duration::from_millis(delay_ms));
        let (status, payload) = handler(n, &texts);
        active.fetch_sub(1, Ordering::SeqCst);
        let reply = format!(
            "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{payload}",
            payload.len()
        );
        if stream.write_all(reply.as_bytes()).is_err() {
            return;
        }
    }
}

/// Vector `[index + 1, 1]` for texts named `t{index}`.
fn indexed_vectors(texts: &[String]) -> String {
    let vectors: Vec<Vec<f32>> = texts
        .iter()
        .map(|t| vec![t[1..].parse::<f32>().unwrap() + 1.0, 1.0])
        .collect();
    json!({"vectors": vectors, "dim": 2}).to_string()
}

fn fast_options() -> HttpOptions {
    HttpOptions {
        backoff_ms: 1,
        ..HttpOptions::default()
    }
}

#[test]
fn batches_preserve_order_and_size_limit() {
    let mock = MockService::start(0, Box::new(|_, texts| (200, indexed_vectors(texts))));
    let provider = HttpProvider::new(&mock.url, fast_options()).unwrap();
    let texts: Vec<String> = (0..300).map(|i| format!("t{i}")).collect();
    let vectors = provider.embed_batch(&texts).unwrap();
    let mut sizes = mock.request_sizes();
    sizes.sort_unstable();
    assert_eq!(sizes, [44, 128, 128]);
    for (i, v) in vectors.iter().enumerate() {
        let norm = (v[0] * v[0] + v[1] * v[1]).sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        assert!((v[0] / v[1] - (i as f32 + 1.0)).abs() < 1e-3 * (i as f32 + 1.0));
    }
}

#[test]
fn in_flight_requests_are_bounded() {
    let mock = MockService::start(60, Box::new(|_, texts| (200, indexed_vectors(texts))));
    let options = HttpOptions {
        batch_size: 2,
        max_in_flight: 3,
        ..fast_options()
    };
    let provider = HttpProvider::new(&mock.url, options).unwrap();
    let texts: Vec<String> = (0..20).map(|i| format!("t{i}")).collect();
    provider.embed_batch(&texts).unwrap();
    assert_eq!(mock.request_sizes().len(), 10);
    let peak = mock.peak_in_flight.load(Ordering::SeqCst);
    assert!((1..=3).contains(&peak), "peak {peak}");
}

#[test]
fn server_error_is_retried() {
    let mock = MockService::start(
        0,
        Box::new(|n, texts| {
            if n == 1 {
                (500, "{}".to_string())
            } else {
                (200, indexed_vectors(texts))
            }
        }),
    );
    let provider = HttpProvider::new(&format!("{}/embed", mock.url), fast_options()).unwrap();
    let v = provider.embed_batch(&["t0".to_string(), "t1".to_string()]).unwrap();
    assert_eq!(v.len(), 2);
    assert_eq!(mock.request_sizes(), [2, 2]);
}

#[test]
fn retries_are_bounded() {
    let mock = MockService::start(0, Box::new(|_, _| (503, "{}".to_string())));
    let provider = HttpProvider::new(&mock.url, fast_options()).unwrap();
    let err = provider.embed_batch(&["t0".to_string()]).unwrap_err();
    assert!(matches!(err, Error::Transport(_)));
    assert_eq!(err.exit_code(), 6);
    // one attempt plus three retries
    assert_eq!(mock.request_sizes().len(), 4);
}

#[test]
fn inconsistent_dimension_is_transport_error() {
    let mock = MockService::start(
        0,
        Box::new(|_, _| (200, json!({"vectors": [[1.0, 0.0, 0.0]], "dim": 2}).to_string())),
    );
    let options = HttpOptions {
        max_retries: 0,
        ..fast_options()
    };
    let provider = HttpProvider::new(&mock.url, options).unwrap();
    assert!(matches!(provider.embed_batch(&["t0".to_string()]), Err(Error::Transport(_))));
}

#[test]
fn cache_serves_repeats_and_persists() {
    let mock = MockService::start(0, Box::new(|_, texts| (200, indexed_vectors(texts))));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    let texts: Vec<String> = ["t1", "t2", "t1", "t3"].iter().map(|s| s.to_string()).collect();

    let cached = CachedProvider::new(
        HttpProvider::new(&mock.url, fast_options()).unwrap(),
        EmbeddingCache::open(&path).unwrap(),
    );
    let first = cached.embed_batch(&texts).unwrap();
    assert_eq!(mock.request_sizes(), [3]);
    let again = cached.embed_batch(&texts).unwrap();
    assert_eq!(first, again);
    assert_eq!(mock.request_sizes(), [3]);

    drop(cached);
    let text = std::fs::read_to_string(&path).unwrap();
    let header: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(header, json!({"format": "synmine-embedding-cache", "version": 1}));
    assert_eq!(text.lines().count(), 4);

    let reopened = CachedProvider::new(
        HttpProvider::new(&mock.url, fast_options()).unwrap(),
        EmbeddingCache::open(&path).unwrap(),
    );
    let third = reopened.embed_batch(&["t3".to_string(), "t4".to_string()]).unwrap();
    assert_eq!(third[0], first[3]);
    assert_eq!(mock.request_sizes(), [3, 1]);
}

#[test]
fn pipeline_over_http_matches_local_provider() {
    let local = HashingProvider::default();
    let mock = MockService::start(
        0,
        Box::new(move |_, texts| {
            let vectors: Vec<Vec<f32>> = texts.iter().map(|t| local.embed_one(t)).collect();
            (200, json!({"vectors": vectors, "dim": local.dim()}).to_string())
        }),
    );
    let (index, stats) = index_dump(common::mini_kg_text().as_bytes(), TripleFormat::Tsv).unwrap();
    let render = |config: &PipelineConfig| {
        let out = mine(&index, &stats, config, None, None).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &out.records).unwrap();
        buf
    };
    let baseline = render(&PipelineConfig::default());
    let mut remote = PipelineConfig::default();
    remote.use_embed_endpoint(&mock.url, None);
    assert_eq!(render(&remote), baseline);
    assert!(!mock.request_sizes().is_empty());
}
