use std::sync::Arc;
use std::time::{Duration, Instant};

use acceptgen::gateway::stub::{StubReply, StubServer};
use acceptgen::gateway::{
    BackendConfig, ChatMessage, CompletionRequest, FinishReason, GatewayError, HttpBackend,
};

fn request() -> CompletionRequest {
    let mut r = CompletionRequest::new(
        "deepseek-coder-v2",
        vec![ChatMessage::system("be brief"), ChatMessage::user("write a test")],
    );
    r.timeout = Duration::from_secs(5);
    r
}

fn backend(server: &StubServer, tweak: impl FnOnce(&mut BackendConfig)) -> HttpBackend {
    let mut config = BackendConfig::new(server.url());
    config.retry_backoff_base = Duration::from_millis(20);
    tweak(&mut config);
    HttpBackend::new(config).unwrap()
}

#[test]
fn success_on_200() {
    let server = StubServer::start(vec![StubReply::ok("def test_x(): pass")]).unwrap();
    let b = backend(&server, |c| c.api_key = Some("sk-test".into()));
    let resp = b.complete(&request()).unwrap();
    assert_eq!(resp.content, "def test_x(): pass");
    assert_eq!(resp.finish_reason, FinishReason::Stop);
    assert_eq!(resp.retry_count, 0);
    let seen = server.requests();
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0].authorization.as_deref(), Some("Bearer sk-test"));
    let body: serde_json::Value = serde_json::from_str(&seen[0].body).unwrap();
    assert_eq!(body["model"], "deepseek-coder-v2");
    assert_eq!(body["messages"][1]["role"], "user");
    assert_eq!(body["messages"][1]["content"], "write a test");
}

#[test]
fn retries_429_and_500_then_succeeds() {
    let server = StubServer::start(vec![
        StubReply::status(429),
        StubReply::status(500),
        StubReply::ok("ok"),
    ])
    .unwrap();
    let b = backend(&server, |_| {});
    let started = Instant::now();
    let resp = b.complete(&request()).unwrap();
    assert_eq!(resp.retry_count, 2);
    assert_eq!(server.request_count(), 3);
    // backoff 20ms then 40ms
    assert!(started.elapsed() >= Duration::from_millis(60));
}

#[test]
fn retries_stop_at_the_policy_limit() {
    let server = StubServer::start(vec![StubReply::status(503)]).unwrap();
    let b = backend(&server, |c| c.max_retries = 2);
    match b.complete(&request()) {
        Err(GatewayError::HttpStatus { code: 503, attempts: 3 }) => {}
        other => panic!("{other:?}"),
    }
    assert_eq!(server.request_count(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let server = StubServer::start(vec![StubReply::status(401)]).unwrap();
    let b = backend(&server, |_| {});
    assert!(matches!(
        b.complete(&request()),
        Err(GatewayError::HttpStatus { code: 401, attempts: 1 })
    ));
    assert_eq!(server.request_count(), 1);
}

#[test]
fn schema_violations_are_malformed() {
    for body in [
        "not json",
        r#"{"choices": []}"#,
        r#"{"choices": [{"message": {"content": ""}, "finish_reason": "stop"}]}"#,
        r#"{"data": 1}"#,
    ] {
        let server = StubServer::start(vec![StubReply::raw(200, body)]).unwrap();
        let b = backend(&server, |_| {});
        assert!(
            matches!(b.complete(&request()), Err(GatewayError::MalformedResponse(_))),
            "{body}"
        );
        assert_eq!(server.request_count(), 1, "{body}");
    }
}

#[test]
fn slow_backend_times_out() {
    let server = StubServer::start(vec![StubReply::ok("late").with_delay(Duration::from_millis(400))]).unwrap();
    let b = backend(&server, |c| c.max_retries = 1);
    let mut r = request();
    r.timeout = Duration::from_millis(100);
    assert!(matches!(b.complete(&r), Err(GatewayError::Timeout { attempts: 2 })));
}

#[test]
fn inflight_ceiling_holds() {
    let server = StubServer::start(vec![StubReply::ok("x").with_delay(Duration::from_millis(100))]).unwrap();
    let b = Arc::new(backend(&server, |c| {
        c.max_inflight = 2;
        c.requests_per_minute = 1000;
    }));
    std::thread::scope(|s| {
        for _ in 0..8 {
            let b = Arc::clone(&b);
            s.spawn(move || b.complete(&request()).unwrap());
        }
    });
    assert_eq!(server.request_count(), 8);
    assert_eq!(server.max_concurrent(), 2);
    let requests = server.requests();
    for r in &requests {
        let overlapping = requests
            .iter()
            .filter(|o| o.arrived <= r.arrived && o.departed > r.arrived)
            .count();
        assert!(overlapping <= 2);
    }
}

#[test]
fn rate_ceiling_holds_in_every_window() {
    let server = StubServer::start(vec![StubReply::ok("x")]).unwrap();
    let window = Duration::from_millis(300);
    let b = Arc::new(backend(&server, |c| {
        c.max_inflight = 8;
        c.requests_per_minute = 3;
        c.rate_window = window;
    }));
    std::thread::scope(|s| {
        for _ in 0..7 {
            let b = Arc::clone(&b);
            s.spawn(move || b.complete(&request()).unwrap());
        }
    });
    let starts: Vec<Instant> = server.requests().iter().map(|r| r.arrived).collect();
    assert_eq!(starts.len(), 7);
    // server arrival lags the client's start slightly, so allow 10ms slack
    let slack = Duration::from_millis(10);
    for (i, t) in starts.iter().enumerate() {
        let in_window = starts[i..]
            .iter()
            .filter(|u| u.duration_since(*t) + slack < window)
            .count();
        assert!(in_window <= 3, "{in_window} starts within one window");
    }
    assert!(starts[6].duration_since(starts[0]) >= window * 2 - slack);
}
