use std::net::TcpStream;
use std::time::{Duration, Instant};

use ific::config::RunConfig;
use ific_cli::live::LiveSession;
use ific_cli::server::Server;
use serde_json::Value;
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

type Client = WebSocket<MaybeTlsStream<TcpStream>>;

fn config() -> RunConfig {
    let mut config = RunConfig::default();
    config.human.segments.clear();
    config
}

fn connect(server: &Server) -> Client {
    let (ws, _) = tungstenite::connect(format!("ws://{}", server.local_addr())).unwrap();
    if let MaybeTlsStream::Plain(s) = ws.get_ref() {
        s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    }
    ws
}

fn next(ws: &mut Client) -> Value {
    loop {
        match ws.read().unwrap() {
            Message::Text(t) => return serde_json::from_str(t.as_str()).unwrap(),
            _ => continue,
        }
    }
}

fn send(ws: &mut Client, text: &str) {
    ws.send(Message::text(text)).unwrap();
}

/// Next message of `kind`, skipping others.
fn next_of(ws: &mut Client, kind: &str) -> Value {
    loop {
        let v = next(ws);
        if v["type"] == kind {
            return v;
        }
    }
}

/// First state for which `pred` holds, within `timeout`.
fn wait_state(ws: &mut Client, timeout: Duration, pred: impl Fn(&Value) -> bool) -> Value {
    let start = Instant::now();
    loop {
        let v = next_of(ws, "state");
        if pred(&v) {
            return v;
        }
        assert!(start.elapsed() < timeout, "condition not met; last state {v}");
    }
}

#[test]
fn runs_without_clients() {
    let server = Server::start(&config(), "127.0.0.1:0").unwrap();
    std::thread::sleep(Duration::from_millis(300));
    let session = server.shutdown();
    assert!(session.simulation().cycle() > 100, "{}", session.simulation().cycle());
}

#[test]
fn publishes_snapshots_at_telemetry_rate() {
    let server = Server::start(&config(), "127.0.0.1:0").unwrap();
    let mut ws = connect(&server);
    let first = next_of(&mut ws, "state");
    for key in ["t", "pose", "twist", "tanks", "damping", "powers", "forces", "lambda_c"] {
        assert!(!first[key].is_null(), "missing {key}");
    }

    let start = Instant::now();
    let mut count = 0;
    let mut last_t = first["t"].as_f64().unwrap();
    while start.elapsed() < Duration::from_secs(2) {
        let v = next_of(&mut ws, "state");
        let t = v["t"].as_f64().unwrap();
        assert!(t >= last_t);
        last_t = t;
        count += 1;
    }
    let rate = count as f64 / start.elapsed().as_secs_f64();
    assert!((25.0..=35.0).contains(&rate), "{rate} Hz");
    // simulated time follows the wall clock
    assert!(last_t > 1.5, "{last_t}");
    server.shutdown();
}

#[test]
fn malformed_messages_get_errors() {
    let server = Server::start(&config(), "127.0.0.1:0").unwrap();
    let mut ws = connect(&server);
    for bad in [
        "{",
        r#"{"type":"jump"}"#,
        r#"{"type":"wrench","value":[1,2]}"#,
        r#"{"type":"set_param","key":"ks_t","value":10}"#,
        r#"{"type":"set_param","key":"p_vf","value":-1}"#,
    ] {
        send(&mut ws, bad);
        let err = next_of(&mut ws, "error");
        assert!(err["message"].is_string(), "{bad}");
    }
    ws.send(Message::Binary(vec![1, 2, 3].into())).unwrap();
    next_of(&mut ws, "error");
    // the session keeps running
    let t0 = next_of(&mut ws, "state")["t"].as_f64().unwrap();
    wait_state(&mut ws, Duration::from_secs(3), |v| v["t"].as_f64().unwrap() > t0 + 0.1);
    server.shutdown();
}

#[test]
fn push_pause_reset_and_select() {
    let server = Server::start(&config(), "127.0.0.1:0").unwrap();
    let mut ws = connect(&server);
    let initial = next_of(&mut ws, "state");

    send(&mut ws, r#"{"type":"wrench","value":[0,0,30,0,0,0]}"#);
    let pushed = wait_state(&mut ws, Duration::from_secs(5), |v| v["damping"][1].as_f64().unwrap() > 1.0);
    assert!(pushed["forces"]["Fext"][2].as_f64().unwrap() > initial["forces"]["Fext"][2].as_f64().unwrap());

    send(&mut ws, r#"{"type":"pause"}"#);
    let paused = wait_state(&mut ws, Duration::from_secs(2), |v| v["paused"] == true);
    let held = wait_state(&mut ws, Duration::from_secs(2), |v| v["paused"] == true);
    std::thread::sleep(Duration::from_millis(200));
    let later = wait_state(&mut ws, Duration::from_secs(2), |v| v["paused"] == true);
    assert_eq!(held["t"], later["t"]);
    assert!(paused["t"].as_f64().unwrap() > 0.0);

    send(&mut ws, r#"{"type":"reset"}"#);
    let reset = wait_state(&mut ws, Duration::from_secs(2), |v| v["t"] == 0.0);
    let mut fresh = serde_json::to_value(LiveSession::new(&config()).unwrap().snapshot()).unwrap();
    fresh["paused"] = true.into();
    fresh["type"] = "state".into();
    assert_eq!(reset, fresh);

    send(&mut ws, r#"{"type":"select_controller","controller":"ds"}"#);
    send(&mut ws, r#"{"type":"resume"}"#);
    wait_state(&mut ws, Duration::from_secs(3), |v| {
        v["controller"] == "ds" && v["paused"] == false && v["t"].as_f64().unwrap() > 0.2
    });

    send(&mut ws, r#"{"type":"set_param","key":"p_vf","value":0.05}"#);
    send(&mut ws, r#"{"type":"wrench","value":[0,0,0,0,0,0]}"#);
    std::thread::sleep(Duration::from_millis(100));
    ws.close(None).ok();
    let session = server.shutdown();
    assert_eq!(session.simulation().config().parameters.p_vf, 0.05);
    assert_eq!(session.simulation().live_wrench(), ific::geometry::Wrench::zero());
}

#[test]
fn last_writer_wins_between_clients() {
    let server = Server::start(&config(), "127.0.0.1:0").unwrap();
    let mut a = connect(&server);
    let mut b = connect(&server);
    next_of(&mut a, "state");
    next_of(&mut b, "state");
    send(&mut a, r#"{"type":"wrench","value":[0,0,20,0,0,0]}"#);
    std::thread::sleep(Duration::from_millis(100));
    send(&mut b, r#"{"type":"wrench","value":[5,0,0,0,0,0]}"#);
    std::thread::sleep(Duration::from_millis(200));
    // both clients keep receiving
    next_of(&mut a, "state");
    next_of(&mut b, "state");
    let session = server.shutdown();
    assert_eq!(session.simulation().live_wrench().to_array(), [5.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
}
