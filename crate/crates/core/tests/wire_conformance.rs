//! A mock model talks to the responder over TCP the way a hooked model
//! would: hello, one state per session, apply the returned delta, report.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;

use asa_core::controller::{apply_injection, AssetBundle, Mode};
use asa_core::eval::fnv1a;
use asa_core::pipeline::{train_bundle, DEFAULT_PROPORTIONS};
use asa_core::probe::TrainConfig;
use asa_core::scalar::lift;
use asa_core::synth::{build_world, WorldConfig};
use asa_core::wire::{serve_tcp, Responder, ServeConfig, WireMessage, PROTOCOL};
use asa_core::Bundle;

const SEED: u64 = 42;

fn bundle_and_states() -> (Bundle, Vec<Vec<f32>>) {
    let world = build_world(&WorldConfig { dim: 32, ..WorldConfig::default() }).unwrap();
    let data = world.sample_records(60, DEFAULT_PROPORTIONS).unwrap();
    let mut bundle: AssetBundle<f32> = train_bundle(&data, 1.0, &TrainConfig::default()).unwrap().bundle;
    bundle.alpha = 4.0;
    bundle.tau = 0.65;
    let states = data.records().iter().map(|r| lift(&r.hidden)).collect();
    (bundle, states)
}

struct MockModel {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl MockModel {
    fn connect(addr: std::net::SocketAddr) -> Self {
        let writer = TcpStream::connect(addr).unwrap();
        writer.set_nodelay(true).unwrap();
        Self { reader: BufReader::new(writer.try_clone().unwrap()), writer }
    }

    fn send_raw(&mut self, line: &str) {
        self.writer.write_all(line.as_bytes()).unwrap();
    }

    fn send(&mut self, m: &WireMessage) {
        self.send_raw(&m.to_line());
    }

    fn recv(&mut self) -> Option<WireMessage> {
        let mut line = String::new();
        (self.reader.read_line(&mut line).unwrap() > 0).then(|| serde_json::from_str(&line).unwrap())
    }

    fn hello(&mut self, dim: usize, layer: u32) -> WireMessage {
        self.send(&WireMessage::Hello { dim, layer, model_id: "mock".into(), protocol: Some(PROTOCOL.into()) });
        self.recv().unwrap()
    }
}

fn start(bundle: Bundle) -> std::net::SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let responder = Arc::new(Responder::new(bundle, ServeConfig { seed: SEED, ..ServeConfig::default() }).unwrap());
    std::thread::spawn(move || serve_tcp(responder, listener));
    addr
}

#[test]
fn echo_reproduces_offline_delta() {
    let (bundle, states) = bundle_and_states();
    let addr = start(bundle.clone());
    let mut model = MockModel::connect(addr);
    assert!(matches!(model.hello(bundle.dim, bundle.layer), WireMessage::Hello { .. }));

    let mut seen_zero = false;
    let mut seen_nonzero = false;
    for (i, h) in states.iter().enumerate() {
        let session = format!("s{i}");
        model.send(&WireMessage::State { session: session.clone(), vector: h.clone(), domain: None });
        let offline = bundle.decide(h, Mode::Full, None, SEED ^ fnv1a(&session)).unwrap();
        match model.recv().unwrap() {
            WireMessage::Steer { session: s, gate, alpha, delta } => {
                assert_eq!(s, session);
                assert_eq!(gate, offline.gate);
                assert_eq!(alpha, 4.0);
                if gate == 0 {
                    seen_zero = true;
                    assert!(delta.is_none());
                    assert_eq!(apply_injection(h, &offline).unwrap(), *h);
                } else {
                    seen_nonzero = true;
                    let delta = delta.unwrap();
                    let same_bits = delta.iter().zip(&offline.delta).all(|(a, b)| a.to_bits() == b.to_bits());
                    assert!(same_bits && delta.len() == h.len(), "session {session}");
                    let injected: Vec<f32> = h.iter().zip(&delta).map(|(x, d)| x + d).collect();
                    assert_eq!(injected, apply_injection(h, &offline).unwrap());
                }
            }
            other => panic!("expected steer, got {other:?}"),
        }
        model.send(&WireMessage::Result { session, text: "done".into() });
    }
    assert!(seen_nonzero);
    assert!(seen_zero, "no abstaining decision among the sampled states");
    model.send(&WireMessage::Bye);
    assert_eq!(model.recv(), Some(WireMessage::Bye));
}

#[test]
fn dim_mismatch_is_rejected() {
    let (bundle, _) = bundle_and_states();
    let addr = start(bundle.clone());
    let mut model = MockModel::connect(addr);
    match model.hello(bundle.dim + 8, bundle.layer) {
        WireMessage::Error { reason, .. } => assert!(reason.starts_with("dim mismatch"), "{reason}"),
        other => panic!("{other:?}"),
    }
    assert_eq!(model.recv(), None, "connection should close");

    let mut model = MockModel::connect(addr);
    model.hello(bundle.dim, bundle.layer);
    model.send(&WireMessage::State { session: "short".into(), vector: vec![0.0; bundle.dim - 1], domain: None });
    match model.recv().unwrap() {
        WireMessage::Error { session, reason } => {
            assert_eq!(session.as_deref(), Some("short"));
            assert!(reason.starts_with("dim mismatch"));
        }
        other => panic!("{other:?}"),
    }
    // the aborted session cannot be retried
    model.send(&WireMessage::State { session: "short".into(), vector: vec![0.0; bundle.dim], domain: None });
    assert!(matches!(model.recv().unwrap(), WireMessage::Error { .. }));
}

#[test]
fn second_state_for_a_session_is_rejected() {
    let (bundle, states) = bundle_and_states();
    let addr = start(bundle.clone());
    let mut model = MockModel::connect(addr);
    model.hello(bundle.dim, bundle.layer);
    let state = WireMessage::State { session: "once".into(), vector: states[0].clone(), domain: None };
    model.send(&state);
    assert!(matches!(model.recv().unwrap(), WireMessage::Steer { .. }));
    model.send(&state);
    match model.recv().unwrap() {
        WireMessage::Error { session, reason } => {
            assert_eq!(session.as_deref(), Some("once"));
            assert!(reason.contains("duplicate"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn malformed_line_reports_byte_offset_and_session_continues() {
    let (bundle, states) = bundle_and_states();
    let addr = start(bundle.clone());
    let mut model = MockModel::connect(addr);
    let hello = WireMessage::Hello { dim: bundle.dim, layer: bundle.layer, model_id: "mock".into(), protocol: None };
    let first = hello.to_line();
    model.send_raw(&first);
    model.recv().unwrap();
    model.send_raw("{\"type\": \"state\", oops}\n");
    match model.recv().unwrap() {
        WireMessage::Error { session: None, reason } => {
            let at: usize = reason.split("at byte ").nth(1).unwrap().split(':').next().unwrap().parse().unwrap();
            assert_eq!(at, first.len() + "{\"type\": \"state\", ".len(), "{reason}");
        }
        other => panic!("{other:?}"),
    }
    model.send(&WireMessage::State { session: "after".into(), vector: states[0].clone(), domain: None });
    assert!(matches!(model.recv().unwrap(), WireMessage::Steer { .. }));
}
