use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::thread;

use divbo_harness::openml::{fetch_from, fetch_openml, is_cached, FetchOutcome};
use divbo_harness::{ingest_csv, HarnessError};
use tempfile::TempDir;

const QUAKE_CSV: &str = "focal_depth,latitude,longitude,richter\n\
    10,1.5,2.5,5.9\n\
    20,3.5,4.5,6.1\n\
    30,-1.0,7.25,5.9\n";

fn respond(path: &str) -> (u16, String) {
    match path {
        "/api/v1/json/data/772" => (
            200,
            r#"{"data_set_description":{"id":"772","name":"quake","file_id":"52","default_target_attribute":"richter"}}"#
                .into(),
        ),
        "/data/get_csv/52" => (200, QUAKE_CSV.into()),
        "/api/v1/json/data/5" => (200, r#"{"data_set_description":{"name":"ragged","file_id":6}}"#.into()),
        "/data/get_csv/6" => (200, "a,b\n1,2\n3\n".into()),
        "/api/v1/json/data/7" => (200, "<html>not json</html>".into()),
        _ => (412, r#"{"error":{"code":"111","message":"Unknown dataset"}}"#.into()),
    }
}

/// Minimal HTTP/1.1 server answering from `respond`, one connection at a
/// time, closed after each response.
fn stub_server() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            if reader.read_line(&mut request_line).is_err() {
                continue;
            }
            loop {
                let mut header = String::new();
                if reader.read_line(&mut header).is_err() || header.trim().is_empty() {
                    break;
                }
            }
            let path = request_line.split_whitespace().nth(1).unwrap_or("/").to_string();
            let (status, body) = respond(&path);
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    format!("http://{addr}")
}

#[test]
fn downloads_and_writes_sidecars() {
    let base = stub_server();
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("quake.csv");
    let FetchOutcome::Downloaded(info) = fetch_from(&base, 772, &out).unwrap() else {
        panic!("first fetch must download");
    };
    assert_eq!(info.name, "quake");
    assert_eq!(info.file_id, 52);
    assert_eq!(info.default_target.as_deref(), Some("richter"));
    assert_eq!(std::fs::read_to_string(&out).unwrap(), QUAKE_CSV);
    assert!(is_cached(&out));
    assert!(dir.path().join("quake.csv.meta.json").exists());
    assert!(!dir.path().join("quake.csv.part").exists());

    // The file reads back through the normal ingestion path.
    let ds = ingest_csv(&out, "richter", 0).unwrap();
    assert_eq!(ds.features.n_cols(), 3);

    assert_eq!(fetch_from(&base, 772, &out).unwrap(), FetchOutcome::Cached);
}

#[test]
fn changed_file_is_fetched_again() {
    let base = stub_server();
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("q.csv");
    fetch_from(&base, 772, &out).unwrap();
    std::fs::write(&out, "tampered").unwrap();
    assert!(!is_cached(&out));
    assert!(matches!(fetch_from(&base, 772, &out).unwrap(), FetchOutcome::Downloaded(_)));
    assert_eq!(std::fs::read_to_string(&out).unwrap(), QUAKE_CSV);
}

#[test]
fn unknown_id_writes_nothing() {
    let base = stub_server();
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("missing.csv");
    let err = fetch_from(&base, 999_999, &out).unwrap_err();
    assert!(matches!(err, HarnessError::UnknownDataset(999_999)));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn malformed_payloads_are_rejected() {
    let base = stub_server();
    let dir = TempDir::new().unwrap();
    for id in [5, 7] {
        let out = dir.path().join(format!("{id}.csv"));
        let err = fetch_from(&base, id, &out).unwrap_err();
        assert!(matches!(err, HarnessError::MalformedPayload(_)), "{id}: {err}");
        assert_eq!(err.code(), "malformed_payload");
    }
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn unreachable_host_is_a_network_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let dir = TempDir::new().unwrap();
    let err = fetch_from(&format!("http://{addr}"), 772, dir.path().join("x.csv")).unwrap_err();
    assert!(matches!(err, HarnessError::Network(_)));
    assert_eq!(err.exit_code(), 20);
}

#[test]
#[ignore = "needs access to openml.org"]
fn live_quake() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("quake.csv");
    let FetchOutcome::Downloaded(info) = fetch_openml(772, &out).unwrap() else {
        panic!("fresh directory");
    };
    let ds = ingest_csv(&out, info.default_target.as_deref().unwrap(), 0).unwrap();
    assert_eq!(ds.labels.len() + ds.dropped_rows, 2178);
    assert_eq!(ds.features.n_cols(), 3);
}
