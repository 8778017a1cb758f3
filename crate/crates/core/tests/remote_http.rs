use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use topictrend::annotate::{AnnotateError, AnnotatorConfig, RemoteAnnotator};

const TEXT: &str = "Cloud computing meets the Internet of Things";
const BODY: &str = r#"{"annotations":[
  {"spot":"cloud computing","start":0,"end":15,"id":19541494,"title":"Cloud computing","rho":0.45},
  {"spot":"internet of things","start":26,"end":44,"id":19841011,"title":"Internet of things","rho":0.38},
  {"spot":"meets","start":16,"end":21,"id":1,"title":"Meeting","rho":0.05}
]}"#;

/// Serve one canned `(status, body)` per connection and record each
/// request body.
fn serve(replies: Vec<(u16, &'static str)>) -> (String, Arc<Mutex<Vec<String>>>, thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/tag", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    let handle = thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut content_length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        content_length = v.trim().parse().unwrap();
                    }
                }
            }
            let mut buf = vec![0; content_length];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(String::from_utf8(buf).unwrap());
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let mut stream = reader.into_inner();
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (url, seen, handle)
}

fn config(url: String) -> AnnotatorConfig {
    AnnotatorConfig {
        endpoint_url: url,
        api_token: Some("secret-token".into()),
        backoff_ms: 5,
        timeout_ms: 5_000,
        ..AnnotatorConfig::default()
    }
}

#[test]
fn rate_limit_then_success_over_http() {
    let (url, seen, handle) = serve(vec![(429, "{}"), (200, BODY)]);
    let annotator = RemoteAnnotator::new(config(url)).unwrap();
    let out = annotator.annotate("d1", TEXT).unwrap();
    handle.join().unwrap();

    assert_eq!(out.retries, 1);
    let spans: Vec<_> = out.annotations.iter().map(|a| (a.start, a.end, a.entity_title.as_str())).collect();
    assert_eq!(spans, [(0, 15, "Cloud computing"), (26, 44, "Internet of things")]);

    let bodies = seen.lock().unwrap();
    assert_eq!(bodies.len(), 2);
    for field in [
        "text=Cloud+computing+meets+the+Internet+of+Things",
        "lang=en",
        "epsilon=0.427",
        "long_text=10",
        "token=secret-token",
    ] {
        assert!(bodies[1].split('&').any(|kv| kv == field), "missing {field} in {}", bodies[1]);
    }
}

#[test]
fn unauthorized_over_http() {
    let (url, _, handle) = serve(vec![(401, "{}")]);
    let err = RemoteAnnotator::new(config(url)).unwrap().annotate("d1", TEXT).unwrap_err();
    handle.join().unwrap();
    assert!(matches!(err, AnnotateError::AuthError(401)));
}

#[test]
fn connection_refused_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = RemoteAnnotator::new(config(format!("http://127.0.0.1:{port}/tag")))
        .unwrap()
        .annotate("d1", TEXT)
        .unwrap_err();
    assert!(matches!(err, AnnotateError::Transport(_)));
}
