use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use stabsel_cli::server::Server;

struct Reply {
    status: u16,
    content_type: String,
    body: String,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_str(&self.body).unwrap_or_else(|e| panic!("{e}: {}", self.body))
    }
}

fn request(addr: SocketAddr, method: &str, path: &str, body: Option<&str>) -> Reply {
    let mut s = TcpStream::connect(addr).unwrap();
    let body = body.unwrap_or("");
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut raw = String::new();
    s.read_to_string(&mut raw).unwrap();
    let (head, body) = raw.split_once("\r\n\r\n").expect("complete response");
    let status = head.split_whitespace().nth(1).unwrap().parse().unwrap();
    let content_type = head
        .lines()
        .find_map(|l| l.strip_prefix("Content-Type: "))
        .unwrap_or_default()
        .to_string();
    Reply { status, content_type, body: body.to_string() }
}

fn get(addr: SocketAddr, path: &str) -> Reply {
    request(addr, "GET", path, None)
}

fn post(addr: SocketAddr, path: &str, body: &str) -> Reply {
    request(addr, "POST", path, Some(body))
}

fn start(ui_dir: Option<std::path::PathBuf>) -> (Server, SocketAddr) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let mut server = Server::from_listener(listener, ui_dir).unwrap();
    server.start();
    let addr = server.local_addr().unwrap();
    (server, addr)
}

fn matrix_csv(counts: &[usize], b: usize) -> String {
    let names: Vec<String> = (1..=counts.len()).map(|j| format!("x{j}")).collect();
    let mut csv = names.join(",") + "\n";
    for i in 0..b {
        let row: Vec<&str> = counts.iter().map(|&c| if i < c { "1" } else { "0" }).collect();
        csv += &(row.join(",") + "\n");
    }
    csv
}

fn matrix_job(addr: SocketAddr, counts: &[usize], b: usize) -> String {
    let body = json!({ "dataset": { "kind": "matrix", "csv": matrix_csv(counts, b) } }).to_string();
    let r = post(addr, "/jobs", &body);
    assert_eq!(r.status, 202, "{}", r.body);
    r.json()["id"].as_str().unwrap().to_string()
}

fn wait_done(addr: SocketAddr, id: &str) -> Value {
    let deadline = Instant::now() + Duration::from_secs(120);
    loop {
        let v = get(addr, &format!("/jobs/{id}")).json();
        if v["status"] != "running" {
            return v;
        }
        assert!(Instant::now() < deadline, "job {id} never finished");
        std::thread::sleep(Duration::from_millis(50));
    }
}

#[test]
fn health() {
    let (server, addr) = start(None);
    let r = get(addr, "/health");
    assert_eq!(r.status, 200);
    assert_eq!(r.json()["status"], "ok");
    assert!(r.content_type.starts_with("application/json"));
    server.shutdown();
}

#[test]
fn synthetic_job_lifecycle() {
    let (server, addr) = start(None);
    let body = json!({
        "dataset": { "kind": "synthetic", "scenario": "correlated-blocks", "n": 40, "p": 30, "seed": 2 },
        "selector": { "kind": "fixed", "alpha_mix": 0.2, "lambda": 0.4 },
        "stability": { "b": 20, "seed": 3 }
    })
    .to_string();
    let first = post(addr, "/jobs", &body);
    assert_eq!(first.status, 202, "{}", first.body);
    let id = first.json()["id"].as_str().unwrap().to_string();
    let second = post(addr, "/jobs", &body).json()["id"].as_str().unwrap().to_string();
    assert_ne!(id, second);

    let job = wait_done(addr, &id);
    assert_eq!(job["status"], "done", "{job}");
    assert_eq!(job["b"], 20);
    assert_eq!(job["p"], 30);
    assert_eq!(job["lambda"], 0.4);
    let counts: Vec<u64> = serde_json::from_value(job["counts"].clone()).unwrap();
    assert_eq!(counts.len(), 30);

    let m = get(addr, &format!("/jobs/{id}/matrix"));
    assert_eq!(m.status, 200);
    assert_eq!(m.content_type, "text/csv");
    assert_eq!(m.body.lines().count(), 21);
    let column_sums: Vec<u64> = (0..30)
        .map(|j| m.body.lines().skip(1).filter(|l| l.split(',').nth(j) == Some("1")).count() as u64)
        .collect();
    assert_eq!(column_sums, counts);

    // Same request, same seeds: same matrix.
    wait_done(addr, &second);
    assert_eq!(get(addr, &format!("/jobs/{second}/matrix")).body, m.body);
    server.shutdown();
}

#[test]
fn job_validation() {
    let (server, addr) = start(None);
    let r = post(addr, "/jobs", r#"{"dataset": {"kind": "synthetic", "scenario": "decaying"}, "stability": {"b": 0}}"#);
    assert_eq!(r.status, 422, "{}", r.body);
    assert_eq!(r.json()["code"], "invalid_parameters");
    assert!(r.json()["message"].as_str().unwrap().contains('b'));

    let r = post(addr, "/jobs", "{not json");
    assert_eq!(r.status, 400);
    assert!(r.json()["message"].is_string());

    let r = post(addr, "/jobs", r#"{"dataset": {"kind": "nope"}, "stability": {"b": 5}}"#);
    assert_eq!(r.status, 400);

    let r = post(addr, "/jobs", r#"{"dataset": {"kind": "csv", "path": "/no/such.csv"}, "stability": {"b": 5}}"#);
    assert_eq!(r.status, 422);
    assert!(r.body.contains("/no/such.csv"));

    let r = post(addr, "/jobs", r#"{"dataset": {"kind": "synthetic", "scenario": "decaying"}}"#);
    assert_eq!(r.status, 422);
    server.shutdown();
}

#[test]
fn posteriors_from_stored_matrix() {
    let (server, addr) = start(None);
    let id = matrix_job(addr, &[53, 55, 60, 2], 100);
    let path = format!("/jobs/{id}/posteriors");

    let body = json!({ "priors": [{ "name": "x1", "zeta": 0.5, "xi": 0.7 }], "pi_thr": 0.6 }).to_string();
    let r = post(addr, &path, &body);
    assert_eq!(r.status, 200, "{}", r.body);
    let v = r.json();
    let x1 = v["rows"].as_array().unwrap().iter().find(|row| row["name"] == "x1").unwrap();
    assert_eq!(x1["mean"], 0.615);
    assert_eq!(x1["n_j"], 53);
    assert_eq!(x1["prior"]["alpha"], 70.0);
    assert_eq!(x1["selected"], true);
    assert_eq!(x1["frequentist_selected"], false);
    // Identical requests give identical bodies.
    assert_eq!(post(addr, &path, &body).body, r.body);

    // No priors: every variable gets Beta(1, 1).
    let flat = post(addr, &path, "{}").json();
    for row in flat["rows"].as_array().unwrap() {
        let n = row["n_j"].as_f64().unwrap();
        assert_eq!(row["mean"].as_f64().unwrap(), (1.0 + n) / 102.0);
    }

    let r = post(addr, &path, r#"{"priors": [{"name": "x1", "zeta": 0.6, "xi": 0.7}]}"#);
    assert_eq!(r.status, 422);
    assert!(r.json()["message"].as_str().unwrap().contains("0.5"), "{}", r.body);

    let r = post(addr, &path, r#"{"priors": [{"name": "zz", "alpha": 2, "beta": 2}]}"#);
    assert_eq!(r.status, 422);
    let r = post(addr, &path, r#"{"pi_thr": 1.2}"#);
    assert_eq!(r.status, 422);
    let r = post(addr, "/jobs/ffff/posteriors", "{}");
    assert_eq!(r.status, 404);
    server.shutdown();
}

#[test]
fn unfinished_job_conflicts() {
    let (server, addr) = start(None);
    // Cross-validated job on the full-size scenario: slow enough to still be running.
    let body = json!({
        "dataset": { "kind": "synthetic", "scenario": "correlated-blocks", "seed": 1 },
        "stability": { "b": 200 }
    })
    .to_string();
    let id = post(addr, "/jobs", &body).json()["id"].as_str().unwrap().to_string();
    let r = post(addr, &format!("/jobs/{id}/posteriors"), "{}");
    assert_eq!(r.status, 409, "{}", r.body);
    assert_eq!(r.json()["code"], "job_not_done");
    assert_eq!(get(addr, &format!("/jobs/{id}/matrix")).status, 409);
    server.shutdown();
}

#[test]
fn variance_surface_endpoint() {
    let (server, addr) = start(None);
    let r = get(addr, "/variance-surface?b=100&n=50&gamma=100");
    assert_eq!(r.status, 200, "{}", r.body);
    let v = r.json();
    let row = &v["rows"][0];
    let informative: Vec<f64> = serde_json::from_value(row["informative"].clone()).unwrap();
    let (k, max) = informative.iter().enumerate().fold((0, 0.0), |acc, (k, &x)| if x > acc.1 { (k, x) } else { acc });
    assert_eq!(v["alpha_grid"][k], 50.0);
    assert!((max - 0.0012438).abs() < 1e-7, "{max}");
    assert!((row["non_informative"].as_f64().unwrap() - 0.0024272).abs() < 1e-7);

    let v = get(addr, "/variance-surface?b=100&n=10").json();
    assert_eq!(v["rows"][0]["argmax_alpha"], 90.0);
    assert_eq!(v["gamma"], 100);

    assert_eq!(get(addr, "/variance-surface?b=100&n=101").status, 422);
    assert_eq!(get(addr, "/variance-surface?n=5").status, 400);
    assert_eq!(get(addr, "/variance-surface?b=ten").status, 400);
    server.shutdown();
}

#[test]
fn elicit_preview() {
    let (server, addr) = start(None);
    let v = get(addr, "/elicit?zeta=0.5&xi=0.7&b=100").json();
    assert_eq!((v["alpha"].as_f64(), v["beta"].as_f64()), (Some(70.0), Some(30.0)));
    assert_eq!(get(addr, "/elicit?zeta=0.6&xi=0.7&b=100").status, 422);
    server.shutdown();
}

#[test]
fn ui_bundle_optional() {
    let (server, addr) = start(None);
    let r = get(addr, "/");
    assert_eq!(r.status, 404);
    assert_eq!(r.json()["code"], "ui_not_built");
    server.shutdown();

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<h1>ui</h1>").unwrap();
    std::fs::create_dir(dir.path().join("assets")).unwrap();
    std::fs::write(dir.path().join("assets/app.js"), "1").unwrap();
    let (server, addr) = start(Some(dir.path().to_path_buf()));
    let r = get(addr, "/");
    assert_eq!((r.status, r.body.as_str()), (200, "<h1>ui</h1>"));
    assert!(r.content_type.starts_with("text/html"));
    assert_eq!(get(addr, "/assets/app.js").content_type, "text/javascript");
    assert_eq!(get(addr, "/assets/../../etc/passwd").status, 404);
    assert_eq!(get(addr, "/health").status, 200);
    server.shutdown();
}

#[test]
fn unknown_routes() {
    let (server, addr) = start(None);
    assert_eq!(request(addr, "DELETE", "/jobs", None).status, 405);
    assert_eq!(post(addr, "/nowhere", "{}").status, 404);
    assert_eq!(get(addr, "/jobs/unknown").status, 404);
    server.shutdown();
}
