use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn citehist(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_citehist"))
        .args(args)
        .current_dir(dir)
        .env_remove("CITEHIST_HOME")
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn parsed_dir(name: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let out = citehist(dir.path(), &["parse", fixture(name).to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    dir
}

#[test]
fn parse_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = citehist(dir.path(), &["parse", fixture("mini.txt").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).trim(), "5 records, 23 cited references, 0 warnings");
    assert!(dir.path().join("citehist-project.json").exists());

    let out = citehist(dir.path(), &["parse", fixture("golden_tr.txt").to_str().unwrap()]);
    assert_eq!(stdout(&out).trim(), "5 records, 20 cited references, 1 warning");
    assert!(stderr(&out).contains("warning"));
}

#[test]
fn analysis_before_parse_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = citehist(dir.path(), &["rpys"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("no corpus loaded"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_one_with_help() {
    let dir = tempfile::tempdir().unwrap();
    let out = citehist(dir.path(), &["graph", "teleport"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("Usage"), "{}", stderr(&out));

    let dir = parsed_dir("mini.txt");
    let out = citehist(dir.path(), &["--threshold", "1.5", "disambig", "auto"]);
    assert_eq!(out.status.code(), Some(1));
    let out = citehist(dir.path(), &["--segments", "bins:x", "multi-rpys"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_export_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = citehist(dir.path(), &["parse", "does-not-exist.txt"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn disconnected_shortest_path_is_not_an_error() {
    let dir = parsed_dir("mini.txt");
    let out = citehist(dir.path(), &["graph", "shortest", "--from", "WOS:A1965000001", "--to", "WOS:A1990000005"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).starts_with("no path between"));

    let out = citehist(dir.path(), &["graph", "shortest", "--from", "WOS:A1965000001", "--to", "WOS:A1986000004"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).lines().count(), 2);
}

#[test]
fn env_var_sets_default_project_location() {
    let home = tempfile::tempdir().unwrap();
    let cwd = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_citehist"))
            .args(args)
            .current_dir(cwd.path())
            .env("CITEHIST_HOME", home.path())
            .output()
            .unwrap()
    };
    assert!(run(&["parse", fixture("mini.txt").to_str().unwrap()]).status.success());
    assert!(home.path().join("citehist-project.json").exists());
    assert!(!cwd.path().join("citehist-project.json").exists());
    assert!(run(&["stats"]).status.success());
}

#[test]
fn review_round_trip_records_decisions() {
    let dir = parsed_dir("mini.txt");
    let out = citehist(dir.path(), &["disambig", "auto"]);
    assert!(stdout(&out).contains("1 review candidates"), "{}", stdout(&out));

    let out = citehist(dir.path(), &["disambig", "review-export", "--out", "review.txt"]);
    assert!(out.status.success());
    let review = std::fs::read_to_string(dir.path().join("review.txt")).unwrap();
    assert!(review.contains("LOTKA"));
    std::fs::write(dir.path().join("review.txt"), review.replacen("action: pending", "action: accept", 1)).unwrap();

    let out = citehist(dir.path(), &["disambig", "review-import", "review.txt", "--actor", "tester"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).starts_with("1 decisions imported"));
    let project = std::fs::read_to_string(dir.path().join("citehist-project.json")).unwrap();
    assert!(project.contains("\"actor\": \"tester\""));

    let out = citehist(dir.path(), &["disambig", "auto"]);
    assert!(stdout(&out).contains("0 review candidates"), "{}", stdout(&out));
}

#[test]
fn held_lock_blocks_writers_only() {
    let dir = parsed_dir("mini.txt");
    let lock = dir.path().join("citehist-project.json.lock");
    std::fs::write(&lock, format!("other {}\n", std::process::id())).unwrap();

    let out = citehist(dir.path(), &["parse", fixture("mini.txt").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("lock"), "{}", stderr(&out));
    // readers don't need the lock
    assert!(citehist(dir.path(), &["rpys"]).status.success());

    std::fs::remove_file(&lock).unwrap();
    assert!(citehist(dir.path(), &["parse", fixture("mini.txt").to_str().unwrap()]).status.success());
}

#[test]
fn pajek_export_lists_vertices_and_arcs() {
    let dir = parsed_dir("mini.txt");
    let out = citehist(dir.path(), &["export", "pajek"]);
    let text = stdout(&out);
    assert!(text.starts_with("*Vertices 5\n"), "{text}");
    assert_eq!(text.lines().filter(|l| !l.starts_with('*')).count(), 5 + 5);
}

struct Server(Child, String);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn start_server(dir: &Path) -> Server {
    let mut child = Command::new(env!("CARGO_BIN_EXE_citehist"))
        .args(["serve", "--port", "0"])
        .current_dir(dir)
        .env_remove("CITEHIST_HOME")
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on http://").expect("listening line").to_string();
    Server(child, addr)
}

fn http(addr: &str, method: &str, path: &str, body: &str) -> (u16, String) {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut resp = String::new();
    s.read_to_string(&mut resp).unwrap();
    let status = resp[9..12].parse().unwrap();
    let body = resp.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
    (status, body)
}

fn fingerprint(summary: &str) -> String {
    let start = summary.find("\"fingerprint\":\"").unwrap() + 15;
    summary[start..start + 16].to_string()
}

#[test]
fn acknowledged_decision_survives_hard_kill() {
    let dir = parsed_dir("variants.txt");
    let server = start_server(dir.path());
    let (status, summary) = http(&server.1, "GET", "/api/summary", "");
    assert_eq!(status, 200);
    let fp = fingerprint(&summary);
    let body = format!(
        r#"{{"fingerprint":"{fp}","decision":{{"kind":"merge","operands":["LOTKA A. J., 1926, J WASHINGTON ACAD SC, V16, P317","LOTKA AJ, 1926, J WASH ACAD SCI, P16"]}}}}"#
    );
    let (status, reply) = http(&server.1, "POST", "/api/ledger", &body);
    assert_eq!(status, 200, "{reply}");
    let new_fp = fingerprint(&reply);
    drop(server); // SIGKILL

    let server = start_server(dir.path());
    let (_, summary) = http(&server.1, "GET", "/api/summary", "");
    assert_eq!(fingerprint(&summary), new_fp);
    let (_, top) = http(&server.1, "GET", "/api/top?min_count=1&reviewed_only=true", "");
    assert!(top.contains(r#"{"count":7,"reference":"LOTKA A. J., 1926, J WASHINGTON ACAD SC, V16, P317"}"#), "{top}");
    assert!(!top.contains("LOTKA AJ, 1926"), "{top}");
    // the stale fingerprint is rejected after restart
    let (status, _) = http(&server.1, "POST", "/api/ledger", &body);
    assert_eq!(status, 409);
}

#[test]
fn top_layer_table() {
    let dir = parsed_dir("mini.txt");
    let out = citehist(dir.path(), &["graph", "build", "--top", "2"]);
    assert_eq!(
        stdout(&out),
        "rank,id,label,lcs,gcs\n\
         1,WOS:A1965000001,\"PRICE DJD, 1965, SCIENCE, V149, P510\",2,1200\n\
         2,WOS:A1972000002,\"GARFIELD E, 1972, SCIENCE, V178, P471\",2,2500\n"
    );
    assert_eq!(citehist(dir.path(), &["graph", "build", "--top", "0"]).status.code(), Some(1));
}
