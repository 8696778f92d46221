use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use flowlens::forest::evaluate;
use flowlens::pipelines::corpus::payload_corpus;
use flowlens::pipelines::{bundled_model, Profiles};

fn flowlens(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowlens"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run flowlens")
}

fn with_stdin(args: &[&str], dir: &Path, input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_flowlens"))
        .args(args)
        .current_dir(dir)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn flowlens");
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn ok(o: &Output) -> String {
    assert!(
        o.status.success(),
        "exit {:?}\nstderr: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Rows with the trailing latency column removed.
fn without_latency(s: &str) -> Vec<String> {
    s.lines().map(|l| l.rsplit_once(',').map_or(l, |(a, _)| a).to_string()).collect()
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let d = tempfile::tempdir().unwrap();
    let o = flowlens(&["--bogus"], d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    let o = flowlens(&["bench", "nope"], d.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_one_without_panicking() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("junk.pcap"), b"not a pcap at all").unwrap();
    for args in [
        &["classify", "missing.pcap", "--model", "missing.trfm"][..],
        &["extract", "junk.pcap"],
        &["detect", "--threshold", "2", "missing.txt"],
        &["--min-pkts", "0", "extract", "junk.pcap"],
    ] {
        let o = flowlens(args, d.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.starts_with("error: ") && !err.contains("panicked"), "{err}");
    }
}

#[test]
fn classify_bundled_two_app_trace() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(&flowlens(&["--seed", "1", "synth", "apps2", "-o", "train.pcap"], p));
    ok(&flowlens(&["--seed", "2", "synth", "apps2", "-o", "test.pcap"], p));
    ok(&flowlens(&["extract", "train.pcap", "--truth", "train.pcap.truth", "-o", "train.rows"], p));
    ok(&flowlens(&["train", "train.rows", "-o", "m.trfm"], p));
    let out = ok(&flowlens(&["classify", "test.pcap", "--model", "m.trfm", "--truth", "test.pcap.truth"], p));
    let last = out.lines().last().unwrap();
    let acc: f64 = last.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!(last.starts_with("accuracy") && acc >= 0.95, "{last}");

    // sharding changes nothing but timing
    let one = ok(&flowlens(&["--format", "rows", "classify", "test.pcap", "--model", "m.trfm"], p));
    let four = ok(&flowlens(&["--format", "rows", "--jobs", "4", "classify", "test.pcap", "--model", "m.trfm"], p));
    assert_eq!(without_latency(&one), without_latency(&four));
    assert_eq!(one.lines().next(), Some("key,label,confidence,packets,trigger,latency_us"));
    assert_eq!(one.lines().count(), 401);

    // deterministic extraction and training
    ok(&flowlens(&["extract", "train.pcap", "--truth", "train.pcap.truth", "-o", "again.rows"], p));
    assert_eq!(std::fs::read(p.join("train.rows")).unwrap(), std::fs::read(p.join("again.rows")).unwrap());
    ok(&flowlens(&["train", "train.rows", "-o", "m2.trfm"], p));
    assert_eq!(std::fs::read(p.join("m.trfm")).unwrap(), std::fs::read(p.join("m2.trfm")).unwrap());

    let eval = ok(&flowlens(&["--format", "rows", "eval", "m.trfm", "train.rows"], p));
    assert!(eval.contains("accuracy"), "{eval}");
    let red = ok(&flowlens(&["--format", "rows", "reduce", "m.trfm", "train.rows", "-o", "r.trfm"], p));
    assert!(red.starts_with("dropped,"), "{red}");
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(&flowlens(&["--seed", "3", "synth", "apps2", "--flows-per-app", "20", "-o", "t.pcap"], p));
    ok(&flowlens(&["extract", "t.pcap", "--truth", "t.pcap.truth", "-o", "t.rows"], p));
    ok(&flowlens(&["train", "t.rows", "-o", "m.trfm", "--trees", "5"], p));
    std::fs::write(p.join("c.toml"), "min_pkts = 4\nformat = \"rows\"\n").unwrap();
    let packets = |out: &str| -> Vec<String> { out.lines().skip(1).map(|l| l.split(',').nth(3).unwrap().to_string()).collect() };
    let from_file = ok(&flowlens(&["--config", "c.toml", "classify", "t.pcap", "--model", "m.trfm"], p));
    assert!(packets(&from_file).iter().all(|n| n == "4"));
    let from_flag = ok(&flowlens(&["--config", "c.toml", "--min-pkts", "6", "classify", "t.pcap", "--model", "m.trfm"], p));
    assert!(packets(&from_flag).iter().all(|n| n == "6"));

    std::fs::write(p.join("bad.toml"), "colour = 1\n").unwrap();
    let o = flowlens(&["--config", "bad.toml", "eval", "m.trfm", "t.rows"], p);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn detect_rows_are_stable() {
    let d = tempfile::tempdir().unwrap();
    let input = "1' OR '1'='1\n<script>alert(1)</script>\nhello world 42\n\n";
    let out = ok(&with_stdin(&["--format", "rows", "detect"], d.path(), input));
    assert_eq!(
        without_latency(&out),
        [
            "id,verdict,confidence,tokens",
            "1,sqli,0.9694,18",
            "2,xss,1.0000,19",
            "3,benign,1.0000,6",
            "4,benign,0.9900,0",
        ]
    );
    // percent-encoded input only matches once decoded
    let enc = "%3Cscript%3Ealert(1)%3C%2Fscript%3E\n";
    let raw = ok(&with_stdin(&["--format", "rows", "detect"], d.path(), enc));
    let dec = ok(&with_stdin(&["--format", "rows", "detect", "--url-decode"], d.path(), enc));
    assert!(dec.lines().nth(1).unwrap().starts_with("1,xss,"), "{dec}");
    assert_ne!(without_latency(&raw), without_latency(&dec));
}

#[test]
fn detect_confusion_matches_evaluate() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(&flowlens(&["synth", "corpus", "-o", "corpus.tsv"], p));
    let out = ok(&flowlens(&["--format", "rows", "detect", "--labeled", "corpus.tsv"], p));
    let ds = Profiles::bundled().dataset(&payload_corpus());
    let report = evaluate(bundled_model(), &ds).unwrap();
    assert!(out.contains(&report.to_rows()), "{out}");
    assert!(out.lines().last().unwrap().starts_with("fpr,"));
}

#[test]
fn custom_profiles_need_their_own_model() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let prof = concat!(env!("CARGO_MANIFEST_DIR"), "/profiles/sqli.prof");
    let out = ok(&flowlens(&["compile", prof, "-o", "sqli.tdfa"], p));
    assert!(out.contains("states"));
    let o = with_stdin(&["detect", "--sqli-profile", "sqli.tdfa"], p, "x\n");
    assert_eq!(o.status.code(), Some(1));

    ok(&flowlens(&["synth", "corpus", "-o", "corpus.tsv"], p));
    ok(&flowlens(&["train", "--payloads", "corpus.tsv", "-o", "d.trfm", "--trees", "20"], p));
    let out = ok(&with_stdin(
        &["--format", "rows", "detect", "--sqli-profile", "sqli.tdfa", "--model", "d.trfm"],
        p,
        "1' OR '1'='1\n",
    ));
    assert!(out.lines().nth(1).unwrap().starts_with("1,sqli,"), "{out}");
    // a flow model is not a detector
    ok(&flowlens(&["--seed", "3", "synth", "apps2", "--flows-per-app", "20", "-o", "t.pcap"], p));
    ok(&flowlens(&["extract", "t.pcap", "--truth", "t.pcap.truth", "-o", "t.rows"], p));
    ok(&flowlens(&["train", "t.rows", "-o", "f.trfm", "--trees", "5"], p));
    let o = with_stdin(&["detect", "--model", "f.trfm"], p, "x\n");
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn label_then_apply() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(&flowlens(&["--seed", "5", "synth", "apps2", "--flows-per-app", "60", "-o", "t.pcap"], p));
    let out = ok(&flowlens(&["label", "t.pcap", "-o", "report.txt"], p));
    assert!(out.starts_with("k = 2"), "{out}");
    std::fs::write(p.join("assign.txt"), "# names from the tips\n0=first\n1=discard\n").unwrap();
    ok(&flowlens(&["apply-labels", "report.txt", "assign.txt", "-o", "labeled.rows"], p));
    let rows = std::fs::read_to_string(p.join("labeled.rows")).unwrap();
    assert_eq!(rows.lines().count(), 61);
    assert!(rows.lines().skip(1).all(|l| l.split(',').nth(1) == Some("first")));

    std::fs::write(p.join("partial.txt"), "0=first\n").unwrap();
    let o = flowlens(&["apply-labels", "report.txt", "partial.txt"], p);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bench_reports_emit_rows() {
    let d = tempfile::tempdir().unwrap();
    let out = ok(&flowlens(&["--format", "rows", "bench", "hist", "--iters", "2"], d.path()));
    assert_eq!(out.lines().next(), Some("category,backend,ns_per_lane,speedup"));
    assert!(out.contains("cat4,portable,"));
    let out = ok(&flowlens(&["--format", "rows", "bench", "tokenize"], d.path()));
    assert!(out.lines().nth(1).unwrap().starts_with("tokenize_request,1000,"), "{out}");
}
