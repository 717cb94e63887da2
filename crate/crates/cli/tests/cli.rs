use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn retrogen() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_retrogen"));
    c.env_remove("RETROGEN_BACKEND_URL");
    c
}

fn run(c: &mut Command) -> Output {
    c.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, r#"{"beam_width": 3, "max_length": 12, "question_budget": 2}"#).unwrap();
    p
}

fn bbart(dir: &Path, extra: &[&str]) -> Output {
    run(retrogen()
        .args(["generate", "bbart", "--iterations", "2", "--seed", "4"])
        .arg("--ending")
        .arg(fixtures().join("ending.txt"))
        .arg("--config")
        .arg(small_config(dir))
        .args(extra))
}

#[test]
fn mock_url_seed_matches_run_seed() {
    let d = tempfile::tempdir().unwrap();
    let a = bbart(d.path(), &["--out", d.path().join("a").to_str().unwrap()]);
    let b = bbart(d.path(), &["--backend-url", "mock://4", "--out", d.path().join("b").to_str().unwrap()]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(stdout(&a), stdout(&b));
    assert!(stdout(&a).trim_end().ends_with("the fishing boats were turning for home."));
    let other = bbart(d.path(), &["--backend-url", "mock://5", "--out", d.path().join("c").to_str().unwrap()]);
    assert_ne!(stdout(&a), stdout(&other));
    for f in ["manifest.json", "story.txt", "trace.json"] {
        assert!(d.path().join("a").join(f).is_file(), "{f}");
    }
}

#[test]
fn generate_over_mock_serve() {
    let d = tempfile::tempdir().unwrap();
    let mut server = retrogen()
        .args(["mock-serve", "--seed", "4"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(server.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("listening on ").expect("listening line").to_string();
    let remote = bbart(d.path(), &["--backend-url", &url, "--out", d.path().join("r").to_str().unwrap()]);
    let local = bbart(d.path(), &["--out", d.path().join("l").to_str().unwrap()]);
    server.kill().unwrap();
    let _ = server.wait();
    assert!(remote.status.success(), "{}", String::from_utf8_lossy(&remote.stderr));
    assert_eq!(stdout(&remote), stdout(&local));
    let manifest = std::fs::read_to_string(d.path().join("r/manifest.json")).unwrap();
    assert!(manifest.contains(&url));
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let unreachable = bbart(d.path(), &["--backend-url", "http://127.0.0.1:1", "--out", d.path().to_str().unwrap()]);
    assert_eq!(unreachable.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unreachable.stderr).contains("transport"));

    let bad = d.path().join("bad.json");
    std::fs::write(&bad, r#"{"beam_width": 0}"#).unwrap();
    let o = run(retrogen()
        .args(["generate", "bbart", "--ending"])
        .arg(fixtures().join("ending.txt"))
        .arg("--config")
        .arg(&bad));
    assert_eq!(o.status.code(), Some(1));

    let o = run(retrogen().args(["generate", "bbart", "--ending", "/no/such/file"]));
    assert_eq!(o.status.code(), Some(1));
    let o = run(retrogen().args(["generate", "bbart", "--backend-url", "ftp://x", "--ending"]).arg(fixtures().join("ending.txt")));
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(run(retrogen().arg("nonsense")).status.code(), Some(1));
    assert_eq!(run(retrogen().arg("--help")).status.code(), Some(0));
}

#[test]
fn edgar_writes_manifest_with_fingerprint() {
    let d = tempfile::tempdir().unwrap();
    let o = run(retrogen()
        .args(["generate", "edgar", "--iterations", "1", "--seed", "2"])
        .arg("--ending")
        .arg(fixtures().join("ending.txt"))
        .arg("--corpus")
        .arg(fixtures().join("corpus"))
        .arg("--config")
        .arg(small_config(d.path()))
        .arg("--out")
        .arg(d.path()));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["generator"], "edgar");
    assert_eq!(m["backend_url"], "mock://");
    assert_eq!(m["corpus_fingerprint"].as_str().unwrap().len(), 64);
    assert_eq!(m["config"]["beam_width"], 3);
    assert_eq!(m["iterations"].as_array().unwrap().len(), 1);
}

#[test]
fn prep_bbart_jsonl() {
    let d = tempfile::tempdir().unwrap();
    let input = d.path().join("in");
    std::fs::create_dir(&input).unwrap();
    for n in 0..5 {
        let text: Vec<String> = (0..12).map(|s| format!("Story {n} line {s} went by.")).collect();
        std::fs::write(input.join(format!("n{n}.txt")), text.join(" ")).unwrap();
    }
    let out = d.path().join("pairs.jsonl");
    let o = run(retrogen().args(["prep-bbart", "--seed", "1", "--input"]).arg(&input).arg("--out").arg(&out));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(&out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 5);
    for p in lines {
        let k = p["k"].as_u64().unwrap() as usize;
        assert!((1..=4).contains(&k));
        assert_eq!(p["source"].as_array().unwrap().len(), 2);
        assert_eq!(p["target"].as_array().unwrap().len(), 2 * k);
    }
    let again = run(retrogen().args(["prep-bbart", "--seed", "1", "--input"]).arg(&input));
    assert_eq!(stdout(&again), std::fs::read_to_string(&out).unwrap());
}

#[test]
fn eval_entropy_report() {
    let d = tempfile::tempdir().unwrap();
    let o = run(retrogen()
        .args(["eval", "entropy", "--responses"])
        .arg(fixtures().join("entropy_responses.csv"))
        .arg("--stories")
        .arg(fixtures().join("entropy_stories.json"))
        .arg("--screening")
        .arg(fixtures().join("entropy_screening.json"))
        .arg("--out")
        .arg(d.path()));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    for row in ["edgar        |    0.427", "bbart        |    0.508", "human        |    0.260", "eliminated participants: 5"] {
        assert!(s.contains(row), "{row:?} not in\n{s}");
    }
    assert!(d.path().join("entropy_report.json").is_file());
    assert!(d.path().join("entropy_report.csv").is_file());
}

#[test]
fn eval_subjective_table() {
    let o = run(retrogen()
        .args(["eval", "subjective", "--responses"])
        .arg(fixtures().join("subjective_responses.csv"))
        .arg("--pairs")
        .arg(fixtures().join("subjective_pairs.json")));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("0.013") && s.contains("0.006") && s.contains("0.052"), "{s}");
    assert_eq!(s.matches("0.013").count(), 3, "{s}");
}

#[test]
fn template_listing_and_fill() {
    let o = run(retrogen().args(["templates", "tf"]));
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 11);

    let d = tempfile::tempdir().unwrap();
    let story = d.path().join("story.txt");
    std::fs::write(&story, "Ana found a key. She opened the shed. The bike was inside. She rode away.").unwrap();
    let o = run(retrogen()
        .args(["templates", "tf", "--i", "1", "--j", "2", "--k", "4", "--object", "key", "--character", "Ana", "--story"])
        .arg(&story));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 11);
    let bad = run(retrogen().args(["templates", "tf", "--i", "3", "--j", "2", "--k", "4", "--story"]).arg(&story));
    assert_eq!(bad.status.code(), Some(1));
}
