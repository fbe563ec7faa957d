use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn vtgan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vtgan"))
        .args(args)
        .env("VTGAN_LOG", "warn")
        .output()
        .expect("spawn vtgan")
}

fn ok(args: &[&str]) -> String {
    let out = vtgan(args);
    assert!(
        out.status.success(),
        "vtgan {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str], code: i32) -> String {
    let out = vtgan(args);
    assert_eq!(out.status.code(), Some(code), "vtgan {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn correlated(dir: &Path) -> PathBuf {
    ok(&["fixture", "correlated", "--dir", s(dir), "--rows", "1000", "--seed", "5"]);
    dir.join("experiment.toml")
}

const SMALL: &[&str] = &[
    "--rounds",
    "50",
    "--partition",
    "0,2,2,0",
    "--block-dim",
    "16",
    "--batch",
    "100",
    "--noise-dim",
    "8",
    "--checkpoint-every",
    "20",
];

fn train(config: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec!["train", "--config", s(config), "--output-dir", s(out)];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    ok(&args);
}

fn checkpoint_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir.join("checkpoint"))
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn sorted_lines(path: &Path) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines: Vec<String> = text.lines().skip(1).map(String::from).collect();
    lines.sort();
    lines
}

#[test]
fn train_synthesize_evaluate_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let config = correlated(tmp.path());
    let run = tmp.path().join("run");
    train(&config, &run, &[]);
    for name in ["config.toml", "losses.json", "messages.json", "checkpoint/manifest.json"] {
        assert!(run.join(name).exists(), "{name} missing");
    }
    let snapshot = run.join("config.toml");

    let err = fails(
        &["synthesize", "--config", s(&snapshot), "--rows", "0", "--out", s(&tmp.path().join("x.csv"))],
        2,
    );
    assert!(err.contains("error"), "{err}");

    let a = tmp.path().join("a.csv");
    let b = tmp.path().join("b.csv");
    ok(&["synthesize", "--config", s(&snapshot), "--rows", "1000", "--out", s(&a), "--publication-seed", "1"]);
    ok(&["synthesize", "--config", s(&snapshot), "--rows", "1000", "--out", s(&b), "--publication-seed", "2"]);
    let (la, lb) = (sorted_lines(&a), sorted_lines(&b));
    assert_eq!(la.len(), 1000);
    assert_eq!(la, lb, "publication seeds should only reorder rows");
    assert_ne!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let real = tmp.path().join("data.csv");
    let schema = tmp.path().join("schema.json");
    let eval = |synth: &Path, assignment: Option<&str>| -> Value {
        let mut args = vec!["evaluate", "--real", s(&real), "--synth", s(synth), "--schema", s(&schema)];
        if let Some(a) = assignment {
            args.extend(["--assignment", a]);
        }
        serde_json::from_str(&ok(&args)).unwrap()
    };
    let assignment = "x_a,cat_a,imb;x_b,cat_b,mix_b";
    let ra = eval(&a, Some(assignment));
    let rb = eval(&b, Some(assignment));
    for key in ["avg_jsd", "avg_wd", "diff_corr", "avg_client_corr", "across_client_corr"] {
        let (x, y) = (ra[key].as_f64().unwrap(), rb[key].as_f64().unwrap());
        assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{key}: {x} vs {y}");
    }
    let bare = eval(&a, None);
    assert!(bare["across_client_corr"].is_null());
    assert!(bare["avg_client_corr"].is_null());
    assert!(bare["diff_corr"].as_f64().is_some());

    let itself = eval(&real, Some(assignment));
    assert_eq!(itself["diff_corr"].as_f64(), Some(0.0));
}

#[test]
fn checkpoints_reproduce_across_reruns_and_transports() {
    let tmp = tempfile::tempdir().unwrap();
    let config = correlated(tmp.path());
    let first = tmp.path().join("first");
    train(&config, &first, &[]);

    let again = tmp.path().join("again");
    ok(&["train", "--config", s(&first.join("config.toml")), "--output-dir", s(&again)]);
    assert_eq!(checkpoint_files(&first), checkpoint_files(&again));
    assert_eq!(fs::read(first.join("losses.json")).unwrap(), fs::read(again.join("losses.json")).unwrap());

    let tcp = tmp.path().join("tcp");
    train(&config, &tcp, &["--transport", "tcp"]);
    assert_eq!(checkpoint_files(&first), checkpoint_files(&tcp));
    assert_eq!(
        fs::read(first.join("messages.json")).unwrap(),
        fs::read(tcp.join("messages.json")).unwrap()
    );
}

#[test]
fn leak_toy_attack_demo() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["fixture", "leak-toy", "--dir", s(tmp.path())]);
    let config = tmp.path().join("experiment.toml");
    ok(&["train", "--config", s(&config), "--shuffle", "false"]);
    let out = ok(&["attack-demo", "--config", s(&config), "--every", "10"]);
    let last = out.lines().find(|l| l.trim_start().starts_with("20 ")).unwrap();
    let cols: Vec<&str> = last.split_whitespace().collect();
    assert_eq!(cols[2..4], ["1.0000", "1.0000"], "{out}");
    assert!(out.contains("ratios 0.500:0.500"), "{out}");
    assert!(out.contains("ratios 0.333:0.667"), "{out}");
    assert!(!out.contains("notice"));

    let log_path = tmp.path().join("run/messages.json");
    let mut log: Value = serde_json::from_str(&fs::read_to_string(&log_path).unwrap()).unwrap();
    let records = log["log"]["records"].as_array_mut().unwrap();
    records.truncate(4);
    let truncated = tmp.path().join("truncated.json");
    fs::write(&truncated, log.to_string()).unwrap();
    let out = ok(&["attack-demo", "--config", s(&config), "--log", s(&truncated)]);
    assert!(out.contains("notice: coverage"), "{out}");

    log["version"] = 99.into();
    fs::write(&truncated, log.to_string()).unwrap();
    let err = fails(&["attack-demo", "--config", s(&config), "--log", s(&truncated)], 2);
    assert!(err.contains("version"), "{err}");
}

#[test]
fn invalid_inputs_exit_with_validation_code() {
    let tmp = tempfile::tempdir().unwrap();
    let config = correlated(tmp.path());

    let err = fails(
        &["train", "--config", s(&config), "--partition", "3,0,2,0", "--strict", "true"],
        2,
    );
    assert!(err.contains("partition"), "{err}");

    let text = fs::read_to_string(tmp.path().join("data.csv")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let header: Vec<&str> = lines[0].split(',').collect();
    let cat = header.iter().position(|h| *h == "cat_a").unwrap();
    let mut cells: Vec<String> = lines[2].split(',').map(String::from).collect();
    cells[cat] = "not-a-category".into();
    lines[2] = cells.join(",");
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, lines.join("\n")).unwrap();
    let err = fails(
        &[
            "evaluate",
            "--real",
            s(&tmp.path().join("data.csv")),
            "--synth",
            s(&bad),
            "--schema",
            s(&tmp.path().join("schema.json")),
        ],
        2,
    );
    assert!(err.contains("line 3") && err.contains("cat_a"), "{err}");

    let err = fails(
        &[
            "evaluate",
            "--real",
            s(&tmp.path().join("data.csv")),
            "--synth",
            s(&tmp.path().join("data.csv")),
            "--schema",
            s(&tmp.path().join("schema.json")),
            "--assignment",
            "x_a;x_b",
        ],
        2,
    );
    assert!(err.contains("assignment"), "{err}");

    let missing = tmp.path().join("missing.toml");
    fs::write(&missing, "output_dir = \"run\"\n[data]\ncsv = \"nope.csv\"\nschema = \"schema.json\"\nassignment = [[\"x_a\"], [\"x_b\"]]\n").unwrap();
    let err = fails(&["train", "--config", s(&missing)], 2);
    assert!(err.contains("data.csv"), "{err}");
}
