use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mmdl_cli::bundle::{list_files, sha256_hex, BundleManifest, BUNDLE_FILE};

fn mmdl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmdl"))
        .args(args)
        .env("MMDL_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = mmdl(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synthetic(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    ok(&["gen-synthetic", "--out", p(&data), "--seed", "3", "--n", "300", "--dim", "8"]);
    data.join("manifest.json")
}

fn pipeline(manifest: &Path, out: &Path) -> Output {
    mmdl(&["pipeline", "--manifest", p(manifest), "--out", p(out), "--epochs", "4", "--lr", "1e-3"])
}

fn bundle(out: &Path) -> BundleManifest {
    serde_json::from_slice(&std::fs::read(out.join(BUNDLE_FILE)).unwrap()).unwrap()
}

#[test]
fn bundle_lists_every_output_with_its_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synthetic(tmp.path());
    let out = tmp.path().join("run");
    let res = pipeline(&manifest, &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let b = bundle(&out);
    assert_eq!(b.dataset, "synthetic");
    // small held-out sets can leave a quadrant empty; that is reported, not fatal
    for n in &b.notices {
        assert!(n.starts_with("boundary distances skipped") || n.starts_with("stats for"), "{n}");
    }
    let mut listed: Vec<String> = b.outputs.iter().map(|f| f.path.clone()).collect();
    listed.push(BUNDLE_FILE.to_string());
    listed.sort();
    assert_eq!(listed, list_files(&out).unwrap());
    for f in &b.outputs {
        let bytes = std::fs::read(out.join(&f.path)).unwrap();
        assert_eq!(f.sha256, sha256_hex(&bytes), "{}", f.path);
        assert_eq!(f.bytes, bytes.len() as u64);
    }
    for expected in [
        "models/fusion.mmfu",
        "predictions/attention.csv",
        "quadrants/audio.csv",
        "figures/scatter_video.svg",
        "tables/matrix.csv",
        "tables/stats_audio.csv",
        "tables/stats_video.csv",
        "projection/text.csv",
        "metrics.json",
    ] {
        assert!(listed.iter().any(|l| l == expected), "missing {expected}");
    }
    let inputs: Vec<&str> = b.inputs.iter().map(|f| f.path.as_str()).collect();
    assert!(inputs.contains(&"manifest.json") && inputs.contains(&"labels.csv"), "{inputs:?}");

    // a second run into the same directory is refused rather than mixing outputs
    let again = pipeline(&manifest, &out);
    assert_eq!(again.status.code(), Some(2));
}

#[test]
fn pipeline_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synthetic(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(pipeline(&manifest, &a).status.success());
    assert!(pipeline(&manifest, &b).status.success());
    let files = list_files(&a).unwrap();
    assert_eq!(files, list_files(&b).unwrap());
    for f in files {
        assert_eq!(std::fs::read(a.join(&f)).unwrap(), std::fs::read(b.join(&f)).unwrap(), "{f}");
    }
}

#[test]
fn missing_feature_tables_skip_stats_only() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synthetic(tmp.path());
    let mut json: serde_json::Value = serde_json::from_slice(&std::fs::read(&manifest).unwrap()).unwrap();
    json.as_object_mut().unwrap().remove("features");
    let bare = manifest.with_file_name("bare.json");
    std::fs::write(&bare, serde_json::to_vec(&json).unwrap()).unwrap();

    let out = tmp.path().join("run");
    let res = pipeline(&bare, &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let b = bundle(&out);
    assert_eq!(b.notices[0], "stats skipped: the manifest lists no feature tables");
    assert!(!b.notices[1..].iter().any(|n| n.starts_with("stats")), "{:?}", b.notices);
    let files = list_files(&out).unwrap();
    assert!(!files.iter().any(|f| f.starts_with("tables/stats_")));
    assert!(files.iter().any(|f| f == "tables/matrix.csv"));
    assert!(files.iter().any(|f| f == "projection/audio.csv"));
}

#[test]
fn input_problems_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.json");
    let out = tmp.path().join("run");
    assert_eq!(pipeline(&missing, &out).status.code(), Some(2));

    std::fs::write(&missing, "{ not json").unwrap();
    assert_eq!(pipeline(&missing, &out).status.code(), Some(2));

    let manifest = synthetic(tmp.path());
    let bad_lr = mmdl(&["pipeline", "--manifest", p(&manifest), "--out", p(&out), "--lr", "-1"]);
    assert_eq!(bad_lr.status.code(), Some(2));
    assert!(!out.exists(), "nothing is written before validation");
}

#[test]
fn stage_failures_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let quadrants = ["red", "green", "blue", "yellow"];
    let tasks: Vec<serde_json::Value> = quadrants
        .iter()
        .enumerate()
        .map(|(i, q)| {
            serde_json::json!({
                "task_id": format!("t{i}"),
                "example_id": format!("ex{i}"),
                "modality_flag": "audio",
                "quadrant": q,
                "payload_refs": {"text": "a.txt", "audio": "a.wav", "video": "a.mp4"},
            })
        })
        .collect();
    let set = tmp.path().join("tasks.json");
    std::fs::write(&set, serde_json::to_vec(&serde_json::json!({"annotators": ["a1", "a2"], "tasks": tasks})).unwrap())
        .unwrap();

    // only one annotator ever submitted, so there is no pair to compare
    let log = tmp.path().join("log.jsonl");
    let mut lines = String::new();
    for i in 0..4 {
        for pass in [1, 2] {
            lines.push_str(&format!(
                "{{\"task_id\":\"t{i}\",\"annotator\":\"a1\",\"pass\":{pass},\"judgment\":\"neutral\",\"ts_iso8601\":\"2026-01-01T00:00:00Z\"}}\n"
            ));
        }
    }
    std::fs::write(&log, &lines).unwrap();
    let rep = tmp.path().join("rep");
    let res = mmdl(&["report", "--tasks", p(&set), "--annotations", p(&log), "--out", p(&rep)]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(String::from_utf8_lossy(&res.stderr).contains("report"));

    // the same log with the second annotator mirrored in succeeds
    std::fs::write(&log, lines.clone() + &lines.replace("\"a1\"", "\"a2\"")).unwrap();
    ok(&["report", "--tasks", p(&set), "--annotations", p(&log), "--out", p(&rep)]);
    let kappa = std::fs::read_to_string(rep.join("kappa.csv")).unwrap();
    assert!(kappa.starts_with("Quadrant,Unimodal Judgment,Multimodal Judgment,Δ\n"), "{kappa}");

    let corrupt = tmp.path().join("bad.jsonl");
    std::fs::write(&corrupt, "{\"task_id\": 7}\n").unwrap();
    let res = mmdl(&["report", "--tasks", p(&set), "--annotations", p(&corrupt), "--out", p(&tmp.path().join("r2"))]);
    assert_eq!(res.status.code(), Some(2));
}
