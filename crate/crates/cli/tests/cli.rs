use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn xma(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xma"))
        .current_dir(cwd)
        .args(args)
        .env_remove("XMA_API_KEY")
        .output()
        .unwrap()
}

fn ok(cwd: &Path, args: &[&str]) -> String {
    let out = xma(cwd, args);
    assert!(
        out.status.success(),
        "xma {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn cost_table_rows() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(ok(d.path(), &["cost", "--kind", "meme", "--n", "3000", "--rate", "0.42"]), "10.5 h\n");
    assert_eq!(ok(d.path(), &["cost", "--kind", "video", "--n", "600"]), "40.0 h\n");
    let out = xma(d.path(), &["cost", "--kind", "meme", "--n", "10", "--rate", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_1() {
    let d = tempfile::tempdir().unwrap();
    let out = xma(d.path(), &["cost", "--kind", "meme", "--n", "1", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(xma(d.path(), &[]).status.code(), Some(1));
    assert_eq!(xma(d.path(), &["cost", "--kind", "gif", "--n", "1"]).status.code(), Some(1));
}

#[test]
fn help_documents_every_subcommand() {
    let d = tempfile::tempdir().unwrap();
    let subs: &[&[&str]] = &[
        &["ingest"],
        &["remap"],
        &["predict"],
        &["sweep"],
        &["queue", "stats"],
        &["queue", "annotate"],
        &["serve"],
        &["finalize"],
        &["export"],
        &["eval"],
        &["diff"],
        &["dist"],
        &["cost"],
        &["report"],
        &["synth"],
        &["run"],
    ];
    for s in subs {
        let mut args = s.to_vec();
        args.push("--help");
        let text = ok(d.path(), &args);
        assert!(text.contains("Usage"), "{s:?}");
    }
    let export = ok(d.path(), &["export", "--help"]);
    for flag in ["--run", "--config", "--strategy", "--profile"] {
        assert!(export.contains(flag), "{flag}");
    }
}

#[test]
fn ingest_validates_manifests() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["synth", "--out", "c"]);
    assert!(d.path().join("c.lock").exists());
    let text = ok(d.path(), &["ingest", "--manifest", "c/memes.mft", "--schema", "fhm"]);
    assert!(text.contains("40 meme item(s)"), "{text}");
    assert!(text.contains("hateful=16") && text.contains("non-hateful=24"), "{text}");

    let json: serde_json::Value =
        serde_json::from_str(&ok(d.path(), &["ingest", "--manifest", "c/videos.mft", "--schema", "mhc", "--kind", "video", "--json"])).unwrap();
    assert_eq!(json["items"], 20);
    assert_eq!(json["labels"]["normal"], 10);

    let out = xma(d.path(), &["ingest", "--manifest", "c/memes.mft", "--schema", "mhc"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn remap_counts_and_lock() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["synth", "--out", "c"]);
    let text = ok(
        d.path(),
        &["remap", "--manifest", "c/videos.mft", "--schema", "mhc", "--kind", "video", "--mapping", "mhc-mhc", "--out", "out/v.mft"],
    );
    assert!(text.contains("non-offensive=10") && text.contains("offensive=10"), "{text}");
    let lock = fs::read_to_string(d.path().join("out/v.mft.lock")).unwrap();
    assert!(lock.contains("command = \"remap\""));
    let first = fs::read_to_string(d.path().join("out/v.mft")).unwrap();
    assert!(first.contains("\"label\":\"offensive\""));
    assert!(first.contains("\"frames_dir\":\"../c/videos/v000\""), "{first}");
}

#[test]
fn staged_run_matches_one_shot_and_lock_reproduces() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["synth", "--out", "c"]);

    ok(p, &["ingest", "--config", "c/run.toml", "--run", "r"]);
    let text = ok(p, &["predict", "--run", "r", "--dataset", "fhm", "--task", "mhc", "--shots", "auto"]);
    assert!(text.contains("queued 8"), "{text}");
    let out = xma(p, &["finalize", "--run", "r"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("8 item(s) still pending"));

    let stats: serde_json::Value = serde_json::from_str(&ok(p, &["queue", "stats", "--run", "r", "--json"])).unwrap();
    assert_eq!(stats["queued"], 8);
    assert_eq!(stats["total"], 40);

    ok(p, &["queue", "annotate", "--run", "r", "--answers", "c/answers.jsonl"]);
    let text = ok(p, &["finalize", "--run", "r"]);
    assert!(text.contains("3 label(s) changed"), "{text}");
    ok(p, &["export", "--run", "r"]);

    ok(p, &["run", "--config", "c/run.toml", "--run", "one", "--answers", "c/answers.jsonl"]);
    ok(p, &["run", "--config", "r/run.lock", "--run", "again", "--answers", "c/answers.jsonl"]);
    for f in ["train_vid_ft.mft", "train_om_ft.mft", "train_rm_ft.mft", "train_vid_rm_ft.mft", "eval_mhc.mft", "meta_no_ft.toml"] {
        let a = fs::read(p.join("r/export").join(f)).unwrap();
        assert_eq!(a, fs::read(p.join("one/export").join(f)).unwrap(), "{f}");
        assert_eq!(a, fs::read(p.join("again/export").join(f)).unwrap(), "{f}");
    }
    assert_eq!(
        fs::read(p.join("r/final/memes.mft")).unwrap(),
        fs::read(p.join("again/final/memes.mft")).unwrap()
    );

    // eval, diff, dist, report
    let test = fs::read_to_string(p.join("r/data/videos_test.mft")).unwrap();
    let ids: Vec<String> = test
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["id"].as_str().unwrap().to_string())
        .collect();
    let all_pos: String = ids.iter().map(|id| format!("{{\"item_id\":\"{id}\",\"prediction\":\"positive\"}}\n")).collect();
    fs::write(p.join("pos.jsonl"), all_pos).unwrap();
    let half: String = ids
        .iter()
        .take(1)
        .map(|id| format!("{{\"item_id\":\"{id}\",\"prediction\":\"negative\"}}\n"))
        .collect();
    fs::write(p.join("one.jsonl"), half).unwrap();
    let text = ok(p, &["eval", "--run", "r", "--pred", "pos=pos.jsonl", "--pred", "one=one.jsonl"]);
    assert!(text.contains("Strategy comparison"), "{text}");
    let diff = ok(p, &["diff", "--run", "r", "--a", "pos.jsonl", "--b", "one.jsonl"]);
    assert!(diff.contains("corrected"), "{diff}");
    ok(p, &["dist", "--run", "r"]);
    ok(p, &["report", "--run", "r", "--format", "html", "--out", "report.html"]);
    let html = fs::read_to_string(p.join("report.html")).unwrap();
    for needle in ["Few-shot sweep", "Strategy comparison", "Label distribution", "Prediction diff: pos_vs_one"] {
        assert!(html.contains(needle), "{needle}");
    }
    let jsonl = ok(p, &["report", "--run", "r", "--format", "jsonl"]);
    for line in jsonl.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }

    let bad = xma(p, &["eval", "--run", "r", "--pred", "nonsense"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn serve_refuses_corrupt_store() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["synth", "--out", "c"]);
    ok(p, &["run", "--config", "c/run.toml", "--run", "r"]);
    let log = p.join("r/store/events.log");
    let mut text = fs::read_to_string(&log).unwrap();
    let lines = text.lines().count();
    text.push_str("{\"seq\":999,\"ts\":0,\"kind\":\"SUBMIT\"\n");
    fs::write(&log, text).unwrap();
    let out = xma(p, &["serve", "--run", "r", "--port", "0"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&format!("line {}", lines + 1)), "{err}");
    assert!(err.contains(&format!("last good seq {lines}")), "{err}");
}

#[test]
fn unreachable_endpoint_marks_items_failed() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["synth", "--out", "c"]);
    let cfg = fs::read_to_string(p.join("c/run.toml")).unwrap().replace(
        "backend = \"stub\"",
        "backend = \"http\"\n\n[model.endpoint]\nbase_url = \"http://127.0.0.1:9\"\nmodel_name = \"m\"\nmax_retries = 0\ntimeout_s = 2.0",
    );
    fs::write(p.join("c/http.toml"), cfg).unwrap();
    ok(p, &["ingest", "--config", "c/http.toml", "--run", "r"]);
    let out = xma(p, &["predict", "--run", "r", "--shots", "0"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("40 failed"), "{stdout}");
    assert!(stdout.contains("failed 40"), "{stdout}");
}
