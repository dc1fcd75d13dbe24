use std::path::Path;
use std::process::{Command, Output};

fn prx(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prx"))
        .args(args)
        .current_dir(dir)
        .env("PRX_DATA_DIR", dir)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn rows(o: &Output) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_reader(o.stdout.as_slice());
    rdr.records().map(|r| r.unwrap().iter().map(str::to_owned).collect()).collect()
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(prx(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(prx(dir.path(), &["linkage", "sweep"]).status.code(), Some(2));
    // not a preset, so it is read as a config path that does not exist
    let missing = prx(dir.path(), &["model", "info", "--model", "DEXOP-5"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));
    let help = prx(dir.path(), &["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(stdout(&help).contains("record"));
}

#[test]
fn parallelogram_sweep_tracks_its_input() {
    let dir = tempfile::tempdir().unwrap();
    for step in ["45", "0.5"] {
        let out = prx(dir.path(), &["linkage", "sweep", "--parallelogram", "--step-deg", step]);
        assert!(out.status.success());
        let rows = rows(&out);
        assert!(rows.len() >= 9);
        for r in rows {
            let (theta, phi): (f64, f64) = (r[0].parse().unwrap(), r[1].parse().unwrap());
            assert!((theta - phi).abs() < 1e-6, "{r:?}");
        }
    }
}

#[test]
fn workspace_table_matches_the_preset() {
    let dir = tempfile::tempdir().unwrap();
    let out = prx(dir.path(), &["model", "workspace", "--model", "DEXOP-7"]);
    assert!(out.status.success());
    let rows = rows(&out);
    assert_eq!(rows.len(), 7);
    let mcp = rows.iter().find(|r| r[1] == "MCP-flexion").unwrap();
    assert_eq!((mcp[4].as_str(), mcp[5].as_str()), ("110", "35"));
    let jsonl = prx(dir.path(), &["--format", "jsonl", "model", "workspace"]);
    let first: serde_json::Value = serde_json::from_str(stdout(&jsonl).lines().next().unwrap()).unwrap();
    assert_eq!(first["kind"], "TM-abduction");
}

#[test]
fn record_inspect_align_export_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let rec = prx(dir.path(), &["record", "--out", "s.prx", "--duration-s", "2", "--seed", "3"]);
    assert!(rec.status.success(), "{}", String::from_utf8_lossy(&rec.stderr));
    assert!(dir.path().join("s.prx").exists());

    let inspect = rows(&prx(dir.path(), &["inspect", "s.prx"]));
    assert_eq!(inspect.len(), 5);
    assert!(prx(dir.path(), &["validate", "s.prx"]).status.success());

    let aligned = prx(dir.path(), &["align", "s.prx"]);
    assert!(aligned.status.success());
    let steps = rows(&aligned);
    assert!(steps.len() >= 38);
    assert!(steps.iter().all(|r| r[2].parse::<f64>().unwrap() <= 25.0));

    let before = std::fs::read(dir.path().join("s.prx")).unwrap();
    let ex = prx(dir.path(), &["export", "s.prx", "--out", "e.prx", "--chunks", "4", "--manifest", "m.jsonl"]);
    assert!(ex.status.success(), "{}", String::from_utf8_lossy(&ex.stderr));
    assert_eq!(std::fs::read(dir.path().join("s.prx")).unwrap(), before);
    let aug = prx(dir.path(), &["augment", "e.prx", "--out", "a.prx", "--seed", "9"]);
    assert!(aug.status.success(), "{}", String::from_utf8_lossy(&aug.stderr));
    assert!(prx(dir.path(), &["validate", "a.prx"]).status.success());
    let manifest = prx(dir.path(), &["metrics", "manifest", "--manifest", "m.jsonl"]);
    assert!(manifest.status.success());
    assert!(stdout(&manifest).contains("perioperation"));
}

#[test]
fn truncated_session_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    assert!(prx(dir.path(), &["record", "--out", "s.prx", "--duration-s", "1", "--seed", "4"]).status.success());
    let bytes = std::fs::read(dir.path().join("s.prx")).unwrap();
    std::fs::write(dir.path().join("cut.prx"), &bytes[..bytes.len() / 2]).unwrap();
    let out = prx(dir.path(), &["validate", "cut.prx"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("chunk"));
}

#[test]
fn same_arguments_give_the_same_output() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["linkage", "sweep", "--lengths", "100,40,100,80", "--step-deg", "5"][..],
        &["tactile", "synth", "--row", "40", "--col", "60", "--force", "20", "--seed", "2", "--out", "f.bin"],
        &["metrics", "manifest", "--periop", "160@31", "--teleop", "40@85"],
    ] {
        let (a, b) = (prx(dir.path(), args), prx(dir.path(), args));
        assert!(a.status.success(), "{args:?}: {}", String::from_utf8_lossy(&a.stderr));
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn metrics_commands_report_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("trials.csv"), "success,time_s\ntrue,10\ntrue,12\ntrue,190\nfalse,30\n").unwrap();
    let out = prx(dir.path(), &["metrics", "throughput", "--trials", "trials.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("5.4545") || text.contains("5.45"), "{text}");
    let out = prx(dir.path(), &["metrics", "success", "--rates", "1,1,1,1,1,1"]);
    assert_eq!(rows(&out)[0][0], "1");
    let out = prx(dir.path(), &["metrics", "manifest", "--teleop", "200@85"]);
    assert!(stdout(&out).contains("283.3"));
}
