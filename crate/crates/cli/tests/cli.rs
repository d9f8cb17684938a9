use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn lgb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lgb"))
        .args(args)
        .env_remove("LGB_WORKERS")
        .output()
        .expect("run lgb")
}

fn clinic() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/clinic")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn anonymize_clinic(out: &Path) -> Output {
    lgb(&["anonymize", "--input", s(&clinic()), "--k", "2", "--l", "2", "--out", s(out)])
}

fn census(dir: &Path, rows: &str) {
    let o = lgb(&["generate", "census", "--rows", rows, "--density", "0.2", "--seed", "5", "--out", s(dir)]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn anonymize_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("rel");
    let o = anonymize_clinic(&out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["published.csv", "params.json", "schema.csv", "buckets_age.csv", "buckets_zip.csv", "buckets_disease.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let summary = String::from_utf8(o.stdout).unwrap();
    assert!(summary.contains("groups: 4"), "{summary}");
    assert!(summary.contains("buckets[disease]: 4"), "{summary}");
    assert!(summary.contains("C_DM: 16"), "{summary}");
}

#[test]
fn infeasible_l_names_the_attribute() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lgb(&["anonymize", "--input", s(&clinic()), "--k", "2", "--l", "5", "--out", s(&tmp.path().join("rel"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`age`"), "{}", stderr(&o));
}

#[test]
fn anonymize_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(anonymize_clinic(&a).status.success());
    assert!(anonymize_clinic(&b).status.success());
    assert_eq!(files(&a), files(&b));

    let data = tmp.path().join("census");
    census(&data, "600");
    let run = |out: &Path| {
        lgb(&["anonymize", "--input", s(&data), "--k", "5", "--l", "4", "--mode", "ncp", "--density", "0.3", "--seed", "9", "--out", s(out)])
    };
    let (c, d) = (tmp.path().join("c"), tmp.path().join("d"));
    assert!(run(&c).status.success());
    assert!(run(&d).status.success());
    assert_eq!(files(&c), files(&d));
}

#[test]
fn verify_pass_tamper_and_missing_file() {
    let tmp = tempfile::tempdir().unwrap();
    let rel = tmp.path().join("rel");
    assert!(anonymize_clinic(&rel).status.success());

    let o = lgb(&["verify", "--published", s(&rel), "--original", s(&clinic())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["max_identity_prob"], "1/2");

    // Bucket 1 of disease is {bronchitis, flu}; repeat one of its values.
    let path = rel.join("buckets_disease.csv");
    let body = fs::read_to_string(&path).unwrap();
    fs::write(&path, body.replacen("1,bronchitis\n1,flu\n", "1,flu\n1,flu\n", 1)).unwrap();
    let o = lgb(&["verify", "--published", s(&rel)]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("disease") && err.contains("B1"), "{err}");

    fs::remove_file(rel.join("params.json")).unwrap();
    let o = lgb(&["verify", "--published", s(&rel)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("params.json"), "{}", stderr(&o));
}

#[test]
fn evaluate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("census");
    census(&data, "800");
    let rel = tmp.path().join("rel");
    let o = lgb(&["anonymize", "--input", s(&data), "--k", "5", "--l", "5", "--out", s(&rel)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let run = || lgb(&["evaluate", "--published", s(&rel), "--original", s(&data), "--queries", "200", "--seed", "3"]);
    let (a, b) = (run(), run());
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k,l,mode,density,metric,value");
    assert!(lines.iter().any(|l| l.starts_with("5,5,mdp,,mean_r_error,")), "{text}");
    assert!(lines.iter().any(|l| l.starts_with("5,5,mdp,,queries,200")), "{text}");
}

fn rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().skip(1).map(str::to_string).collect()
}

#[test]
fn sweep_grid_and_resume() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("census");
    census(&data, "3000");
    let out = tmp.path().join("sweep.csv");
    let sweep = |k: &str, out: &Path| {
        lgb(&[
            "sweep", "--input", s(&data), "--k", k, "--l", "5,8,10,12,15,18,20", "--mode", "mdp,ncp", "--queries", "20",
            "--workers", "3", "--out", s(out),
        ])
    };

    let o = sweep("5", &out);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(rows(&out).len(), 14);

    let o = sweep("5,8,10", &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let resumed = rows(&out);
    assert_eq!(resumed.len(), 42);

    let fresh = tmp.path().join("fresh.csv");
    assert!(sweep("5,8,10", &fresh).status.success());
    assert_eq!(rows(&fresh), resumed);
}

#[test]
fn sweep_with_empty_list_writes_only_the_header() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep.csv");
    let o = lgb(&["sweep", "--input", s(&clinic()), "--k", "", "--l", "2", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&out).unwrap(), "k,l,mode,density,c_dm,ncp,mean_r_error,queries,answered,flagged\n");
}

#[test]
fn sweep_reports_failed_cells_and_continues() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("census");
    census(&data, "400");
    let out = tmp.path().join("sweep.csv");
    let o = lgb(&["sweep", "--input", s(&data), "--k", "2,100000", "--l", "2", "--mode", "mdp", "--queries", "10", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("k=100000"), "{}", stderr(&o));
    let r = rows(&out);
    assert_eq!(r.len(), 1);
    assert!(r[0].starts_with("2,2,mdp,"));
}
