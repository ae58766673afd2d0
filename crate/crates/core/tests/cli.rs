use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use uniweb::report::manifest::RunManifest;

fn mini() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join("mini")
}

fn uniweb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uniweb"))
        .args(args)
        .env_remove("UNIWEB_SEED")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn ingest_reports_admission_counts() {
    for file in ["registry.csv", "registry.json"] {
        let o = uniweb(&["ingest", "--registry", s(&mini().join(file))]);
        assert!(o.status.success(), "{}", stderr(&o));
        let out = stdout(&o);
        assert!(
            out.contains("3 universities, 12 units, 18 URLs admitted, 3 rejected"),
            "{out}"
        );
        assert!(
            out.contains("ulr-otri http://otri-ulr.com (external)"),
            "{out}"
        );
    }
}

#[test]
fn ingest_writes_admission_log() {
    let dir = tempfile::tempdir().unwrap();
    let o = uniweb(&[
        "ingest",
        "--registry",
        s(&mini().join("registry.csv")),
        "--out",
        s(dir.path()),
    ]);
    assert!(o.status.success());
    let log = fs::read_to_string(dir.path().join("admission.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 21);
    assert!(
        log.contains("13,uvm-blog,http://uvm.es/blogs/index.jsp?s=1,false,redirect_target_invalid")
    );
}

#[test]
fn malformed_row_fails_with_row_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(
        &path,
        "university_id,unit_id,unit_type,activity,nature,url,url_role,redirect_target,status\n\
         ub,,,,,ub.edu,official,,\n\
         ub,lib,libary,,,biblioteca.ub.edu,unit,,\n",
    )
    .unwrap();
    let o = uniweb(&["ingest", "--registry", s(&path)]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("row 3") && err.contains("libary"), "{err}");
}

#[test]
fn empty_registry_warns_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    fs::write(&path, "").unwrap();
    let o = uniweb(&["ingest", "--registry", s(&path)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("is empty"));
    assert!(stdout(&o).contains("0 universities, 0 units, 0 URLs admitted, 0 rejected"));
}

#[test]
fn replay_run_writes_one_snapshot_per_wave() {
    let dir = tempfile::tempdir().unwrap();
    let replay = format!("replay:{}", s(&mini()));
    let registry = mini().join("registry.csv");
    let args = [
        "run",
        "--registry",
        s(&registry),
        "--source",
        &replay,
        "--out",
        s(dir.path()),
    ];
    let o = uniweb(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut snaps: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("snapshot-"))
        .collect();
    snaps.sort();
    assert_eq!(
        snaps,
        [
            "snapshot-2010-03.csv",
            "snapshot-2010-06.csv",
            "snapshot-2010-09.csv",
            "snapshot-2010-12.csv"
        ]
    );
    let manifest = RunManifest::read(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(manifest.waves.len(), 4);
    assert!(manifest.files.contains_key("queries-2010-03.txt"));

    // the replayed snapshots feed a report whose numbers equal the fixture's
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let reg = mini().join("registry.csv");
    assert!(uniweb(&[
        "report",
        "--registry",
        s(&reg),
        "--snapshots",
        s(dir.path()),
        "--out",
        s(a.path())
    ])
    .status
    .success());
    assert!(uniweb(&[
        "report",
        "--registry",
        s(&reg),
        "--snapshots",
        s(&mini()),
        "--out",
        s(b.path())
    ])
    .status
    .success());
    let body = |p: &Path| {
        fs::read_to_string(p.join("aggregates.csv"))
            .unwrap()
            .lines()
            .skip(1)
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(body(a.path()), body(b.path()));

    // a second run finds every snapshot and measures nothing new
    let before = fs::read(dir.path().join("snapshot-2010-06.csv")).unwrap();
    assert!(uniweb(&args).status.success());
    assert_eq!(
        fs::read(dir.path().join("snapshot-2010-06.csv")).unwrap(),
        before
    );
}

#[test]
fn waves_out_of_order_fail_before_any_query() {
    let dir = tempfile::tempdir().unwrap();
    let replay = format!("replay:{}", s(&mini()));
    let o = uniweb(&[
        "run",
        "--registry",
        s(&mini().join("registry.csv")),
        "--source",
        &replay,
        "--waves",
        "2010-06,2010-03",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("out of order"));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn stub_source_aborts_with_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let registry = mini().join("registry.csv");
    let args = [
        "run",
        "--registry",
        s(&registry),
        "--source",
        "stub",
        "--waves",
        "2010-03",
        "--out",
        s(dir.path()),
    ];
    let o = uniweb(&args);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(dir.path().join("checkpoint-2010-03.json").exists());
    assert!(!dir.path().join("snapshot-2010-03.csv").exists());
    let again = uniweb(&args);
    assert_eq!(again.status.code(), Some(2));
}

#[test]
fn synthetic_runs_are_reproducible() {
    let cfg_dir = tempfile::tempdir().unwrap();
    let cfg = cfg_dir.path().join("synthetic.json");
    fs::write(
        &cfg,
        r#"{"seed": 11, "n_universities": 3, "units_per_type": 1}"#,
    )
    .unwrap();
    let source = format!("synthetic:{}", s(&cfg));
    let runs: Vec<RunManifest> = (0..2)
        .map(|_| {
            let out = tempfile::tempdir().unwrap();
            let o = uniweb(&["run", "--source", &source, "--out", s(out.path())]);
            assert!(o.status.success(), "{}", stderr(&o));
            RunManifest::read(&out.path().join("manifest.json")).unwrap()
        })
        .collect();
    assert_eq!(runs[0].files, runs[1].files);
    assert_eq!(runs[0].run_hash, runs[1].run_hash);
    assert!(runs[0].files.contains_key("registry.csv"));

    let out = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_uniweb"))
        .args(["synth", "--config", s(&cfg), "--out", s(out.path())])
        .env("UNIWEB_SEED", "12")
        .output()
        .unwrap();
    assert!(o.status.success());
    let m = RunManifest::read(&out.path().join("manifest.json")).unwrap();
    assert_eq!(m.config["seed"], 12);
    assert_ne!(
        m.files["snapshot-2010-03.csv"],
        runs[0].files["snapshot-2010-03.csv"]
    );
}

#[test]
fn report_options_pass_through() {
    let out = tempfile::tempdir().unwrap();
    let reg = mini().join("registry.csv");
    let o = uniweb(&[
        "report",
        "--registry",
        s(&reg),
        "--snapshots",
        s(&mini()),
        "--top-n",
        "10",
        "--exclude",
        "ulr-dialnet",
        "--pca-mode",
        "covariance",
        "--out",
        s(out.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let topn = fs::read_to_string(out.path().join("topn_type_rs.csv")).unwrap();
    assert_eq!(topn.lines().nth(1), Some("group,items,top10,pct_top10"));
    let corr = fs::read_to_string(out.path().join("correlations.csv")).unwrap();
    assert!(
        corr.lines().any(|l| l.starts_with("unit,R_s,R_v,11,")),
        "{corr}"
    );
    let pca = fs::read_to_string(out.path().join("pca_uni_general_components.csv")).unwrap();
    assert!(pca.lines().nth(2).unwrap().starts_with("covariance,pc1,"));
}

#[test]
fn reports_are_deterministic() {
    let reg = mini().join("registry.csv");
    let manifests: Vec<RunManifest> = (0..2)
        .map(|_| {
            let out = tempfile::tempdir().unwrap();
            assert!(uniweb(&[
                "report",
                "--registry",
                s(&reg),
                "--snapshots",
                s(&mini()),
                "--out",
                s(out.path())
            ])
            .status
            .success());
            RunManifest::read(&out.path().join("manifest.json")).unwrap()
        })
        .collect();
    assert_eq!(manifests[0], manifests[1]);
    assert_eq!(manifests[0].files.len(), 25);
}

#[test]
fn registry_mismatch_names_both_hashes() {
    let dir = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(mini()).unwrap() {
        let p = entry.unwrap().path();
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        if name.starts_with("snapshot-") {
            let text = fs::read_to_string(&p).unwrap();
            let text = text.replacen('\n', " registry=0badc0de\n", 1);
            fs::write(dir.path().join(name), text).unwrap();
        }
    }
    let out = tempfile::tempdir().unwrap();
    let o = uniweb(&[
        "report",
        "--registry",
        s(&mini().join("registry.csv")),
        "--snapshots",
        s(dir.path()),
        "--out",
        s(out.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(
        err.contains("0badc0de") && err.contains("e30a7cc2"),
        "{err}"
    );
}
