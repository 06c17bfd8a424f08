mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use common::*;
use cslab::manifest::sha256_hex;

#[test]
fn unknown_key_exits_1_with_suggestion() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(r#"{{"model":{LG_B},"gird":{{"level":32}}}}"#);
    let r = run_in(dir.path(), "classify", &cfg, &[], &[]);
    assert_eq!(r.code(), 1);
    assert!(r.stderr().contains("did you mean `grid`"), "{}", r.stderr());
    assert!(r.stderr().contains("line 1 column"), "{}", r.stderr());
}

#[test]
fn lambda_below_one_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"model":{"type":"leslie_gower","lambda":[0.9,3,3],"a":[[1,.5,.5],[.5,1,.5],[.5,.5,1]]},"grid":{"level":32}}"#;
    let r = run_in(dir.path(), "classify", cfg, &[], &[]);
    assert_eq!(r.code(), 1);
    assert!(r.stderr().contains("lambda"), "{}", r.stderr());
}

#[test]
fn surface_commands_need_level_four() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_in(dir.path(), "simplex", &model_config(LG_B, 32), &["--level", "3"], &[]);
    assert_eq!(r.code(), 1);
    assert_eq!(r.json("manifest.json")["exit_code"], 1);
}

#[test]
fn classify_lg_b() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_in(dir.path(), "classify", &model_config(LG_B, 32), &[], &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let c = r.json("classify.json");
    assert_eq!(c["verdict"], "NeatlyEmbeddedPredicted");
    assert!((f(&c["min_margin"]) - 20.0 / 21.0).abs() < 1e-9);
}

#[test]
fn simplex_lg_a_csv() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_in(dir.path(), "simplex", &model_config(LG_A, 32), &[], &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let csv = r.text("surface.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("y1,y2,y3,rho,x1,x2,x3"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 561);
    let worst = rows.iter().map(|r| (r[3] - 1.0).abs()).fold(0.0, f64::max);
    assert!(worst <= 5e-3, "{worst}");
    assert!(!csv.contains('\r'));
    let obj = r.text("surface.obj");
    assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 561);
    assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), 1024);
}

#[test]
fn cone_on_lg_a_is_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_in(dir.path(), "cone", &model_config(LG_A, 32), &[], &[]);
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("Degenerate"), "{}", r.stderr());
    assert_eq!(r.json("cone.json")["classify_verdict"], "Degenerate");
}

#[test]
fn cone_on_lg_b_writes_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_in(dir.path(), "cone", &model_config(LG_B, 32), &[], &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let c = r.json("cone.json");
    let entries = c["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 3);
    for e in entries {
        let csv = r.text(e["csv"].as_str().unwrap());
        assert!(csv.starts_with("scale,z1,z2,z3,alpha,beta,gamma\n"));
        assert!(csv.lines().count() > 20);
    }
}

fn outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut m = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().replace('\\', "/");
                m.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    m
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["simplex", "convexity", "classify", "hypotheses"] {
        let a = run_in(&dir.path().join(format!("{cmd}-a")), cmd, &model_config(LG_B, 16), &["--seed", "5"], &[]);
        let b = run_in(&dir.path().join(format!("{cmd}-b")), cmd, &model_config(LG_B, 16), &["--seed", "5"], &[]);
        assert_eq!(a.code(), 0);
        let (mut fa, mut fb) = (outputs(&a.out), outputs(&b.out));
        fa.remove("manifest.json");
        fb.remove("manifest.json");
        assert!(!fa.is_empty());
        assert_eq!(fa, fb, "{cmd}");
    }
}

#[test]
fn manifest_lists_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = model_config(LG_B, 16);
    let r = run_in(dir.path(), "simplex", &cfg, &[], &[]);
    let m = r.json("manifest.json");
    assert_eq!(m["command"], "simplex");
    assert_eq!(m["config_sha256"], sha256_hex(cfg.as_bytes()));
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert!(!m["timings"].as_array().unwrap().is_empty());
    let mut listed = BTreeMap::new();
    for e in m["files"].as_array().unwrap() {
        listed.insert(e["path"].as_str().unwrap().to_string(), e["sha256"].as_str().unwrap().to_string());
    }
    let mut files = outputs(&r.out);
    files.remove("manifest.json");
    assert_eq!(listed.len(), files.len());
    for (name, bytes) in files {
        assert_eq!(listed.get(&name), Some(&sha256_hex(&bytes)), "{name}");
    }
}

fn sweep_config(models: &[&str], level: usize) -> String {
    format!(r#"{{"grid":{{"level":{level}}},"sweep":{{"models":[{}]}}}}"#, models.join(","))
}

#[test]
fn single_sample_sweep_matches_classify() {
    let dir = tempfile::tempdir().unwrap();
    let s = run_in(&dir.path().join("s"), "sweep", &sweep_config(&[LG_B], 32), &[], &[]);
    assert_eq!(s.code(), 0, "{}", s.stderr());
    let c = run_in(&dir.path().join("c"), "classify", &model_config(LG_B, 32), &[], &[]);
    assert_eq!(s.text("samples/0000/classify.json"), c.text("classify.json"));
    let csv = s.text("sweep.csv");
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    let margin: f64 = col("min_eig_margin").parse().unwrap();
    assert_eq!(margin.to_bits(), f(&c.json("classify.json")["min_margin"]).to_bits());
    assert_eq!(col("classify_verdict"), "NeatlyEmbeddedPredicted");
    assert_eq!(col("convex_with_margin"), "true");
    assert_eq!(col("implication"), "Holds");
    let summary = s.json("sweep_summary.json");
    assert_eq!(summary["counterexamples"], 0);
    assert_eq!(summary["holds"], 1);
}

#[test]
fn sweep_with_lg_c_has_no_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let s = run_in(dir.path(), "sweep", &sweep_config(&[LG_C], 64), &[], &[("CSLAB_WORKERS", "2")]);
    assert_eq!(s.code(), 0, "{}", s.stderr());
    let csv = s.text("sweep.csv");
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[15], "Nonconvex");
    assert_eq!(row[23], "NotApplicable");
    assert_eq!(s.json("sweep_summary.json")["workers"], 2);
}

#[test]
fn random_sweep_is_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"grid":{"level":8},"sweep":{"samples":4},"analysis":{"hypothesis_budget":50}}"#;
    let a = run_in(&dir.path().join("a"), "sweep", cfg, &[], &[("CSLAB_WORKERS", "1")]);
    let b = run_in(&dir.path().join("b"), "sweep", cfg, &[], &[("CSLAB_WORKERS", "3")]);
    assert_eq!(a.code(), 0, "{}", a.stderr());
    assert_eq!(a.text("sweep.csv"), b.text("sweep.csv"));
    assert_eq!(a.text("sweep.csv").lines().count(), 5);
    let bad = run_in(&dir.path().join("c"), "sweep", cfg, &[], &[("CSLAB_WORKERS", "0")]);
    assert_eq!(bad.code(), 1);
}

const PLUGIN: &str = r#"
import json, sys
shift = float(sys.argv[1])
for line in sys.stdin:
    req = json.loads(line)
    if req["op"] == "eval":
        out = [[3*x[0]/(1+x[0]+0.5*x[1]+0.5*x[2]),
                3*x[1]/(1+0.5*x[0]+x[1]+0.5*x[2]) + shift,
                3*x[2]/(1+0.5*x[0]+0.5*x[1]+x[2])] for x in req["points"]]
        print(json.dumps({"images": out}), flush=True)
    else:
        print(json.dumps({"error": "no jacobian"}), flush=True)
"#;

fn python() -> bool {
    std::process::Command::new("python3").arg("--version").output().is_ok_and(|o| o.status.success())
}

fn plugin_config(dir: &Path, shift: f64) -> String {
    let script = dir.join("plugin.py");
    fs::write(&script, PLUGIN).unwrap();
    format!(
        r#"{{"model":{{"type":"external","command":"python3","args":[{:?},"{shift}"],"absorbing_box":[3,3,3]}},"analysis":{{"hypothesis_budget":30}}}}"#,
        script.to_string_lossy()
    )
}

#[test]
fn external_plugin_reproduces_lg_b() {
    if !python() {
        eprintln!("python3 not available; skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let r = run_in(dir.path(), "classify", &plugin_config(dir.path(), 0.0), &[], &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let c = r.json("classify.json");
    assert_eq!(c["verdict"], "NeatlyEmbeddedPredicted");
    assert!((f(&c["min_margin"]) - 20.0 / 21.0).abs() < 1e-6);
}

#[test]
fn external_plugin_leaving_its_face_fails_h2() {
    if !python() {
        eprintln!("python3 not available; skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let r = run_in(dir.path(), "hypotheses", &plugin_config(dir.path(), 0.1), &[], &[]);
    assert_eq!(r.code(), 3, "{}", r.stderr());
    let h = r.json("hypotheses.json");
    assert_eq!(h["verdict"], "Fail");
    assert_eq!(h["reports"][0]["verdict"], "Fail");
}
