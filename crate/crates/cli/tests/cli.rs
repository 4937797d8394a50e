use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn linkproj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linkproj"))
        .args(args)
        .env("LINKPROJ_LOG", "error")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path
}

const FATTREE: &str = r#"
[inventory]
switches = 2
ports = 64
table_capacity = 4096

[[topology]]
name = "ft"
generate = { family = "fattree", k = 4 }
"#;

const TWO: &str = r#"
[inventory]
switches = 2
ports = 64
table_capacity = 4096

[[topology]]
name = "ft"
generate = { family = "fattree", k = 4 }

[[topology]]
name = "torus"
generate = { family = "torus", dims = [4, 4] }
"#;

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn check_feasible_fattree() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), FATTREE);
    let o = linkproj(&["check", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("topology ft: feasible"));
}

#[test]
fn check_infeasible_cube() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
[inventory]
switches = 1
ports = 64
table_capacity = 4096

[[topology]]
name = "cube"
generate = { family = "torus", dims = [4, 4, 4] }
"#,
    );
    let o = linkproj(&["check", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(
        stdout(&o).contains("suggest: add 6 switch(es) of 64 ports"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "this is = = not toml");
    assert_eq!(
        code(&linkproj(&["check", "--config", cfg.to_str().unwrap()])),
        2
    );
    assert_eq!(code(&linkproj(&["check"])), 2);
    assert_eq!(code(&linkproj(&["bogus"])), 2);
    let cfg = write_config(tmp.path(), FATTREE);
    let c = cfg.to_str().unwrap();
    assert_eq!(
        code(&linkproj(&["check", "--config", c, "--scheme", "mesh-dor"])),
        2
    );
    assert_eq!(
        code(&linkproj(&["check", "--config", c, "--format", "xml"])),
        2
    );
    let out = tmp.path().join("nothing-here");
    assert_eq!(
        code(&linkproj(&[
            "verify",
            "--config",
            c,
            "--out",
            out.to_str().unwrap()
        ])),
        2
    );
}

#[test]
fn deploy_then_verify_shared_wiring() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TWO);
    let out = tmp.path().join("out");
    let (c, o) = (cfg.to_str().unwrap(), out.to_str().unwrap());
    let d = linkproj(&["deploy", "--config", c, "--out", o]);
    assert_eq!(code(&d), 0, "{}", stdout(&d));

    let listed: Vec<String> = files(&out).into_iter().map(|(p, _)| p).collect();
    let wiring: Vec<&String> = listed.iter().filter(|p| p.starts_with("wiring/")).collect();
    assert_eq!(wiring.len(), 3);
    for t in ["ft", "torus"] {
        for f in [
            "projection.manifest",
            "partition.report",
            "routes.txt",
            "rules/sw0.rules",
            "rules/sw1.rules",
        ] {
            assert!(listed.contains(&format!("{t}/{f}")), "missing {t}/{f}");
        }
    }

    let v = linkproj(&["verify", "--config", c, "--out", o]);
    assert_eq!(code(&v), 0, "{}", stdout(&v));
    assert!(stdout(&v).contains("equivalence ft: 240/240 pairs equivalent"));
    assert!(stdout(&v).contains("equivalence torus: 240/240 pairs equivalent"));
    assert!(stdout(&v).contains("verdict PASS"));

    // rerun: byte-identical
    let before = files(&out);
    assert_eq!(code(&linkproj(&["deploy", "--config", c, "--out", o])), 0);
    assert_eq!(before, files(&out));
}

#[test]
fn tampered_rules_fail_verify() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), FATTREE);
    let out = tmp.path().join("out");
    let (c, o) = (cfg.to_str().unwrap(), out.to_str().unwrap());
    assert_eq!(code(&linkproj(&["deploy", "--config", c, "--out", o])), 0);
    let path = out.join("ft/rules/sw0.rules");
    let text = fs::read_to_string(&path).unwrap();
    let line = text
        .lines()
        .find(|l| l.contains(" action output ") && !l.contains("set_vc"))
        .unwrap()
        .to_string();
    let (head, port) = line.rsplit_once(' ').unwrap();
    let other = if port == "1" { "2" } else { "1" };
    fs::write(&path, text.replacen(&line, &format!("{head} {other}"), 1)).unwrap();
    let v = linkproj(&["verify", "--config", c, "--out", o]);
    assert_eq!(code(&v), 1, "{}", stdout(&v));
    assert!(stdout(&v).contains("NOT equivalent"));
}

#[test]
fn oftext_and_codeploy() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
format = "oftext"

[inventory]
switches = 1
ports = 64
table_capacity = 4096

[deploy]
mode = "co-deploy"

[[topology]]
name = "a"
generate = { family = "torus", dims = [3, 3] }

[[topology]]
name = "b"
generate = { family = "mesh", dims = [2, 2] }
"#,
    );
    let out = tmp.path().join("out");
    let (c, o) = (cfg.to_str().unwrap(), out.to_str().unwrap());
    assert_eq!(code(&linkproj(&["deploy", "--config", c, "--out", o])), 0);
    assert!(out.join("a/rules/sw0.oftext").exists());
    let v = linkproj(&["verify", "--config", c, "--out", o]);
    assert_eq!(code(&v), 0, "{}", stdout(&v));
    assert!(stdout(&v).contains("isolation: isolated"));
    let r = linkproj(&["verify", "--rebuild", "--config", c]);
    assert_eq!(code(&r), 0);
}

#[test]
fn topology_file_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("m.toml"),
        "name = \"m\"\n[generate]\nfamily = \"mesh\"\ndims = [3, 3]\n",
    )
    .unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
out = "artifacts"
[inventory]
switches = 1
ports = 64
table_capacity = 4096

[[topology]]
file = "m.toml"
"#,
    );
    let c = cfg.to_str().unwrap();
    assert_eq!(
        code(&linkproj(&[
            "deploy",
            "--config",
            c,
            "--scheme",
            "shortest-path",
            "--seed",
            "3"
        ])),
        0
    );
    let report = fs::read_to_string(tmp.path().join("artifacts/deploy.report")).unwrap();
    assert!(report.contains("routing shortest-path"), "{report}");
    assert_eq!(
        code(&linkproj(&[
            "verify",
            "--config",
            c,
            "--scheme",
            "shortest-path"
        ])),
        0
    );
}

#[test]
fn capacity_overflow_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &FATTREE.replace("table_capacity = 4096", "table_capacity = 100"),
    );
    let o = linkproj(&["check", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(
        stdout(&o).contains("suggest: merge entries"),
        "{}",
        stdout(&o)
    );
}
