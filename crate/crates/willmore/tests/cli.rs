use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn willmore(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_willmore")).args(args).env_remove("WILLMORE_THREADS").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const HOPF: &str = r#"{"builder": {"kind": "equivariant-so4", "r": 1, "l": 0, "h": 0},
  "grid": {"u_range": [-1, 1], "v_range": [-0.5, 0.5], "nu": 11, "nv": 7}}"#;

#[test]
fn generate_writes_requested_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "hopf.json", HOPF);
    let obj = dir.path().join("m.obj");
    let csv = dir.path().join("r.csv");
    let o = willmore(&["generate", &cfg, "--mesh", obj.to_str().unwrap(), "--report", csv.to_str().unwrap(), "--nu", "9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("valid=63"));
    assert_eq!(fs::read_to_string(&obj).unwrap().lines().filter(|l| l.starts_with("v ")).count(), 63);
    assert!(fs::read_to_string(&csv).unwrap().contains("# valid=63"));
}

#[test]
fn classify_reports_isotropy_and_space_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "hopf.json", HOPF);
    let o = willmore(&["classify", &cfg, "--fit"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("minimal=S3"), "{s}");
    assert!(s.contains("isotropy=isotropic"));
    assert!(s.contains("fit_class=S3"));
}

#[test]
fn verify_passes_default_tolerances() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "hopf.json", HOPF);
    let o = willmore(&["verify", &cfg, "--threads", "1"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn oracle_and_export_write_meshes() {
    let dir = tempfile::tempdir().unwrap();
    let ply = dir.path().join("l.ply");
    let o = willmore(&["oracle", "--family", "lawson", "--r", "2", "--nu", "9", "--nv", "5", "--ply", ply.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(fs::read_to_string(&ply).unwrap().contains("element vertex 45"));

    let cfg = write_config(dir.path(), "hopf.json", HOPF);
    let obj = dir.path().join("e.obj");
    let o = willmore(&["export", &cfg, "--format", "obj", "--out", obj.to_str().unwrap(), "--u-range", "-0.5,0.5"]);
    assert!(o.status.success());
    assert!(fs::read_to_string(&obj).unwrap().contains("\nf "));
}

#[test]
fn bad_inputs_fail_with_context() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.json", r#"{"builder": {"kind": "boundary", "mu": "0", "k": "(", "rho": "0"}}"#);
    let o = willmore(&["generate", &bad]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.json"));

    let cfg = write_config(dir.path(), "hopf.json", HOPF);
    let o = willmore(&["generate", &cfg, "--nv", "1"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("invalid"));

    let o = Command::new(env!("CARGO_BIN_EXE_willmore")).args(["generate", &cfg]).env("WILLMORE_THREADS", "many").output().unwrap();
    assert!(!o.status.success());
}
