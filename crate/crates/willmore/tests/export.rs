use std::fs;

use nalgebra::DMatrix;

use willmore_dpw::geometry::{find_constant_combination, fit_quadric, sphere_points};
use willmore_dpw::potential::MinimalClass;
use willmore_dpw::io::{self, export_mesh, parse_report, write_report, MeshFormat, MeshOutput, RunConfig};

fn config(text: &str) -> RunConfig {
    RunConfig::from_json(text, "test").unwrap()
}

fn hopf_config() -> RunConfig {
    config(
        r#"{"builder": {"kind": "equivariant-so4", "r": 1, "l": 0, "h": 0},
            "grid": {"u_range": [-1.5, 1.5], "v_range": [-0.75, 0.75], "nu": 25, "nv": 13}}"#,
    )
}

/// Minimal OBJ reader: `v` lines and 1-based `f` lines only.
fn read_obj(text: &str) -> (Vec<[f64; 3]>, Vec<Vec<usize>>) {
    let mut verts = Vec::new();
    let mut faces = Vec::new();
    for line in text.lines() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let xs: Vec<f64> = it.map(|t| t.parse().unwrap()).collect();
                assert_eq!(xs.len(), 3);
                verts.push([xs[0], xs[1], xs[2]]);
            }
            Some("f") => faces.push(it.map(|t| t.parse::<usize>().unwrap()).collect()),
            _ => {}
        }
    }
    (verts, faces)
}

#[test]
fn obj_reimports_with_same_vertices() {
    let out = io::run(&hopf_config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hopf.obj");
    export_mesh(&out.mesh, MeshFormat::Obj, &path).unwrap();
    let (verts, faces) = read_obj(&fs::read_to_string(&path).unwrap());
    let want: Vec<[f64; 3]> = out.mesh.points.iter().flatten().copied().collect();
    assert_eq!(verts.len(), want.len());
    for (a, b) in verts.iter().zip(&want) {
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < 1e-6);
        }
    }
    assert_eq!(faces.len(), 24 * 12);
    assert!(faces.iter().all(|f| f.len() == 4 && f.iter().all(|&i| (1..=verts.len()).contains(&i))));
}

#[test]
fn invalid_vertices_drop_their_quads() {
    let mut m = MeshOutput { nu: 3, nv: 3, points: (0..9).map(|k| Some([k as f64, 0.0, 1.0])).collect(), channels: vec![] };
    m.points[4] = None;
    assert!(m.faces().is_empty());
    m.points[4] = Some([4.0, 0.0, 1.0]);
    m.points[0] = None;
    let faces = m.faces();
    assert_eq!(faces.len(), 3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("holes.obj");
    export_mesh(&m, MeshFormat::Obj, &path).unwrap();
    let (verts, obj_faces) = read_obj(&fs::read_to_string(&path).unwrap());
    assert_eq!(verts.len(), 8);
    assert_eq!(verts[0], [1.0, 0.0, 1.0]);
    assert_eq!(obj_faces[0], vec![1, 2, 5, 4]);
}

#[test]
fn report_reparses_to_the_same_aggregates() {
    let out = io::run(&hopf_config()).unwrap();
    let mut buf = Vec::new();
    write_report(&out.report, &[("umbilic", &out.umbilic)], &mut buf).unwrap();
    let parsed = parse_report(std::str::from_utf8(&buf).unwrap()).unwrap();
    assert_eq!(parsed.aggregates, out.report.aggregates());
    assert_eq!(parsed.rows.len(), 25 * 13);
    assert_eq!(parsed.header.last().map(String::as_str), Some("umbilic"));
    let col = parsed.header.iter().position(|h| h == "duality").unwrap();
    for (row, r) in parsed.rows.iter().zip(&out.report.rows) {
        assert_eq!(row[col], r.duality);
    }
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let write = |tag: &str| {
        let mut c = hopf_config();
        c.outputs.obj = Some(dir.path().join(format!("{tag}.obj")));
        c.outputs.ply = Some(dir.path().join(format!("{tag}.ply")));
        c.outputs.report = Some(dir.path().join(format!("{tag}.csv")));
        let out = io::run(&c).unwrap();
        io::write_outputs(&c.outputs, &out).unwrap();
    };
    write("a");
    write("b");
    for ext in ["obj", "ply", "csv"] {
        let a = fs::read(dir.path().join(format!("a.{ext}"))).unwrap();
        let b = fs::read(dir.path().join(format!("b.{ext}"))).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{ext} differs");
    }
}

#[test]
fn hopf_origin_config_is_a_clifford_torus() {
    let out = io::run(&hopf_config()).unwrap();
    assert_eq!(out.valid_count(), 25 * 13);
    // Minimal in the round sphere picked out by X; boost X onto e_{-1} first.
    let cc = find_constant_combination(&out.surface).unwrap();
    assert_eq!(cc.class, MinimalClass::S3);
    let sign = cc.vector[0].signum();
    let x: Vec<f64> = cc.vector.iter().map(|v| sign * v).collect();
    assert!(x[2..].iter().all(|v| v.abs() < 1e-12));
    let s = (x[1] / x[0]).atanh();
    let mut boost = DMatrix::identity(5, 5);
    boost[(0, 0)] = s.cosh();
    boost[(1, 1)] = s.cosh();
    boost[(0, 1)] = -s.sinh();
    boost[(1, 0)] = -s.sinh();
    let fit = fit_quadric(&sphere_points(&out.surface.transform(&boost))).unwrap();
    assert!(fit.residual < 1e-3, "{}", fit.residual);
    let mut ev = fit.eigenvalues.clone();
    ev.sort_by(|a, b| a.total_cmp(b));
    assert!(ev[0] < 0.0 && ev[1] < 0.0 && ev[2] > 0.0 && ev[3] > 0.0);
    assert!(ev.iter().all(|x| (x.abs() - 1.0).abs() < 1e-3), "{ev:?}");
}

#[test]
fn lawson_report_has_small_conformality() {
    let c = config(
        r#"{"builder": {"kind": "boundary", "mu": "0", "k": "i", "rho": "-1/2",
                        "initial_frame": {"kind": "circle", "theta": 3.141592653589793}},
            "grid": {"u_range": [-3.141592653589793, 3.141592653589793], "v_range": [-0.6, 0.6], "nu": 33, "nv": 33}}"#,
    );
    let out = io::run(&c).unwrap();
    let mut buf = Vec::new();
    write_report(&out.report, &[], &mut buf).unwrap();
    let parsed = parse_report(std::str::from_utf8(&buf).unwrap()).unwrap();
    let col = parsed.header.iter().position(|h| h == "conformality").unwrap();
    let worst = parsed.rows.iter().map(|r| r[col]).fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn config_text_round_trips() {
    let texts = [
        r#"{"builder": {"kind": "circle-family", "m": "sinh(u)", "beta": 0.5}, "model": {"kind": "sphere"}}"#,
        r#"{"builder": {"kind": "so13", "params": {"variant": "abz", "h": 0.5, "r": 2.0}}, "truncation": 16}"#,
        r#"{"builder": {"kind": "raw-potential", "b1": ["0", "0", "0"], "b2": ["1", "i", "0"]},
            "grid": {"u_range": [-1, 1], "v_range": [-1, 1], "nu": 5, "nv": 5, "base": [0.5, 0]}}"#,
        r#"{"builder": {"kind": "closed-form", "family": "hyperbolic_lawson", "r": 2.0},
            "outputs": {"obj": "a.obj", "report": "a.csv"}, "tolerances": {"duality": 1e-6}}"#,
    ];
    for t in texts {
        let c = config(t);
        assert_eq!(config(&c.to_json()), c);
    }
}
