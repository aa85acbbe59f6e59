use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spdekit::inference::{condition, predict};
use spdekit::io;
use spdekit::mesh::{load_mesh, Mesh};
use spdekit::precision::{build_precision, FieldModel};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn spdekit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spdekit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(dir: &Path) -> Vec<(String, String)> {
    fs::read_to_string(dir.join("manifest.tsv"))
        .unwrap()
        .lines()
        .map(|l| {
            let (a, b) = l.split_once('\t').unwrap();
            (a.to_string(), b.to_string())
        })
        .collect()
}

#[test]
fn assemble_writes_matrix_stats_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("Q.mtx");
    let res = spdekit(&[
        "assemble",
        "--mesh",
        path_str(&data("square.mesh")),
        "--kappa",
        "4",
        "--out",
        path_str(&out),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let stats = fs::read_to_string(dir.path().join("stats.txt")).unwrap();
    for key in ["n=289", "nnz=", "logdet="] {
        assert!(stats.contains(key), "{stats}");
    }
    let names: Vec<String> = manifest(dir.path())
        .into_iter()
        .map(|(n, h)| {
            assert_eq!(h.len(), 64);
            n
        })
        .collect();
    assert_eq!(names, ["Q.mtx", "stats.txt"]);
    let q =
        spdekit::sparse::matrix_market::read_symmetric(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(q.n(), 289);
}

#[test]
fn krige_matches_library_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pred.csv");
    let res = spdekit(&[
        "krige",
        "--mesh",
        path_str(&data("square.mesh")),
        "--kappa",
        "6",
        "--tau",
        "0.5",
        "--noise-precision",
        "50",
        "--obs",
        path_str(&data("obs.csv")),
        "--predict",
        path_str(&data("grid.csv")),
        "--out",
        path_str(&out),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );

    let mesh = load_mesh(&fs::read_to_string(data("square.mesh")).unwrap()).unwrap();
    let model = FieldModel::stationary(&mesh, 2.0, 6.0, 0.5).unwrap();
    let q = build_precision(&model, &model.assemble(&mesh).unwrap()).unwrap();
    let obs = io::read_observations(&fs::read_to_string(data("obs.csv")).unwrap(), 50.0).unwrap();
    let a = mesh.evaluate_basis(&obs.locations);
    let post = condition(&q, &vec![0.0; mesh.n_vertices()], &a, &obs).unwrap();
    let points = io::read_points(&fs::read_to_string(data("grid.csv")).unwrap()).unwrap();
    let expected = io::write_predictions(&points, &predict(&post, &mesh, &points), 2);
    assert_eq!(fs::read_to_string(&out).unwrap(), expected);
}

#[test]
fn posterior_sd_smaller_near_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pred.csv");
    let conf = data("krige.conf");
    let root = data("");
    let res = Command::new(env!("CARGO_BIN_EXE_spdekit"))
        .current_dir(root.parent().unwrap())
        .args([
            "krige",
            "--config",
            path_str(&conf),
            "--obs",
            "data/obs.csv",
            "--predict",
            "data/grid.csv",
            "--out",
            path_str(&out),
        ])
        .output()
        .unwrap();
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    let mean_sd = |keep: &dyn Fn(f64) -> bool| {
        let sel: Vec<f64> = rows.iter().filter(|r| keep(r[0])).map(|r| r[3]).collect();
        sel.iter().sum::<f64>() / sel.len() as f64
    };
    let near = mean_sd(&|x| x < 0.35);
    let far = mean_sd(&|x| x > 0.7);
    assert!(near < 0.5 * far, "near {near} far {far}");
}

#[test]
fn seeded_runs_are_reproducible() {
    let run = |seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("samples.csv");
        let res = spdekit(&[
            "sample",
            "--mesh",
            "builtin:unit-square:8",
            "--kappa",
            "3",
            "--seed",
            seed,
            "--replicates",
            "3",
            "--out",
            path_str(&out),
        ]);
        assert!(res.status.success());
        manifest(dir.path())
    };
    assert_eq!(run("11"), run("11"));
    assert_ne!(run("11"), run("12"));

    let lgcp = || {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("pattern.csv");
        let res = spdekit(&[
            "lgcp-sim",
            "--mesh",
            "builtin:unit-square:6",
            "--eta",
            "3",
            "--seed",
            "5",
            "--out",
            path_str(&out),
        ]);
        assert!(res.status.success());
        fs::read_to_string(out).unwrap()
    };
    assert_eq!(lgcp(), lgcp());
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    fs::write(
        &conf,
        "mesh = builtin:unit-square:6\nkappa = 2\nalpha = 2\n",
    )
    .unwrap();
    let stats = |extra: &[&str], sub: &str| {
        let out = dir.path().join(sub).join("Q.mtx");
        let mut args = vec![
            "assemble",
            "--config",
            path_str(&conf),
            "--out",
            path_str(&out),
        ];
        args.extend_from_slice(extra);
        let res = spdekit(&args);
        assert!(
            res.status.success(),
            "{}",
            String::from_utf8_lossy(&res.stderr)
        );
        fs::read_to_string(dir.path().join(sub).join("stats.txt")).unwrap()
    };
    let from_file = stats(&[], "a");
    let overridden = stats(&["--kappa", "5"], "b");
    let direct = {
        let out = dir.path().join("c").join("Q.mtx");
        let res = spdekit(&[
            "assemble",
            "--mesh",
            "builtin:unit-square:6",
            "--kappa",
            "5",
            "--out",
            path_str(&out),
        ]);
        assert!(res.status.success());
        fs::read_to_string(dir.path().join("c").join("stats.txt")).unwrap()
    };
    assert_ne!(from_file, overridden);
    assert_eq!(overridden, direct);
}

#[test]
fn exit_codes_distinguish_failures() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("Q.mtx");
    let out = path_str(&out);

    let bad_value = spdekit(&[
        "assemble",
        "--mesh",
        "builtin:unit-square:4",
        "--kappa=-1",
        "--out",
        out,
    ]);
    assert_eq!(bad_value.status.code(), Some(1));
    let unknown_flag = spdekit(&[
        "assemble",
        "--mesh",
        "builtin:unit-square:4",
        "--bogus",
        "--out",
        out,
    ]);
    assert_eq!(unknown_flag.status.code(), Some(1));
    let missing_conf = spdekit(&["assemble", "--config", "/nonexistent/run.conf"]);
    assert_eq!(missing_conf.status.code(), Some(3));
    let missing_mesh = spdekit(&[
        "assemble",
        "--mesh",
        "/nonexistent/m.mesh",
        "--kappa",
        "1",
        "--out",
        out,
    ]);
    assert_eq!(missing_mesh.status.code(), Some(3));

    let pattern = dir.path().join("pts.csv");
    fs::write(&pattern, "x,y\n0.1,0.1\n0.2,0.8\n0.9,0.4\n").unwrap();
    let stalled = spdekit(&[
        "lgcp-fit",
        "--mesh",
        "builtin:unit-square:6",
        "--kappa",
        "3",
        "--prior-mean",
        "8",
        "--max-iter",
        "1",
        "--pattern",
        path_str(&pattern),
        "--out",
        path_str(&dir.path().join("eta.csv")),
    ]);
    assert_eq!(
        stalled.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&stalled.stderr)
    );
}

#[test]
fn validate_prints_table_row() {
    let res = spdekit(&["validate", "--suite", "takahashi"]);
    assert!(res.status.success());
    let stdout = String::from_utf8(res.stdout).unwrap();
    assert!(stdout.starts_with("PASS"), "{stdout}");
    assert_eq!(
        spdekit(&["validate", "--suite", "nope"]).status.code(),
        Some(1)
    );
}

#[test]
fn builtin_and_file_meshes_agree() {
    let text = fs::read_to_string(data("square.mesh")).unwrap();
    let file = load_mesh(&text).unwrap();
    let built = Mesh::unit_square(16).unwrap();
    assert_eq!(file.n_vertices(), built.n_vertices());
    assert_eq!(file.n_simplices(), built.n_simplices());
    assert!((file.total_measure() - built.total_measure()).abs() < 1e-12);
}
