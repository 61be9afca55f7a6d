use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sarlatent"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn run(out_dir: &Path, args: &[&str]) -> Output {
    bin().arg("--out-dir").arg(out_dir).args(args).output().unwrap()
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
    assert_eq!(bin().output().unwrap().status.code(), Some(1));
    assert_eq!(bin().args(["fit", "--bogus"]).output().unwrap().status.code(), Some(1));
    assert_eq!(bin().args(["invert", "--model", "m.toml"]).output().unwrap().status.code(), Some(1));
    assert_eq!(bin().args(["measure", "--reference", "r.pgm", "--property", "spin"]).output().unwrap().status.code(), Some(1));
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["invert", "--model", "missing.toml", "--target", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.toml"));

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "seed = 1\nbogus = 2\n").unwrap();
    let out = bin().arg("--config").arg(&cfg).args(["invert", "--model", "m.toml", "--target", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let manifest = dir.path().join("manifest.tsv");
    fs::write(&manifest, "# image_path\tc1\tnoise_seed\na.pgm\tnot-a-number\t0\n").unwrap();
    let out = run(dir.path(), &["fit", "--manifest", p(&manifest), "--reference", "r.pgm", "--family", "tanh_1c", "--property", "rotation"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2"));
}

#[test]
fn singular_design_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("manifest.tsv");
    fs::write(&manifest, "# image_path\tc1\tnoise_seed\na.pgm\t0.5\t0\nb.pgm\t0.5\t1\nc.pgm\t0.5\t2\n").unwrap();
    let meas = dir.path().join("meas.csv");
    fs::write(&meas, "path,rotation,peak_correlation\na.pgm,1,1\nb.pgm,2,1\nc.pgm,3,1\n").unwrap();
    let out = run(
        dir.path(),
        &["fit", "--manifest", p(&manifest), "--measurements", p(&meas), "--family", "linear_1c", "--property", "rotation"],
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn one_code_rotation_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = data("mock_rotation.toml");
    ok(run(d, &["sweep", "--generator", p(&spec)]));
    let manifest = d.join("manifest.tsv");
    let reference = d.join("reference.pgm");
    assert_eq!(fs::read_to_string(&manifest).unwrap().lines().count(), 31);

    ok(run(d, &["fit", "--manifest", p(&manifest), "--reference", p(&reference), "--family", "tanh_1c", "--property", "rotation"]));
    let model = d.join("model.toml");
    assert!(fs::read_to_string(&model).unwrap().contains("TANH_1C"));

    // Measuring to CSV and fitting from it gives the same coefficients.
    ok(run(d, &["measure", "--reference", p(&reference), "--property", "rotation", "--manifest", p(&manifest), "--output", "meas.csv"]));
    ok(run(
        d,
        &["fit", "--manifest", p(&manifest), "--measurements", p(&d.join("meas.csv")), "--family", "tanh_1c", "--property", "rotation", "--output", "from_csv.toml"],
    ));
    let coeffs = |path: &Path| {
        fs::read_to_string(path).unwrap().lines().find(|l| l.starts_with("coefficients")).unwrap().to_string()
    };
    assert_eq!(coeffs(&model), coeffs(&d.join("from_csv.toml")));

    let inv = ok(run(d, &["invert", "--model", p(&model), "--target", "21.67,33.33"]));
    for row in csv_rows(&inv) {
        assert_eq!(row[3], "ok");
        let (target, predicted): (f64, f64) = (row[0].parse().unwrap(), row[2].parse().unwrap());
        assert!((target - predicted).abs() < 1e-9);
    }

    ok(run(d, &["evaluate", "--model", p(&model), "--generator", p(&spec), "--target", "21.67,33.33,45.33,56.67"]));
    let report = fs::read_to_string(d.join("report.csv")).unwrap();
    assert!(report.starts_with("property,target,c1,c2,measured,abs_error,status\n"));
    let rows = csv_rows(&report);
    assert_eq!(rows.len(), 4);
    for row in rows {
        assert_eq!(row[6], "ok");
        assert!(row[5].parse::<f64>().unwrap() <= 2.0);
    }
}

#[test]
fn unreachable_targets_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.toml");
    fs::write(
        &model,
        "family = \"TANH_1C\"\nproperty_kind = \"rotation\"\ncoefficients = [5.0, 1.2, 0.1, 60.0]\n\
         fit_rms = 0.0\nsample_count = 30\ndegenerate = false\n",
    )
    .unwrap();
    let out = run(dir.path(), &["invert", "--model", p(&model), "--target", "10,99"]);
    assert_eq!(out.status.code(), Some(2));
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows[0][3], "ok");
    assert_eq!(rows[1][3], "unreachable");

    let out = run(dir.path(), &["evaluate", "--model", p(&model), "--generator", p(&data("mock_rotation.toml")), "--target", "10,99"]);
    assert_eq!(out.status.code(), Some(0));
    let report = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(report.lines().nth(2).unwrap().ends_with(",unreachable"));
}

fn write_model(path: &Path, family: &str, kind: &str, coefficients: &str) {
    fs::write(
        path,
        format!(
            "family = \"{family}\"\nproperty_kind = \"{kind}\"\ncoefficients = {coefficients}\n\
             fit_rms = 0.0\nsample_count = 900\ndegenerate = false\n"
        ),
    )
    .unwrap();
}

#[test]
fn levelset_and_intersect_on_hand_written_models() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.toml"), dir.path().join("b.toml"));
    // Inner arguments c1 and c2: level sets are the lines c1 = k and c2 = k.
    write_model(&a, "TANH_LIN_2C", "rotation", "[0.0, 1.0, 0.0, 0.0, 30.0]");
    write_model(&b, "TANH_LIN_2C", "scaling", "[1.0, 0.0, 1.0, 0.0, 0.3]");

    let ls = ok(run(dir.path(), &["levelset", "--model", p(&a), "--target", "15", "--samples", "5"]));
    let rows = csv_rows(&ls);
    assert_eq!(rows.len(), 5);
    let k = 0.5f64.atanh();
    for row in &rows {
        assert!((row[0].parse::<f64>().unwrap() - k).abs() < 1e-12);
    }

    let sol = ok(run(
        dir.path(),
        &["intersect", "--model-a", p(&a), "--target-a", "15", "--model-b", p(&b), "--target-b", "0.85"],
    ));
    let rows = csv_rows(&sol);
    assert_eq!(rows.len(), 1);
    let c: Vec<f64> = rows[0].iter().map(|v| v.parse().unwrap()).collect();
    assert!((c[0] - k).abs() < 1e-9 && (c[1] + k).abs() < 1e-9);
    assert!((c[2] - 15.0).abs() < 1e-8 && (c[3] - 0.85).abs() < 1e-8);
}

#[test]
fn simulate_transform_measure() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ok(run(d, &["simulate", "--scene", p(&data("ship_scene.toml")), "--angle", "0,-20"]));
    assert_eq!(out.lines().count(), 2);
    let (ref_img, turned) = (d.join("sim_000.pgm"), d.join("sim_001.pgm"));
    assert!(fs::read(&ref_img).unwrap().starts_with(b"P5\n28 28\n255\n"));

    let csv = ok(run(d, &["measure", "--reference", p(&ref_img), "--property", "rotation", "--min", "-40", "--max", "40", "--step", "0.5", p(&turned)]));
    let rows = csv_rows(&csv);
    assert_eq!(rows.len(), 1);
    assert!(rows[0][1].parse::<f64>().unwrap() < -10.0);

    ok(run(d, &["transform", "--input", p(&ref_img), "--output", "shifted.f32", "--translate", "3,-2"]));
    assert_eq!(fs::metadata(d.join("shifted.f32")).unwrap().len(), 8 + 28 * 28 * 4);
    let csv = ok(run(d, &["measure", "--reference", p(&ref_img), "--property", "translation", p(&d.join("shifted.f32"))]));
    let row = &csv_rows(&csv)[0];
    assert_eq!((row[1].as_str(), row[2].as_str()), ("3", "-2"));

    let out = run(d, &["transform", "--input", p(&ref_img), "--output", "x.pgm", "--translate", "1,2,3"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweeps_are_reproducible_from_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("noisy.toml");
    fs::write(&spec, "noise_amplitude = 0.05\n\n[[mapping]]\nproperty = \"rotation\"\ngain = 40.0\nslopes = [1.0]\n").unwrap();
    let sweep = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        ok(bin().arg("--out-dir").arg(&out).args(["--seed", seed, "sweep", "--generator", p(&spec), "--count", "5"]).output().unwrap());
        (1..5)
            .map(|i| fs::read(out.join(format!("images/img_{i:04}.pgm"))).unwrap())
            .chain([fs::read(out.join("manifest.tsv")).unwrap()])
            .collect::<Vec<_>>()
    };
    let (a, b, c) = (sweep("a", "9"), sweep("b", "9"), sweep("c", "10"));
    assert_eq!(a, b);
    assert_ne!(a, c);
}
