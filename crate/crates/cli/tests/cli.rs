use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn energyforge(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_energyforge"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("ENERGYFORGE_THREADS", "1")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn fixture(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "fixtures", name].iter().collect();
    p.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn sphere_runs_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let o = energyforge(&["all", "--spec", "catalog:sphere_north_south", "--grid", "64"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in [
        "analysis.json",
        "boxes.csv",
        "edges.csv",
        "order.json",
        "energy_grid.csv",
        "field_meta.json",
        "levels.json",
        "separatrices.json",
        "morse_check.json",
        "energy.svg",
    ] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("morse_check.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("order: sink < source"), "{stdout}");
}

#[test]
fn missing_spec_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = energyforge(&["analyze", "--spec", "/no/such/flow.flow"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("not found"));
}

#[test]
fn small_grid_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = energyforge(&["build", "--spec", "catalog:torus_height_gradient", "--grid", "8"], dir.path());
    assert_eq!(code(&o), 2);
    let o = energyforge(&["build", "--spec", "catalog:torus_height_gradient", "--tol-int", "0"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_without_a_field_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = energyforge(&["verify", "--spec", "catalog:torus_height_gradient"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn integration_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = energyforge(&["analyze", "--spec", &fixture("pole_on_unit_circle.flow")], dir.path());
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn center_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = energyforge(&["build", "--spec", "catalog:planar_center"], dir.path());
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(stderr(&o).contains("non-hyperbolic"));
}

#[test]
fn scaffold_failure_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let o = energyforge(&["build", "--spec", &fixture("sheared_torus.flow"), "--grid", "64"], dir.path());
    assert_eq!(code(&o), 5, "{}", stderr(&o));
    assert!(stderr(&o).contains("scaffold"));
}

#[test]
fn flipped_grid_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ["--spec", "catalog:sphere_north_south", "--grid", "64"];
    let o = energyforge(&[&["build"], &spec[..]].concat(), dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let path = dir.path().join("energy_grid.csv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    let mut flipped = format!("{}\n", lines.next().unwrap());
    for line in lines {
        let mut cols: Vec<String> = line.split(',').map(str::to_string).collect();
        let phi: f64 = cols[5].parse().unwrap();
        cols[5] = format!("{}", 3.0 - phi);
        flipped += &cols.join(",");
        flipped.push('\n');
    }
    fs::write(&path, flipped).unwrap();
    let o = energyforge(&[&["verify"], &spec[..]].concat(), dir.path());
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("monotone FAIL"), "{stdout}");
}

#[test]
fn verify_rejects_a_field_from_another_spec() {
    let dir = tempfile::tempdir().unwrap();
    let o = energyforge(&["build", "--spec", "catalog:circle_two_points", "--grid", "64"], dir.path());
    assert_eq!(code(&o), 0);
    let o = energyforge(&["verify", "--spec", "catalog:circle_two_points", "--tol-int", "1e-7"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["all", "--spec", "catalog:torus_height_gradient", "--grid", "128", "--seed", "5"];
    assert_eq!(code(&energyforge(&args, a.path())), 0);
    assert_eq!(code(&energyforge(&args, b.path())), 0);
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 10);
    for name in names {
        let x = fs::read(a.path().join(&name)).unwrap();
        let y = fs::read(b.path().join(&name)).unwrap();
        assert!(x == y, "{name:?} differs between runs");
    }
}

#[test]
fn plot_of_an_empty_directory_draws_the_legend() {
    let dir = tempfile::tempdir().unwrap();
    let o = energyforge(&["plot"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let svg = fs::read_to_string(dir.path().join("energy.svg")).unwrap();
    assert!(svg.contains("legend"));
    assert!(svg.contains("no energy field"));
}

#[test]
fn shipped_spec_files_load() {
    let specs: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "specs"].iter().collect();
    let dir = tempfile::tempdir().unwrap();
    let o = energyforge(&["order", "--spec", &specs.join("circle_four_points.flow").to_string_lossy()], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let order: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("order.json")).unwrap()).unwrap();
    assert!(order.is_object() || order.is_array());
}
