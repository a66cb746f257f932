//! End-to-end runs of the `weightscape` binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use weightscape::mlp::Mlp;
use weightscape::seed::derive_seed;

fn data_file(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist5k").join(name).display().to_string()
}

fn weightscape(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weightscape"))
        .args(args)
        .arg("--output-dir")
        .arg(out)
        .output()
        .unwrap()
}

fn dir_contents(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().into(), fs::read(&p).unwrap())
        })
        .collect()
}

fn small_data_args(images: &str, labels: &str) -> Vec<String> {
    ["--images", images, "--labels", labels, "--train-count", "300", "--test-count", "100"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn assert_deterministic(args: &[&str], expected: &[&str]) -> Vec<String> {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let first = weightscape(args, &a);
    assert!(first.status.success(), "{args:?}: {}", String::from_utf8_lossy(&first.stderr));
    let second = weightscape(args, &b);
    assert!(second.status.success());
    assert_eq!(first.stdout, second.stdout, "{args:?}");
    let (ca, cb) = (dir_contents(&a), dir_contents(&b));
    for name in expected {
        assert!(ca.contains_key(Path::new(name)), "{args:?} did not write {name}");
    }
    assert_eq!(ca, cb, "{args:?} artifacts differ between runs");
    String::from_utf8(first.stdout).unwrap().lines().map(String::from).collect()
}

#[test]
fn train_mlp_is_deterministic() {
    let (i, l) = (data_file("images-idx3-ubyte"), data_file("labels-idx1-ubyte"));
    let mut args = vec!["train-mlp".to_string(), "--epochs".into(), "2".into()];
    args.extend(small_data_args(&i, &l));
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_deterministic(&args, &["mlp.model", "mlp_history.csv", "ascendance.csv", "mlp_eval.json"]);
}

#[test]
fn train_hopfield_is_deterministic() {
    let lines = assert_deterministic(
        &["train-hopfield", "--patterns", "random", "--seed", "3"],
        &["hopfield.net", "hopfield_iterations.csv", "hopfield_patterns.json"],
    );
    assert!(lines[0].starts_with("20 patterns of dimension 64"), "{lines:?}");
}

#[test]
fn attack_is_deterministic_and_parallel_agrees() {
    let (i, l) = (data_file("images-idx3-ubyte"), data_file("labels-idx1-ubyte"));
    let mut args = vec!["attack".to_string(), "--count".into(), "5".into(), "--dump-idx".into()];
    args.extend(small_data_args(&i, &l));
    let cfg = tempfile::NamedTempFile::new().unwrap();
    fs::write(cfg.path(), "[mlp]\nepochs = 3\n").unwrap();
    args.extend(["--config".to_string(), cfg.path().display().to_string()]);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_deterministic(
        &args,
        &["transfer_report.json", "adversarial-images-idx3-ubyte", "adversarial-labels-idx1-ubyte"],
    );

    let tmp = tempfile::tempdir().unwrap();
    let serial = weightscape(&args, &tmp.path().join("serial"));
    let mut par = args.clone();
    par.push("--parallel");
    let parallel = weightscape(&par, &tmp.path().join("parallel"));
    assert!(serial.status.success() && parallel.status.success());
    assert_eq!(serial.stdout, parallel.stdout);
    assert_eq!(dir_contents(&tmp.path().join("serial")), dir_contents(&tmp.path().join("parallel")));
}

#[test]
fn equioutput_reports_every_replica() {
    let lines = assert_deterministic(&["equioutput"], &["equioutput.json"]);
    assert!(lines[0].starts_with("48/48 transforms equioutput"), "{lines:?}");
    assert!(lines.iter().any(|l| l.contains("rejected")), "{lines:?}");
}

#[test]
fn partition_prints_the_identity() {
    let lines = assert_deterministic(&["partition"], &["partition.json"]);
    assert_eq!(lines.len(), 3, "{lines:?}");
    for line in &lines {
        assert!(line.contains("16 = P_t+P_g+P_a+P_r"), "{line}");
    }
}

#[test]
fn landscape_is_deterministic() {
    assert_deterministic(
        &["landscape", "--dim", "24", "--count", "6", "--resolution", "9"],
        &[
            "landscape_before.csv",
            "landscape_after.csv",
            "landscape_before.json",
            "landscape_after.json",
            "basin_depth_before.csv",
            "basin_depth_after.csv",
        ],
    );
}

#[test]
fn missing_dataset_fails_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let r = weightscape(&["train-mlp", "--images", "/no/such/images-idx3-ubyte"], &out);
    assert!(!r.status.success());
    let stderr = String::from_utf8_lossy(&r.stderr);
    assert!(stderr.contains("/no/such/images-idx3-ubyte"), "{stderr}");
    assert!(!out.exists());
}

#[test]
fn bad_config_fails_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[landscape]\nresolution = 1\n").unwrap();
    let out = tmp.path().join("out");
    let r = weightscape(&["landscape", "--config", cfg.to_str().unwrap()], &out);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("landscape.resolution"));
    assert!(!out.exists());
}

#[test]
fn zero_epochs_keeps_the_initial_model() {
    let (i, l) = (data_file("images-idx3-ubyte"), data_file("labels-idx1-ubyte"));
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["train-mlp".to_string(), "--epochs".into(), "0".into(), "--seed".into(), "9".into()];
    args.extend(small_data_args(&i, &l));
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let r = weightscape(&args, tmp.path());
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let saved = Mlp::load(tmp.path().join("mlp.model")).unwrap();
    assert_eq!(saved, Mlp::init(&[784, 64, 10], derive_seed(9, "mlp-init")).unwrap());
}
