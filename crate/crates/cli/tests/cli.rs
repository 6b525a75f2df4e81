use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn anisolab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anisolab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("ANISOLAB_OUT")
        .output()
        .unwrap()
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = match fs::read_dir(dir) {
        Ok(rd) => rd.map(|e| e.unwrap().file_name().into_string().unwrap()).collect(),
        Err(_) => vec![],
    };
    v.sort();
    v
}

fn report(dir: &Path, cmd: &str) -> serde_json::Value {
    let name = files(dir).into_iter().find(|f| f.starts_with(&format!("{cmd}-")) && f.ends_with(".json")).unwrap();
    serde_json::from_str(&fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

#[test]
fn exponents_quadratic_case() {
    let dir = tempfile::tempdir().unwrap();
    let o = anisolab(&["exponents", "--n", "4", "--p", "2", "--gamma", "0.75"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = files(dir.path()).into_iter().find(|f| f.ends_with(".csv")).unwrap();
    let text = fs::read_to_string(dir.path().join(csv)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "N,p,gamma,C_H,mu1,mu2,res1,res2");
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!((row[4] - 0.5).abs() < 1e-10 && (row[5] - 1.5).abs() < 1e-10, "{row:?}");
}

#[test]
fn gauge_check_euclidean_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = anisolab(&["gauge-check", "--gauge", "euclidean", "--dim", "3", "--samples", "200"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path(), "gauge-check");
    assert_eq!(r["passed"], true);
}

#[test]
fn malformed_config_exits_2_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for body in ["[params]\nN = \"four\"\n", "[params]\nbogus = 1\n", "[params]\np = 7.0\nN = 3\n", "not toml ["] {
        let cfg = dir.path().join("bad.toml");
        fs::write(&cfg, body).unwrap();
        let o = anisolab(&["exponents", "--config", cfg.to_str().unwrap()], &out);
        assert_eq!(o.status.code(), Some(2), "{body}");
        assert!(files(&out).is_empty());
    }
}

#[test]
fn flags_override_config_and_hash_names_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "command = \"exponents\"\nseed = 3\n[params]\nN = 5\np = 2.5\ngamma = 0.1\n").unwrap();
    let a = dir.path().join("a");
    let o = anisolab(&["--config", cfg.to_str().unwrap()], &a);
    assert!(o.status.success());
    let r = report(&a, "exponents");
    assert_eq!(r["config"]["params"]["N"], 5);
    let hash = r["config_hash"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 12);
    assert!(files(&a).iter().all(|f| f.contains(&hash)));

    let b = dir.path().join("b");
    let o = anisolab(&["--config", cfg.to_str().unwrap(), "--gamma", "0.2"], &b);
    assert!(o.status.success());
    let r = report(&b, "exponents");
    assert_eq!(r["config"]["params"]["gamma"], 0.2);
    assert_eq!(r["config"]["params"]["N"], 5);
    assert_ne!(r["config_hash"].as_str().unwrap(), hash);
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_anisolab"))
        .arg("exponents")
        .env("ANISOLAB_OUT", dir.path())
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(files(dir.path()).iter().any(|f| f.starts_with("exponents-") && f.ends_with(".csv")));
    assert!(!dir.path().join("anisolab-out").exists());
}
