use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn searchbid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_searchbid"))
        .args(args)
        .env_remove("SEARCHBID_OUT")
        .output()
        .unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

const FAST: [&str; 6] = [
    "--set",
    "beta=1e-3",
    "--set",
    "convergence_window=1000",
    "--sessions",
    "2",
];

#[test]
fn theta_sweep_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = searchbid(
        &[
            &["theta-sweep", "--grid", "0:1:0.1", "--out", out][..],
            &FAST[..],
        ]
        .concat(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&dir.path().join("theta-sweep.csv"));
    assert_eq!(rows.len(), 11);
    for row in &rows {
        assert_eq!(row.len(), header.len());
        assert_eq!(
            row[header.iter().position(|h| h == "status").unwrap()],
            "ok"
        );
        for (h, v) in header.iter().zip(row) {
            assert!(!v.is_empty(), "blank {h} at θ = {}", row[1]);
        }
    }
    let col = |name: &str, k: usize| -> f64 {
        rows[k][header.iter().position(|h| h == name).unwrap()]
            .parse()
            .unwrap()
    };
    assert!((col("p_n", 0) - 1.4729).abs() < 1e-3);
    assert!((col("p_m", 0) - 1.925).abs() < 1e-3);
    assert!((col("p_n", 10) - 2.0959).abs() < 1e-3);
    let manifest = fs::read_to_string(dir.path().join("theta-sweep.manifest")).unwrap();
    assert!(manifest.contains(&format!(
        "config_hash = {}",
        rows[0][header.iter().position(|h| h == "config_hash").unwrap()]
    )));
    assert!(manifest.contains("file = theta-sweep.csv"));
}

#[test]
fn estimate_on_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let input = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
    let o = searchbid(&[
        "estimate",
        "--input",
        input,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&dir.path().join("estimate.csv"));
    let at = |name: &str| header.iter().position(|h| h == name).unwrap();
    let keywords: Vec<&str> = rows.iter().map(|r| r[at("keyword")].as_str()).collect();
    assert_eq!(
        keywords,
        ["phone-case", "usb-cable", "yoga-mat", "(pooled)"]
    );
    for r in &rows {
        assert_eq!(r[at("status")], "ok");
        let lambda: f64 = r[at("lambda")].parse().unwrap();
        assert!(lambda > 0.0);
    }
    assert_eq!(rows[3][at("ranking_lists")], "48");
    let (_, flags) = read_csv(&dir.path().join("estimate-flags.csv"));
    assert_eq!(flags.len(), 1);
    let (_, positions) = read_csv(&dir.path().join("estimate-positions.csv"));
    assert_eq!(positions.len(), 22);
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_searchbid"))
        .args([
            "synthetic-recovery",
            "--grid",
            "0.05",
            "--set",
            "replications=1",
            "--set",
            "synthetic_days=20",
        ])
        .env("SEARCHBID_OUT", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = read_csv(&dir.path().join("synthetic-recovery.csv"));
    assert_eq!(rows.len(), 1);
}

#[test]
fn exit_codes() {
    assert_eq!(
        searchbid(&["theta-sweep", "--no-such-flag"]).status.code(),
        Some(2)
    );
    assert_eq!(
        searchbid(&["theta-sweep", "--set", "alpha=2"])
            .status
            .code(),
        Some(2)
    );
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent");
    let o = searchbid(&[
        "estimate",
        "--input",
        missing.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("absent"));
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let o = searchbid(
            &[
                &[
                    "stateful-compare",
                    "--grid",
                    "0:1:0.5",
                    "--seed",
                    "5",
                    "--out",
                    out.to_str().unwrap(),
                ][..],
                &FAST[..],
            ]
            .concat(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(out.join("stateful-compare.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}
