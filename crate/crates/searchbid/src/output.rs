//! CSV tables and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Cell as a number; `None` when empty or unparseable.
    pub fn get(&self, row: usize, name: &str) -> Option<f64> {
        self.column(name)
            .and_then(|c| self.rows.get(row)?.get(c)?.parse().ok())
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let wrap = |e: csv::Error| Error::csv("table", e);
        w.write_record(&self.header).map_err(wrap)?;
        for r in &self.rows {
            w.write_record(r).map_err(wrap)?;
        }
        w.into_inner().map_err(|e| Error::Format(e.to_string()))
    }
}

/// Shortest round-trip decimal; empty for NaN so missing values read as
/// blanks.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        x.to_string()
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map_or(String::new(), num)
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes each table as `<name>.csv`, the normalized configuration as
/// `<scenario>.config` and a manifest listing every file with its digest.
/// Nothing run-specific such as paths or times goes into the files, so
/// reruns are byte-identical.
pub fn write_outputs(
    dir: &Path,
    cfg: &RunConfig,
    tables: &[(String, Table)],
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let scenario = cfg.scenario.name();
    let mut written = Vec::new();
    let mut manifest = format!(
        "scenario = {scenario}\nschema_version = {}\nconfig_hash = {}\nmaster_seed = {}\n",
        crate::ingest::SCHEMA_VERSION,
        cfg.hash(),
        cfg.seed
    );
    let config_name = format!("{scenario}.config");
    let config_text = cfg.normalized();
    let path = dir.join(&config_name);
    write(&path, config_text.as_bytes())?;
    manifest.push_str(&format!(
        "file = {config_name} sha256={}\n",
        hex::encode(Sha256::digest(config_text.as_bytes()))
    ));
    written.push(path);
    for (name, table) in tables {
        let bytes = table.to_csv()?;
        let file = format!("{name}.csv");
        let path = dir.join(&file);
        write(&path, &bytes)?;
        manifest.push_str(&format!(
            "file = {file} sha256={} rows={}\n",
            hex::encode(Sha256::digest(&bytes)),
            table.rows.len()
        ));
        written.push(path);
    }
    let path = dir.join(format!("{scenario}.manifest"));
    write(&path, manifest.as_bytes())?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_and_lookup() {
        let mut t = Table::new(["a", "b"]);
        t.push(vec!["1.5".into(), "x, y".into()]);
        assert_eq!(
            String::from_utf8(t.to_csv().unwrap()).unwrap(),
            "a,b\n1.5,\"x, y\"\n"
        );
        assert_eq!(t.get(0, "a"), Some(1.5));
        assert_eq!(t.get(0, "b"), None);
        assert_eq!(t.get(0, "c"), None);
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1 + 0.2, 1.0 / 3.0, 1e-300, 2.0959] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(f64::NAN), "");
        assert_eq!(opt(None), "");
    }

    #[test]
    fn manifest_lists_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::default();
        let t = Table::new(["x"]);
        let files = write_outputs(dir.path(), &cfg, &[("theta-sweep".into(), t)]).unwrap();
        assert_eq!(files.len(), 3);
        let m = fs::read_to_string(dir.path().join("theta-sweep.manifest")).unwrap();
        assert!(m.contains(&cfg.hash()));
        assert!(m.contains("file = theta-sweep.csv"));
    }
}
