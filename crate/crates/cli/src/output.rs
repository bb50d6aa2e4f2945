//! CSV and JSON writers. Every CSV starts with `# config: <json>`; JSON
//! documents carry the config as a field. No timestamps are written, so
//! reruns with the same config are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use jmperc::stats::EstimateCI;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::Result;

pub const CONFIG_PREFIX: &str = "# config: ";

/// Serializable mirror of [`EstimateCI`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub stderr: f64,
    pub trials: u64,
}

impl From<EstimateCI> for Estimate {
    fn from(e: EstimateCI) -> Self {
        Estimate {
            estimate: e.estimate,
            stderr: e.stderr,
            trials: e.trials,
        }
    }
}

pub fn csv_string<T: Serialize>(config: &ExperimentConfig, rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let body = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    let mut out = format!("{CONFIG_PREFIX}{}\n", config.header_json());
    out.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
    Ok(out)
}

pub fn write_csv<T: Serialize>(path: &Path, config: &ExperimentConfig, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, csv_string(config, rows)?)?;
    Ok(())
}

/// Rows of a CSV written by [`write_csv`], with its config header.
pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<(ExperimentConfig, Vec<T>)> {
    let text = fs::read_to_string(path)?;
    let (first, body) = text.split_once('\n').unwrap_or((&text, ""));
    let json = first
        .strip_prefix(CONFIG_PREFIX)
        .ok_or_else(|| crate::error::CliError::Config(format!("{}: missing config header", path.display())))?;
    let config: ExperimentConfig = serde_json::from_str(json)?;
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let rows = r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok((config, rows))
}

#[derive(Serialize, Deserialize)]
struct Document<'a, T> {
    config: std::borrow::Cow<'a, ExperimentConfig>,
    #[serde(flatten)]
    body: T,
}

pub fn json_string<T: Serialize>(config: &ExperimentConfig, body: &T) -> Result<String> {
    let doc = Document {
        config: std::borrow::Cow::Borrowed(config),
        body,
    };
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, config: &ExperimentConfig, body: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, json_string(config, body)?)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<(ExperimentConfig, T)> {
    let text = fs::read_to_string(path)?;
    let doc: Document<'static, T> = serde_json::from_str(&text)?;
    Ok((doc.config.into_owned(), doc.body))
}

/// `dir/stem.suffix` next to `path`, e.g. `run.csv` -> `run.trials.csv`.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Row {
        a: u32,
        b: f64,
    }

    #[test]
    fn csv_round_trip_keeps_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let cfg = ExperimentConfig::default();
        let rows = vec![Row { a: 1, b: 0.1 }, Row { a: 2, b: f64::INFINITY }];
        write_csv(&path, &cfg, &rows).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(CONFIG_PREFIX));
        assert_eq!(text.lines().nth(1), Some("a,b"));
        let (c, back): (_, Vec<Row>) = read_csv(&path).unwrap();
        assert_eq!(c, cfg);
        assert_eq!(back, rows);
    }

    #[test]
    fn sidecar_names() {
        assert_eq!(
            sidecar(Path::new("out/run.csv"), "trials.csv"),
            PathBuf::from("out/run.trials.csv")
        );
        assert_eq!(
            sidecar(Path::new("run"), "summary.json"),
            PathBuf::from("run.summary.json")
        );
    }
}
