use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::games::{EpisodeOutcome, Method, Scenario, TurnLog};
use crate::{Error, Result};

/// Version stamped on every dataset and record line.
pub const SCHEMA_VERSION: u32 = 1;

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

/// One scenario per line of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetLine {
    #[serde(default = "schema_version")]
    pub schema: u32,
    #[serde(flatten)]
    pub scenario: Scenario,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    #[serde(default = "schema_version")]
    pub schema: u32,
    pub config_fingerprint: String,
    pub repetition: usize,
    pub index: usize,
    pub episode_seed: u64,
    pub method: Method,
    pub scenario: Scenario,
    pub transcript: Vec<TurnLog>,
    pub outcome: EpisodeOutcome,
}

/// Writes one JSON document per line, creating parent directories.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = JsonlWriter::create(path)?;
    for item in items {
        w.append(item)?;
    }
    w.finish()
}

/// Reads one JSON document per line. Blank lines are skipped; a bad line
/// fails with its one-based number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

/// Appending line writer; each item is flushed as it is written.
pub struct JsonlWriter {
    inner: BufWriter<File>,
}

impl JsonlWriter {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Self {
            inner: BufWriter::new(File::create(path)?),
        })
    }

    pub fn append<T: Serialize>(&mut self, item: &T) -> Result<()> {
        serde_json::to_writer(&mut self.inner, item)?;
        self.inner.write_all(b"\n")?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

pub fn persist_records(records: &[EpisodeRecord], path: &Path) -> Result<()> {
    write_jsonl(path, records)
}

pub fn load_records(path: &Path) -> Result<Vec<EpisodeRecord>> {
    read_jsonl(path)
}

pub fn write_dataset(path: &Path, scenarios: &[Scenario]) -> Result<()> {
    let lines: Vec<DatasetLine> = scenarios
        .iter()
        .map(|s| DatasetLine {
            schema: SCHEMA_VERSION,
            scenario: s.clone(),
        })
        .collect();
    write_jsonl(path, &lines)
}

pub fn read_dataset(path: &Path) -> Result<Vec<Scenario>> {
    let lines: Vec<DatasetLine> = read_jsonl(path)?;
    if let Some(l) = lines.iter().find(|l| l.schema != SCHEMA_VERSION) {
        return Err(Error::Data(format!(
            "{}: unsupported dataset schema {}",
            path.display(),
            l.schema
        )));
    }
    Ok(lines.into_iter().map(|l| l.scenario).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::ckbg::case_study_setting;

    #[test]
    fn dataset_lines_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        let scenarios = vec![Scenario::Ckbg(case_study_setting())];
        write_dataset(&p, &scenarios).unwrap();
        let raw = std::fs::read_to_string(&p).unwrap();
        assert!(raw.starts_with(r#"{"schema":1,"game":"ckbg","scenario":{"id":"case-study""#));
        assert_eq!(read_dataset(&p).unwrap(), scenarios);
    }

    #[test]
    fn empty_and_truncated_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        std::fs::write(&p, "").unwrap();
        assert!(load_records(&p).unwrap().is_empty());
        std::fs::write(&p, "{\"schema\":1}\n{\"sche").unwrap();
        match load_records(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
    }
}
