//! Result files. Each run adds `results-<unix millis>.csv` and `.json` to
//! the output directory and refreshes the `latest.csv` / `latest.json`
//! copies; earlier timestamped files are never touched.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::{CliError, Result};
use crate::grid::{ResultRow, ResultTable};

pub const LATEST_CSV: &str = "latest.csv";
pub const LATEST_JSON: &str = "latest.json";

#[derive(Debug, Clone)]
pub struct WrittenFiles {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub latest_csv: PathBuf,
    pub latest_json: PathBuf,
}

pub fn table_to_csv(table: &ResultTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &table.rows {
        w.serialize(row).map_err(|source| CliError::Csv {
            path: "<memory>".into(),
            source,
        })?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io {
        path: "<memory>".into(),
        source: e.into_error(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn table_to_json(table: &ResultTable) -> Result<String> {
    serde_json::to_string_pretty(table).map_err(|source| CliError::Json {
        path: "<memory>".into(),
        source,
    })
}

pub fn read_table_csv(path: &Path) -> Result<ResultTable> {
    let csv_err = |source| CliError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let rows = r
        .deserialize::<ResultRow>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(csv_err)?;
    Ok(ResultTable { rows })
}

pub fn read_table_json(path: &Path) -> Result<ResultTable> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.display().to_string(),
        source,
    })
}

/// Either format, chosen by extension (`.json`, anything else is CSV).
pub fn read_table(path: &Path) -> Result<ResultTable> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => read_table_json(path),
        _ => read_table_csv(path),
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// First `results-<millis>[-n]` stem with neither file present yet.
fn fresh_stem(dir: &Path) -> String {
    let millis = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    let mut stem = format!("results-{millis}");
    let mut n = 1;
    while dir.join(format!("{stem}.csv")).exists() || dir.join(format!("{stem}.json")).exists() {
        stem = format!("results-{millis}-{n}");
        n += 1;
    }
    stem
}

pub fn write_results(table: &ResultTable, dir: &Path) -> Result<WrittenFiles> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let csv = table_to_csv(table)?;
    let json = table_to_json(table)?;
    let stem = fresh_stem(dir);
    let files = WrittenFiles {
        csv: dir.join(format!("{stem}.csv")),
        json: dir.join(format!("{stem}.json")),
        latest_csv: dir.join(LATEST_CSV),
        latest_json: dir.join(LATEST_JSON),
    };
    write(&files.csv, &csv)?;
    write(&files.json, &json)?;
    write(&files.latest_csv, &csv)?;
    write(&files.latest_json, &json)?;
    Ok(files)
}
