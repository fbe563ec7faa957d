//! CSV tables and JSON schemas.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use vtgan_core::data::{DataError, RawTable, TableSchema};

use crate::error::{Error, Result};

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_string(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_to_string(path)?).map_err(|e| Error::parse(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::parse(path, e))?;
    write_string(path, &text)
}

pub fn read_schema(path: &Path) -> Result<TableSchema> {
    let schema: TableSchema = read_json(path)?;
    schema.validate().map_err(|e| Error::parse(path, e))?;
    Ok(schema)
}

/// Reads a headed CSV against `schema`. Errors name the file, the 1-based
/// line and the column.
pub fn read_csv(path: &Path, schema: &TableSchema) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::parse(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::parse(path, e))?;
        records.push(rec.iter().map(str::to_string).collect::<Vec<_>>());
    }
    RawTable::from_records(schema, &header, &records).map_err(|e| {
        let line = |row: usize| row + 2;
        match e {
            DataError::Parse { row, column, value } => Error::parse(
                path,
                format!("line {}, column {column}: cannot parse {value:?} as a number", line(row)),
            ),
            DataError::Validation { row, column, detail } => {
                Error::parse(path, format!("line {}, column {column}: {detail}", line(row)))
            }
            other => Error::parse(path, other),
        }
    })
}

pub fn write_csv(path: &Path, table: &RawTable) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e))?;
    w.write_record(table.schema.names()).map_err(|e| Error::parse(path, e))?;
    for rec in table.records() {
        w.write_record(&rec).map_err(|e| Error::parse(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use vtgan_core::fixtures;

    #[test]
    fn csv_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let (table, _) = fixtures::correlated(50, 1).unwrap();
        let p = dir.path().join("t.csv");
        write_csv(&p, &table).unwrap();
        let back = read_csv(&p, &table.schema).unwrap();
        assert_eq!(back, table);
    }

    #[test]
    fn parse_errors_carry_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let (table, _) = fixtures::correlated(3, 1).unwrap();
        let p = dir.path().join("bad.csv");
        write_string(&p, "x_a,cat_a,imb,x_b,cat_b,mix_b\n1,lo,common,2,neg,0\noops,lo,common,2,neg,0\n").unwrap();
        let msg = read_csv(&p, &table.schema).unwrap_err().to_string();
        assert!(msg.contains("line 3") && msg.contains("x_a"), "{msg}");
    }
}
