//! Headered JSONL artifacts.
//!
//! Every inter-stage file is newline-delimited JSON with a one-line header
//! record carrying the schema name and version, e.g.
//! `{"schema":"shoptalk/profiles","version":1}`. Readers reject files whose
//! header does not match what they expect.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is empty, expected a header record")]
    MissingHeader { path: String },
    #[error("{path} has schema '{found}', expected '{expected}'")]
    SchemaMismatch {
        path: String,
        expected: String,
        found: String,
    },
    #[error("{path}:{line}: {source}")]
    Record {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Header {
    pub schema: String,
    pub version: u32,
}

fn io_err(path: &Path, source: std::io::Error) -> JsonlError {
    JsonlError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write a headered JSONL file atomically enough for pipeline use: the
/// header line first, then one record per line in iteration order.
pub fn write_jsonl<T, I>(path: &Path, schema: &str, items: I) -> Result<usize, JsonlError>
where
    T: Serialize,
    I: IntoIterator<Item = T>,
{
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err(path, e))?;
    }
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut writer = BufWriter::new(file);
    let header = Header {
        schema: schema.to_string(),
        version: SCHEMA_VERSION,
    };
    serde_json::to_writer(&mut writer, &header)
        .map_err(|e| io_err(path, std::io::Error::other(e)))?;
    writer.write_all(b"\n").map_err(|e| io_err(path, e))?;
    let mut count = 0;
    for item in items {
        serde_json::to_writer(&mut writer, &item)
            .map_err(|e| io_err(path, std::io::Error::other(e)))?;
        writer.write_all(b"\n").map_err(|e| io_err(path, e))?;
        count += 1;
    }
    writer.flush().map_err(|e| io_err(path, e))?;
    Ok(count)
}

/// Read a headered JSONL file, checking the schema name.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path, schema: &str) -> Result<Vec<T>, JsonlError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();

    let header_line = lines
        .next()
        .ok_or_else(|| JsonlError::MissingHeader {
            path: path.display().to_string(),
        })?
        .map_err(|e| io_err(path, e))?;
    let header: Header =
        serde_json::from_str(&header_line).map_err(|e| JsonlError::Record {
            path: path.display().to_string(),
            line: 1,
            source: e,
        })?;
    if header.schema != schema {
        return Err(JsonlError::SchemaMismatch {
            path: path.display().to_string(),
            expected: schema.to_string(),
            found: header.schema,
        });
    }

    let mut items = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| JsonlError::Record {
            path: path.display().to_string(),
            line: idx + 2,
            source: e,
        })?;
        items.push(item);
    }
    Ok(items)
}
