//! CSV and JSON persistence of result rows.
//!
//! Floats are written in shortest round-trip form, so loading a file gives
//! back bit-identical rows.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{GviError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// A row type with a fixed CSV header, in field order.
pub trait Record: Serialize + DeserializeOwned {
    const HEADER: &'static [&'static str];
}

/// JSON file layout: `{schema, fingerprint, rows}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<R> {
    pub schema: u32,
    pub fingerprint: String,
    pub rows: Vec<R>,
}

/// Hex SHA-256 of the compact JSON form of `config`.
pub fn fingerprint<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("configuration serialises to JSON");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes the header and rows to any writer.
pub fn write_csv_to<R: Record, W: Write>(out: W, rows: &[R]) -> std::result::Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(R::HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string<R: Record>(rows: &[R]) -> String {
    let mut buf = Vec::new();
    write_csv_to(&mut buf, rows).expect("writing CSV to memory");
    String::from_utf8(buf).expect("CSV output is UTF-8")
}

pub fn write_csv<R: Record>(path: &Path, rows: &[R]) -> Result<()> {
    let file = File::create(path).map_err(|source| GviError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv_to(BufWriter::new(file), rows).map_err(|source| GviError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_csv<R: Record>(path: &Path) -> Result<Vec<R>> {
    let csv_err = |source| GviError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = reader.headers().map_err(csv_err)?.clone();
    if !header.iter().eq(R::HEADER.iter().copied()) {
        return Err(GviError::InvalidProblem(format!(
            "{}: expected header {}, found {}",
            path.display(),
            R::HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    reader.deserialize().map(|r| r.map_err(csv_err)).collect()
}

pub fn write_json<R: Serialize>(path: &Path, fingerprint: &str, rows: &[R]) -> Result<()> {
    #[derive(Serialize)]
    struct Borrowed<'a, R> {
        schema: u32,
        fingerprint: &'a str,
        rows: &'a [R],
    }
    let envelope = Borrowed {
        schema: SCHEMA_VERSION,
        fingerprint,
        rows,
    };
    let file = File::create(path).map_err(|source| GviError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &envelope).map_err(|source| GviError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|source| GviError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<R: DeserializeOwned>(path: &Path) -> Result<Envelope<R>> {
    let file = File::open(path).map_err(|source| GviError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let env: Envelope<R> = serde_json::from_reader(std::io::BufReader::new(file)).map_err(|source| GviError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    if env.schema != SCHEMA_VERSION {
        return Err(GviError::InvalidProblem(format!(
            "{}: unsupported schema version {}",
            path.display(),
            env.schema
        )));
    }
    Ok(env)
}
