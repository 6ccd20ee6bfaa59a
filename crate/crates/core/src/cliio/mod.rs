//! Configuration, persistence and the command-line surface.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

pub mod cli;
pub mod config;
pub mod pipeline;
pub mod selftest;
pub mod store;

/// Hex SHA-256 of a value's canonical JSON form.
pub fn digest_json<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable value");
    hex::encode(Sha256::digest(&bytes))
}

/// Writes a CSV whose first line is a `# config_hash=...` comment.
pub fn write_csv(path: &Path, config_hash: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut buf = format!("# config_hash={config_hash}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush().map_err(|e| crate::Error::io(path, e))?;
    }
    store::write_atomic(path, &buf)
}

/// Reads a CSV written by [`write_csv`]: the config hash, header and rows.
pub fn read_csv(path: &Path) -> Result<(String, Vec<String>, Vec<Vec<String>>)> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
    let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
    let hash = first
        .strip_prefix("# config_hash=")
        .ok_or_else(|| crate::Error::format(path, "missing config hash line"))?
        .to_string();
    let mut r = csv::Reader::from_reader(rest.as_bytes());
    let header = r.headers()?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok((hash, header, rows))
}
