//! SHA-256 fingerprints for configs, parameters and artifacts.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub fn bytes_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the compact JSON serialization (struct field order is fixed, so this is stable).
pub fn json_hash<T: Serialize>(value: &T) -> String {
    bytes_hash(&serde_json::to_vec(value).expect("config types serialize"))
}

pub fn file_hash(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(bytes_hash(&bytes))
}
