//! Hashing and serialisation helpers shared by reports and the CLI.

use std::io::Write;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of `bytes`, lowercase hex.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Git-style object hash: SHA-256 of `"blob {len}\0" ++ content`.
pub fn git_blob_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex(&h.finalize())
}

/// Canonical JSON text: object keys sorted, two-space indentation, trailing
/// newline.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    // `serde_json::Value` maps are ordered by key.
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

/// Short fingerprint of a serialisable configuration.
pub fn fingerprint<T: Serialize>(value: &T) -> Result<String> {
    let s = serde_json::to_string(&serde_json::to_value(value)?)?;
    Ok(sha256_hex(s.as_bytes())[..16].to_string())
}

pub fn write_json<T: Serialize, W: Write>(value: &T, mut out: W) -> Result<()> {
    out.write_all(to_canonical_json(value)?.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn git_hash_of_empty_blob() {
        assert_eq!(
            git_blob_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }

    #[test]
    fn canonical_json_sorts_keys() {
        #[derive(Serialize)]
        struct S {
            b: u8,
            a: u8,
        }
        assert_eq!(to_canonical_json(&S { b: 1, a: 2 }).unwrap(), "{\n  \"a\": 2,\n  \"b\": 1\n}\n");
    }
}
