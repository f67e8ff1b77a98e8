//! Content hashing helpers shared across the workspace.

use sha2::{Digest, Sha256};
use std::fmt::Write;

/// Hex-encoded SHA-256 digest of `data`.
pub fn sha256_hex(data: &[u8]) -> String {
    let digest = Sha256::digest(data);
    let mut out = String::with_capacity(64);
    for byte in digest {
        write!(out, "{byte:02x}").expect("writing to a String cannot fail");
    }
    out
}

/// Shortened digest suitable for filenames and idempotency keys.
pub fn sha256_hex_short(data: &[u8]) -> String {
    let mut hex = sha256_hex(data);
    hex.truncate(16);
    hex
}
