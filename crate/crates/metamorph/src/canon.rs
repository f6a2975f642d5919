//! Canonical serialization and content hashing.
//!
//! Everything that must be byte-comparable across runs, processes, and
//! platforms funnels through this module: canonical report JSON, cache
//! digests, config hashes, and per-pair seed derivation.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Serializes a value as canonical JSON: lexicographically sorted keys,
/// two-space indentation, LF line endings, trailing newline.
///
/// `serde_json::Value` objects are backed by a `BTreeMap`, so converting
/// through `Value` sorts every object level.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("value serializes to JSON");
    let mut text = serde_json::to_string_pretty(&value).expect("JSON value renders");
    text.push('\n');
    text
}

/// Hex-encoded SHA-256 over arbitrary bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Keyed hash over a list of byte fields, collapsed to a `u64`.
///
/// Fields are length-prefixed before hashing, so `["ab", "c"]` and
/// `["a", "bc"]` produce different digests.
pub fn keyed_hash64(key: u64, fields: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(key.to_le_bytes());
    for field in fields {
        hasher.update((field.len() as u64).to_le_bytes());
        hasher.update(field);
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Maps a keyed hash onto the unit interval: a deterministic "coin" that
/// comes up true with probability `p` over uniformly distributed fields.
pub fn keyed_coin(key: u64, fields: &[&[u8]], p: f64) -> bool {
    let unit = keyed_hash64(key, fields) as f64 / u64::MAX as f64;
    unit < p
}
