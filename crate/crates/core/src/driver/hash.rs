//! Canonical config hashing for pipeline lineage.

use serde_json::Value;

/// Canonical JSON: object keys sorted recursively, no whitespace. Two configs
/// that differ only in key order hash identically.
pub fn canonical_json(value: &Value) -> String {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .iter()
                .map(|k| {
                    format!(
                        "{}:{}",
                        serde_json::to_string(k).unwrap(),
                        canonical_json(&map[*k])
                    )
                })
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => {
            let body: Vec<String> = items.iter().map(canonical_json).collect();
            format!("[{}]", body.join(","))
        }
        other => serde_json::to_string(other).unwrap(),
    }
}

/// FNV-1a 64-bit hash, hex-encoded.
pub fn fnv1a64(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

/// Hash of a serialisable config under canonical JSON.
pub fn config_hash<T: serde::Serialize>(config: &T) -> String {
    let value = serde_json::to_value(config).expect("config serialises");
    fnv1a64(canonical_json(&value).as_bytes())
}
