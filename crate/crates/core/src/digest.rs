use sha2::{Digest, Sha256};

/// Hex SHA-256 of the bit patterns of a float slice.
pub fn digest_f64s(xs: &[f64]) -> String {
    let mut h = Sha256::new();
    for x in xs {
        h.update(x.to_bits().to_le_bytes());
    }
    hex(&h.finalize())
}

/// Hex SHA-256 of arbitrary bytes.
pub fn digest_bytes(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
