//! Seed derivation. Every random stream in the crate is seeded from a master
//! seed plus a label and an ordinal, so that partial re-runs reproduce the
//! same draws.

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the label bytes.
fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Derives a child seed from `(master, label, ordinal)`.
pub fn derive(master: u64, label: &str, ordinal: u64) -> u64 {
    mix(mix(mix(master) ^ label_hash(label)) ^ ordinal)
}
