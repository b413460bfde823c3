//! Deterministic seed derivation: one experiment seed fans out to every
//! module through stable, order-independent mixing.

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed for the sub-task named `tag` (e.g. `"split/aubach"`).
pub fn derive(base: u64, tag: &str) -> u64 {
    splitmix64(base ^ splitmix64(fnv1a(tag)))
}
