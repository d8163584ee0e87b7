//! Hashing of (value, field, field) tuples into embedding rows.

const HASH_KEY: u64 = 0x5f3c_9a1e_d2b4_7c61;

/// SplitMix64 finalizer.
#[inline(always)]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Maps a full 64-bit hash onto `[0, d)` without a division.
#[inline(always)]
fn reduce(h: u64, d: usize) -> usize {
    ((h as u128 * d as u128) >> 64) as usize
}

/// Row of the embedding used by `value` of `own_field` when it meets `other_field`.
///
/// Deterministic and stateless; `d == 1` always yields row 0.
#[inline]
pub fn phi(value: u64, own_field: u32, other_field: u32, d: usize) -> usize {
    debug_assert!(d >= 1);
    let h = mix64(value ^ HASH_KEY);
    let h = mix64(h ^ (((own_field as u64) << 32) | other_field as u64));
    reduce(h, d)
}

/// Row of the conjunction `(field_a = value_a) AND (field_b = value_b)`.
///
/// Symmetric in its two slots, so both orientations of a pair hit one row.
#[inline]
pub fn cross_index(field_a: u32, value_a: u64, field_b: u32, value_b: u64, d: usize) -> usize {
    let (lo, hi) = if (field_a, value_a) <= (field_b, value_b) {
        ((field_a, value_a), (field_b, value_b))
    } else {
        ((field_b, value_b), (field_a, value_a))
    };
    let h = mix64(lo.1 ^ HASH_KEY);
    let h = mix64(h ^ hi.1.rotate_left(17));
    let h = mix64(h ^ (((lo.0 as u64) << 32) | hi.0 as u64));
    reduce(h, d)
}
