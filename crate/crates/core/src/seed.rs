//! Deterministic seed derivation for independent random streams.
//!
//! Every stochastic component (profile synthesis, curve shifts,
//! efficiency draws, subset selection) derives its own generator from the
//! scenario seed plus fixed stream tags, so adding a consumer or
//! reordering calls never perturbs the numbers another component sees.
//! The mixing function is SplitMix64, whose output is stable across
//! platforms and releases; changing it would silently re-randomize every
//! stored scenario, so treat the constants as frozen.

/// SplitMix64 finalizer: bijective, well-mixed, cheap.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` and an ordered list of stream tags
/// (component id, then e.g. household index, then day).
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut acc = splitmix64(base);
    for &tag in tags {
        acc = splitmix64(acc ^ splitmix64(tag));
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable() {
        // Frozen values: these must never change between releases.
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(derive_seed(42, &[1, 7]), derive_seed(42, &[1, 7]));
    }

    #[test]
    fn streams_are_distinct() {
        let a = derive_seed(42, &[1]);
        let b = derive_seed(42, &[2]);
        let c = derive_seed(43, &[1]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        // Tag order matters.
        assert_ne!(derive_seed(42, &[1, 2]), derive_seed(42, &[2, 1]));
    }
}
