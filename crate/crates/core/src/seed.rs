/// Derive a sub-seed from a root seed and a textual tag.
///
/// All randomness in the crate funnels through one root seed; independent
/// streams (collocation sampling, weight init, evaluation paths, ...) use
/// `derive_seed(root, "tag")` so that runs are reproducible end to end.
/// The mix is SplitMix64 over the root followed by the tag bytes.
pub fn derive_seed(root: u64, tag: &str) -> u64 {
    let mut state = splitmix64(root ^ 0x9e37_79b9_7f4a_7c15);
    for &b in tag.as_bytes() {
        state = splitmix64(state ^ u64::from(b));
    }
    state
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_tag_sensitive() {
        assert_eq!(derive_seed(7, "init"), derive_seed(7, "init"));
        assert_ne!(derive_seed(7, "init"), derive_seed(7, "sampler"));
        assert_ne!(derive_seed(7, "init"), derive_seed(8, "init"));
    }
}
