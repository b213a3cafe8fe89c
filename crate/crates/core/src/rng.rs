use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Counter-based generator seeded explicitly; no global random state.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream derived from a base seed and a tag, e.g. a fold index.
pub fn derived(seed: u64, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag.wrapping_add(1));
    rng
}
