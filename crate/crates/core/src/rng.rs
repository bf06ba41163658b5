use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic generator for a named sub-stream of a run seed, so that
/// e.g. head initialization and batch shuffling never share state.
pub fn stream_rng(seed: u64, stream: &str, index: u64) -> ChaCha8Rng {
    // FNV-1a over the stream name, then splitmix64 finalization.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = seed
        .wrapping_add(h)
        .wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    ChaCha8Rng::seed_from_u64(z)
}
