//! Counter-based random streams.
//!
//! Every consumer of randomness receives a [`Stream`] derived from a
//! `(seed, domain, index)` triple. The ChaCha key comes from the seed and
//! domain; the index selects the ChaCha stream. Two streams with different
//! triples never share output, and a stream never depends on which worker
//! thread happens to draw from it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Stream domains used across the crate. Keeping them distinct means a data
/// stream and a design stream built from the same seed are independent.
pub mod domain {
    pub const DATA: u64 = 0x6461_7461;
    pub const DESIGN: u64 = 0x6465_7367;
    pub const MOMENTS: u64 = 0x6d6f_6d73;
    pub const INNER: u64 = 0x696e_6e72;
    pub const CHECK: u64 = 0x6368_636b;
    pub const ORACLE: u64 = 0x6f72_636c;
    pub const PILOT: u64 = 0x7069_6c74;
    pub const AUX: u64 = 0x6175_7869;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, domain: u64, index: u64) -> Stream {
    let mut state = seed ^ domain.rotate_left(32);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
