//! Named random sub-streams derived from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Simulation,
    Init,
    Split,
    Batch,
    Bootstrap,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Simulation => 0x5349_4d55,
            Stream::Init => 0x494e_4954,
            Stream::Split => 0x5350_4c54,
            Stream::Batch => 0x4241_5443,
            Stream::Bootstrap => 0x424f_4f54,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for item `index` of `stream`, independent across streams.
pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(stream.tag())) ^ splitmix64(index.wrapping_add(1)))
}

pub fn stream_rng(master: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, index))
}
