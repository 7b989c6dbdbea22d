//! Counter-based random streams.
//!
//! Every random draw in a run comes from a ChaCha stream keyed by
//! `(run seed, purpose, epoch)` with the sample index as stream id, so a
//! sample's randomness does not depend on processing order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    TrainEncoding,
    EvalEncoding,
    Shuffle,
    Init,
    Feedback,
    Synth,
    Thinning,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::TrainEncoding => 0x11,
            Purpose::EvalEncoding => 0x22,
            Purpose::Shuffle => 0x33,
            Purpose::Init => 0x44,
            Purpose::Feedback => 0x55,
            Purpose::Synth => 0x66,
            Purpose::Thinning => 0x77,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Stream for one `(seed, purpose, epoch, index)` tuple.
pub fn stream(seed: u64, purpose: Purpose, epoch: u64, index: u64) -> ChaCha8Rng {
    let key = splitmix64(splitmix64(seed ^ purpose.tag().rotate_left(56)) ^ epoch);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}
