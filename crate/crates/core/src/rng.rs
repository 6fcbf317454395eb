//! Seeding. Every random stream is a ChaCha8 generator so results are
//! identical across platforms; child streams are derived from a root seed by
//! index, never by execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type GameRng = ChaCha8Rng;

/// One round of the splitmix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for child stream `index` of `root`.
pub fn child_seed(root: u64, index: u64) -> u64 {
    splitmix64(root ^ splitmix64(index))
}

pub fn rng_from_seed(seed: u64) -> GameRng {
    GameRng::seed_from_u64(seed)
}

/// Named sub-streams of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    InitFirst = 1,
    InitSecond = 2,
    Train = 3,
    Test = 4,
    Baseline = 5,
}

pub fn stream(seed: u64, which: Stream) -> GameRng {
    rng_from_seed(child_seed(seed, which as u64))
}
