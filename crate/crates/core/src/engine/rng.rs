//! Counter-based random substreams.
//!
//! Every random decision in a simulated day is drawn from a ChaCha8 stream
//! keyed by the master seed and selected by a 64-bit stream id packed from
//! `(day, level, index)`:
//!
//! ```text
//!  63            24 23    20 19            0
//! +----------------+--------+---------------+
//! |  day (40 bits) | level  | index (20 bit) |
//! +----------------+--------+---------------+
//! ```
//!
//! A stream depends only on its coordinates, never on how many numbers other
//! streams consumed, so work split across threads draws identical values.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a substream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Level {
    /// Agent → stock assignment at start-up (day 0).
    Population = 0,
    /// Per stock: which agents form which I-group.
    Agents = 1,
    /// Per stock: which S-groups the stock's I-groups join.
    IGroups = 2,
    /// Per sector: which M-groups the sector's S-groups join.
    SGroups = 3,
    /// Market-wide: one buy/sell/hold draw per M-group.
    Decisions = 4,
}

const INDEX_BITS: u32 = 20;
const LEVEL_BITS: u32 = 4;
const DAY_BITS: u32 = 64 - INDEX_BITS - LEVEL_BITS;

/// Largest index (stock or sector number) a stream id can carry.
pub const MAX_INDEX: u64 = (1 << INDEX_BITS) - 1;
/// Largest day number a stream id can carry.
pub const MAX_DAY: u64 = (1 << DAY_BITS) - 1;

/// Source of all substreams for one simulation run.
#[derive(Debug, Clone)]
pub struct Streams {
    key: [u8; 32],
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        let mut state = seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self { key }
    }

    pub fn stream_id(day: u64, level: Level, index: u64) -> u64 {
        assert!(day <= MAX_DAY, "day {day} exceeds stream id range");
        assert!(index <= MAX_INDEX, "index {index} exceeds stream id range");
        (day << (INDEX_BITS + LEVEL_BITS)) | ((level as u64) << INDEX_BITS) | index
    }

    pub fn stream(&self, day: u64, level: Level, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(Self::stream_id(day, level, index));
        rng
    }
}
