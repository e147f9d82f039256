//! Counter-based random streams.
//!
//! Every replica of an experiment owns a ChaCha stream keyed by the master
//! seed and indexed by `(replica, purpose)`. Streams never overlap, so a
//! replica's output depends only on the master seed and its own index, not
//! on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for inside one replica.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    /// Arrivals inside the statistics window, generated left to right.
    Window = 0,
    /// Arrivals inside the left margin, generated right to left from the window edge.
    Margin = 1,
    /// Stationary workload drawn at the left edge of the simulated span.
    WarmStart = 2,
    /// Increments of a limit process.
    Limit = 3,
    /// Anything else (permutations, ad hoc draws in tests).
    Aux = 4,
}

/// A master seed paired with a replica index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamSeed {
    pub master: u64,
    pub replica: u64,
}

impl StreamSeed {
    pub fn new(master: u64, replica: u64) -> Self {
        Self { master, replica }
    }

    /// Independent stream for `purpose` within this replica.
    pub fn rng(&self, purpose: Purpose) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        assert!(self.replica < (1 << 56), "replica index out of range");
        rng.set_stream((self.replica << 8) | purpose as u64);
        rng
    }

    /// Seed of the same replica under a fresh, independent master (used by retries).
    pub fn remastered(&self, salt: u64) -> Self {
        Self {
            master: splitmix64(self.master ^ splitmix64(salt)),
            replica: self.replica,
        }
    }
}

impl From<u64> for StreamSeed {
    fn from(master: u64) -> Self {
        Self::new(master, 0)
    }
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
