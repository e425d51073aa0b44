//! Counter-based random substreams.
//!
//! A substream is a ChaCha generator seeded from a SplitMix64 fold of the
//! master seed, a [`StreamTag`] and any number of integer coordinates
//! (node, iteration, round, trial). Two calls with the same coordinates
//! always produce the same stream, independent of call order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StreamTag {
    ChannelX,
    ChannelY,
    Oracle,
    Topology,
    Objective,
    Dataset,
    Partition,
    Init,
    MonteCarlo,
    Sweep,
}

impl StreamTag {
    fn code(self) -> u64 {
        match self {
            StreamTag::ChannelX => 0x11,
            StreamTag::ChannelY => 0x12,
            StreamTag::Oracle => 0x21,
            StreamTag::Topology => 0x31,
            StreamTag::Objective => 0x41,
            StreamTag::Dataset => 0x42,
            StreamTag::Partition => 0x43,
            StreamTag::Init => 0x51,
            StreamTag::MonteCarlo => 0x61,
            StreamTag::Sweep => 0x71,
        }
    }
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `master`, `tag` and `coords` into a single 64-bit seed.
pub fn derive_seed(master: u64, tag: StreamTag, coords: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ tag.code().rotate_left(32));
    for &c in coords {
        h = splitmix64(h ^ splitmix64(c.wrapping_add(0xA076_1D64_78BD_642F)));
    }
    h
}

pub fn substream(master: u64, tag: StreamTag, coords: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, tag, coords))
}
