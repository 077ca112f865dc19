//! Seeded random streams. Each (server, purpose) pair owns its own ChaCha
//! stream so adding events in one place never shifts samples elsewhere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scenario::{DelayModel, Time};
use crate::types::ServerId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    ElectionTimeout(ServerId),
    LinkDelay { from: ServerId, to: ServerId },
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::ElectionTimeout(s) => 1 << 32 | s as u64,
            Stream::LinkDelay { from, to } => 2 << 32 | (from as u64) << 16 | to as u64,
        }
    }
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}

pub fn sample_delay<R: Rng>(rng: &mut R, model: DelayModel) -> Time {
    match model {
        DelayModel::Fixed(d) => d,
        DelayModel::Uniform { lo, hi } => rng.gen_range(lo..=hi),
    }
}

/// `base + U[0, spread]`; no randomness is drawn when `spread == 0`.
pub fn sample_timeout<R: Rng>(rng: &mut R, base: Time, spread: Time) -> Time {
    if spread == 0 {
        base
    } else {
        base + rng.gen_range(0..=spread)
    }
}
