//! Replayable random streams.
//!
//! Every random decision in a simulation (Alice's sign bits, Bob's basis
//! choice, detector noise, Eve's noise, Cascade shuffles) draws from its own
//! [`RngStream`]. A stream is a ChaCha20 generator keyed by the master seed
//! and selected by a stream id, so identical seeds replay identical
//! sequences on any platform.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

/// Stream ids used by the protocol simulation.
pub mod streams {
    pub const ALICE: u64 = 1;
    pub const BOB: u64 = 2;
    pub const EVE: u64 = 3;
    pub const CASCADE: u64 = 4;
    pub const HASH: u64 = 5;
    pub const SCATTER: u64 = 6;
    pub const VERIFY: u64 = 7;
}

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    counter: u64,
    inner: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            counter: 0,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of draws taken from this stream so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// A fair coin.
    pub fn bit(&mut self) -> bool {
        self.counter += 1;
        self.inner.random::<bool>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.counter += 1;
        self.inner.random::<f64>()
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        self.counter += 1;
        self.inner.sample(StandardNormal)
    }

    /// Direct access for algorithms that take an `Rng` (shuffles).
    pub fn as_rng(&mut self) -> &mut impl Rng {
        self.counter += 1;
        &mut self.inner
    }
}
