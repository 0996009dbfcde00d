//! Counter-addressed random streams.
//!
//! Every draw is a pure function of `(seed, stream, counter)`: the stream
//! selects an independent ChaCha8 keystream and the counter is a word
//! position inside it. Work can therefore be split across threads in any
//! way without changing a single bit of the output.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream namespaces, kept apart so that different consumers never share
/// keystream words for the same seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    PricePath = 1,
    Expectation = 2,
    UniformCondensation = 3,
    PowerLaw = 4,
    Perturbation = 5,
}

const DOMAIN_SHIFT: u32 = 56;

/// Stream id for item `index` of `domain`. Indices must stay below 2^56.
pub fn stream_id(domain: Domain, index: u64) -> u64 {
    debug_assert!(index < (1 << DOMAIN_SHIFT));
    ((domain as u64) << DOMAIN_SHIFT) | index
}

/// One ChaCha8 keystream addressed by counter. A counter covers two `u64`
/// words (four 32-bit ChaCha words).
#[derive(Clone)]
pub struct CounterRng {
    inner: ChaCha8Rng,
}

impl CounterRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    pub fn for_item(seed: u64, domain: Domain, index: u64) -> Self {
        Self::new(seed, stream_id(domain, index))
    }

    /// Position the stream so the next sequential read returns counter `counter`.
    pub fn seek(&mut self, counter: u64) {
        self.inner.set_word_pos(u128::from(counter) * 4);
    }

    /// Uniform in the open interval (0, 1) from the first word of the current counter;
    /// advances by one counter.
    pub fn next_uniform(&mut self) -> f64 {
        let x = self.inner.next_u64();
        let _ = self.inner.next_u64();
        to_open_unit(x)
    }

    /// Standard normal via Box-Muller on the two words of the current counter;
    /// advances by one counter.
    pub fn next_normal(&mut self) -> f64 {
        let u1 = to_open_unit(self.inner.next_u64());
        let u2 = to_open_unit(self.inner.next_u64());
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn uniform_at(&mut self, counter: u64) -> f64 {
        self.seek(counter);
        self.next_uniform()
    }

    pub fn normal_at(&mut self, counter: u64) -> f64 {
        self.seek(counter);
        self.next_normal()
    }

    pub fn fill_normals(&mut self, first_counter: u64, out: &mut [f64]) {
        self.seek(first_counter);
        for x in out.iter_mut() {
            *x = self.next_normal();
        }
    }
}

fn to_open_unit(x: u64) -> f64 {
    ((x >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}
