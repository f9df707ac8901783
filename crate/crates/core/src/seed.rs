//! Stable keyed hashing used to derive per-scenario and per-agent random streams.
//!
//! Every random decision in the toolkit is a pure function of an explicit seed
//! and the identifiers involved, so results never depend on processing order
//! or worker count.

use std::hash::Hasher;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use siphasher::sip::SipHasher13;

/// Incremental builder for a 64-bit key over a seed and a sequence of parts.
#[derive(Clone)]
pub struct KeyHasher(SipHasher13);

impl KeyHasher {
    pub fn new(seed: u64, domain: &str) -> Self {
        let mut h = SipHasher13::new_with_keys(seed, 0x6361_7573_616c_7074);
        h.write(domain.as_bytes());
        h.write_u8(0xff);
        Self(h)
    }

    pub fn str(mut self, s: &str) -> Self {
        self.0.write_u64(s.len() as u64);
        self.0.write(s.as_bytes());
        self
    }

    pub fn u64(mut self, v: u64) -> Self {
        self.0.write_u64(v);
        self
    }

    pub fn i64(mut self, v: i64) -> Self {
        self.0.write_i64(v);
        self
    }

    pub fn finish(&self) -> u64 {
        self.0.finish()
    }

    /// Uniform draw in [0, 1) from the top 53 bits of the key.
    pub fn unit(&self) -> f64 {
        (self.finish() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.finish())
    }
}
