//! Seeded random streams.
//!
//! Every stochastic routine draws from a [`ChaCha8Rng`] whose 256-bit key is
//! the little-endian concatenation of `(master seed, domain tag, index, sub-index)`.
//! Distinct tuples give independent streams, so work can be split across any
//! number of threads without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Domain tags separating the purposes a master seed is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Simulate = 1,
    GammaNaive = 2,
    GammaStable = 3,
    Moments = 4,
    Resample = 5,
    Propagate = 6,
    Rho = 7,
    Kappa = 8,
    TailChain = 9,
    Bootstrap = 10,
    Init = 11,
    Contour = 12,
}

/// A master seed from which domain-separated substreams are derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    seed: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rng(&self, domain: Domain, index: u64) -> Rng {
        self.rng2(domain, index, 0)
    }

    pub fn rng2(&self, domain: Domain, index: u64, sub: u64) -> Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
        key[16..24].copy_from_slice(&index.to_le_bytes());
        key[24..].copy_from_slice(&sub.to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }

    /// A child master seed, for handing a whole stream family to a sub-computation.
    pub fn child(&self, domain: Domain, index: u64) -> SeedStream {
        use rand::RngCore;
        SeedStream::new(self.rng2(domain, index, u64::MAX).next_u64())
    }
}
