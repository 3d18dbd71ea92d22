use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Seeded random stream.
///
/// A stream is fully determined by `(seed, stream)`; independent consumers
/// (initialisation, dropout, data shuffling, generators) take separate
/// streams so that adding draws to one never shifts another.
#[derive(Clone, Debug)]
pub struct RngStream {
    rng: ChaCha8Rng,
}

/// FNV-1a, used to turn stream names into stream ids.
fn name_hash(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    /// Stream identified by a name, e.g. `"dropout"` or `"init"`.
    pub fn named(seed: u64, name: &str) -> Self {
        Self::new(seed, name_hash(name))
    }

    /// Child stream; deterministic given the parent's state.
    pub fn split(&mut self) -> Self {
        let seed = self.rng.next_u64();
        let stream = self.rng.next_u64();
        Self::new(seed, stream)
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        Normal::new(mean, std).expect("finite std").sample(self)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        use rand::Rng;
        lo + (hi - lo) * self.random::<f64>()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
