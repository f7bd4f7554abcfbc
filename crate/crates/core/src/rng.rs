//! Seed derivation. Every subsystem draws from its own ChaCha stream keyed by
//! `sha256(purpose || seed)`, so streams never overlap between purposes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn derive_seed(purpose: &str, seed: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(purpose.as_bytes());
    h.update([0u8]);
    h.update(seed.to_le_bytes());
    let digest = h.finalize();
    let mut out = [0u8; 32];
    out.copy_from_slice(&digest);
    out
}

/// Stream for `purpose` under the global `seed`.
pub fn stream(purpose: &str, seed: u64) -> Rng {
    Rng::from_seed(derive_seed(purpose, seed))
}

/// Independent sub-stream `index` of `stream(purpose, seed)`. Used when
/// items are generated in parallel and must not depend on scheduling.
pub fn indexed_stream(purpose: &str, seed: u64, index: u64) -> Rng {
    let mut rng = stream(purpose, seed);
    rng.set_stream(index);
    rng
}

/// Snapshot of a ChaCha stream position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> Rng {
        let mut rng = Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}
