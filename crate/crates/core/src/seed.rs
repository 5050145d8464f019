//! Seed derivation.
//!
//! Every random stream in a run is derived from one master seed and a
//! component name: the first eight bytes (little-endian) of
//! `SHA-256(master_seed as u64 LE || component name as UTF-8)`. The scheme
//! is stable across platforms and easy to reproduce outside Rust.

use rand::SeedableRng;
use sha2::{Digest, Sha256};

/// The generator used for every stream in the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

pub fn derive_seed(master: u64, component: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(component.as_bytes());
    let digest = hasher.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head)
}

pub fn rng_for(master: u64, component: &str) -> Rng {
    Rng::seed_from_u64(derive_seed(master, component))
}

/// Serializable position of a [`Rng`] stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> Rng {
        let mut rng = Rng::from_seed(self.seed);
        rng.set_word_pos(self.word_pos);
        rng
    }

    pub fn encode(&self) -> String {
        let hex: String = self.seed.iter().map(|b| format!("{b:02x}")).collect();
        format!("{hex}:{}", self.word_pos)
    }

    pub fn decode(text: &str) -> Option<Self> {
        let (hex, pos) = text.split_once(':')?;
        if hex.len() != 64 {
            return None;
        }
        let mut seed = [0u8; 32];
        for (i, byte) in seed.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).ok()?;
        }
        Some(Self {
            seed,
            word_pos: pos.parse().ok()?,
        })
    }
}
