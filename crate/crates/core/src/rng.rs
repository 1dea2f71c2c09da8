//! Seeded random streams.
//!
//! A master seed is split into independent ChaCha streams by name, so the
//! draws of one consumer never shift when another consumer changes how much
//! randomness it uses.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::autodiff::Tensor;

pub type LabRng = ChaCha8Rng;

/// Named consumers of randomness inside one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Task = 1,
    Init = 2,
    DiscData = 3,
    GenData = 4,
    Penalty = 5,
    Plot = 6,
    Dataset = 7,
}

pub fn stream(seed: u64, which: Stream) -> LabRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Stable 64-bit seed from a list of labelled parts.
pub fn derive_seed(parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest is 32 bytes"))
}

pub fn normal_tensor(rng: &mut LabRng, shape: &[usize], std: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * std
        })
        .collect();
    Tensor::new(shape.to_vec(), data)
}
