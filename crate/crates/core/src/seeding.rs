//! Per-run seed derivation.
//!
//! Every executor and analyst invocation gets a seed derived from the master
//! seed and its position in the pipeline, never from arrival order, so that
//! two topologies over the same question draw paired randomness.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSchedule {
    pub master_seed: u64,
}

/// SHA-256 over length-prefixed parts, truncated to 64 bits.
pub fn derive_seed(master_seed: u64, parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    for part in parts {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

impl SeedSchedule {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn executor(&self, question_id: &str, subgroup: usize, run_index: usize) -> u64 {
        derive_seed(
            self.master_seed,
            &[
                question_id.as_bytes(),
                b"executor",
                &(subgroup as u64).to_le_bytes(),
                &(run_index as u64).to_le_bytes(),
            ],
        )
    }

    pub fn analyst(&self, question_id: &str, subgroup: usize) -> u64 {
        derive_seed(
            self.master_seed,
            &[
                question_id.as_bytes(),
                b"analyst",
                &(subgroup as u64).to_le_bytes(),
            ],
        )
    }
}
