use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Addresses one replication of an experiment; the derived stream is a pure
/// function of the pair, so results never depend on scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub replication_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, replication_index: u64) -> Self {
        SeedSpec {
            master_seed,
            replication_index,
        }
    }
}

/// Counter-style stream derivation: the 256-bit ChaCha key mixes the master
/// seed, the replication index and a domain tag, so distinct replications
/// get statistically independent streams.
pub fn derive_stream(seed: &SeedSpec) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&seed.replication_index.to_le_bytes());
    key[16..].copy_from_slice(b"spde-hfvol-rng\0\0");
    ChaCha8Rng::from_seed(key)
}
