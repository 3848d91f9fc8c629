//! Reproducible random streams.
//!
//! Every replica draws from its own ChaCha8 stream selected by
//! `(master_seed, replica_index)`; ChaCha is counter based, so streams never
//! overlap and a replica's draws do not depend on which thread runs it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ReplicaRng = ChaCha8Rng;

pub fn replica_stream(master_seed: u64, replica: u64) -> ReplicaRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replica);
    rng
}
