//! Replica random streams.
//!
//! Every replica gets a ChaCha8 generator keyed by the experiment seed, with
//! the (grid index, replica index) pair selecting the stream. Distinct pairs
//! therefore never share keystream, and results do not depend on the order in
//! which replicas are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ReplicaRng = ChaCha8Rng;

const REPLICA_BITS: u32 = 40;

pub fn replica_rng(seed: u64, grid_index: usize, replica_index: usize) -> ReplicaRng {
    assert!((replica_index as u64) < (1u64 << REPLICA_BITS), "replica index too large");
    assert!((grid_index as u64) < (1u64 << (64 - REPLICA_BITS)), "grid index too large");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((grid_index as u64) << REPLICA_BITS) | replica_index as u64);
    rng
}
