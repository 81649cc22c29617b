//! Per-replica random streams.
//!
//! Every replica owns one `ChaCha8Rng` keyed by `(master_seed, replica_index)`:
//! the master seed fixes the key and the replica index selects the stream,
//! so replicas are independent and can run in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

pub fn replica_stream(master_seed: u64, replica: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replica);
    rng
}
