//! Splittable counter-based random streams.
//!
//! Every random draw in an optimization run comes from a ChaCha8 stream whose
//! key is derived from the run seed and whose 64-bit stream id is derived from
//! a path such as `(iteration, purpose, batch index)`. Two draws addressed by
//! the same path are identical no matter which thread performs them or in
//! which order batches are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for inside one optimizer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Snapshot = 0,
    Correction = 1,
    Hessian = 2,
    Evaluation = 3,
    Other = 4,
}

/// A node in the stream tree. Cheap to copy; produces generators on demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    seed: u64,
    path: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl StreamKey {
    pub fn root(seed: u64) -> Self {
        Self { seed, path: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derive the child stream with the given label.
    pub fn child(&self, label: u64) -> Self {
        Self {
            seed: self.seed,
            path: splitmix64(self.path ^ splitmix64(label.wrapping_add(0x632b_e59b_d9b4_e019))),
        }
    }

    /// Stream for batch member `index` of `purpose` at `iteration`.
    pub fn at(&self, iteration: u64, purpose: Purpose, index: u64) -> Self {
        self.child(iteration).child(purpose as u64).child(index)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut state = self.seed;
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.path);
        rng
    }
}
