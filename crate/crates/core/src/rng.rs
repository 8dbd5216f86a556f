//! Seeding helpers. Every stochastic procedure takes a `u64` seed and builds its own
//! ChaCha8 stream, so results are reproducible across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{Assignment, GraphicalModel, QuerySpec};

pub type SearchRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SearchRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent child seed for work item `index` (splitmix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED69));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform values on the query variables, evidence copied from `q`.
pub fn random_assignment<R: Rng + ?Sized>(model: &GraphicalModel, q: &QuerySpec, rng: &mut R) -> Assignment {
    let mut x = Assignment::zeros(model.num_vars());
    randomize_query(model, q, &mut x, rng);
    x
}

pub(crate) fn randomize_query<R: Rng + ?Sized>(model: &GraphicalModel, q: &QuerySpec, x: &mut Assignment, rng: &mut R) {
    for (&v, &val) in q.evidence() {
        x.set(v, val);
    }
    for &v in q.query_vars() {
        x.set(v, rng.random_range(0..model.cardinality(v)));
    }
}
