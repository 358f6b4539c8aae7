//! Counter-based random streams.
//!
//! Every random quantity is drawn from a ChaCha stream addressed by
//! `(seed, domain, i, j)`. Two draws that differ in any coordinate come from
//! independent keystreams, so adding a CV, a V2V pair or an RICS element never
//! perturbs the draws of the existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::C64;

/// Named stream families. The discriminant is folded into the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Domain {
    CvPlacement = 1,
    V2vPlacement = 2,
    Task = 3,
    Channel = 4,
    Outage = 5,
    Randomization = 6,
    Scheme = 7,
}

/// Returns a generator for the stream `(seed, domain, a, b)`.
pub fn stream(seed: u64, domain: Domain, a: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(mix(domain as u64, a, b));
    rng
}

fn mix(domain: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the packed coordinates
    let mut z = domain
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ a.wrapping_mul(0xBF58_476D_1CE4_E5B9).rotate_left(17)
        ^ b.wrapping_mul(0x94D0_49BB_1331_11EB).rotate_left(41);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Circularly-symmetric complex Gaussian with unit variance, CN(0, 1).
pub fn cn01<R: rand::Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}
