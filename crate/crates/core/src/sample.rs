use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::carrier::CarrierValue;

pub type SampleRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small random rational with numerator in [-40, 40] and denominator in [1, 12].
pub fn random_rational(rng: &mut SampleRng) -> CarrierValue {
    let n: i64 = rng.gen_range(-40..=40);
    let d: i64 = rng.gen_range(1..=12);
    CarrierValue::Rational(BigRational::new(BigInt::from(n), BigInt::from(d)))
}

pub fn random_rationals(rng: &mut SampleRng, n: usize) -> Vec<CarrierValue> {
    (0..n).map(|_| random_rational(rng)).collect()
}
