//! Coupon-collector analysis of spray coverage: how many SPRAY(log T-1,1,1)
//! operations on the perfect skip list are needed until every one of the
//! first T positions has been hit at least once. The landing law is exactly
//! uniform over 0..T-1, so a seeded Monte-Carlo draw from that law is the
//! only stochastic ingredient.

use num::rational::BigRational;
use num::{BigInt, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exact T * H(T) = T * (1/1 + 1/2 + ... + 1/T).
pub fn harmonic_expectation(t: usize) -> BigRational {
    assert!(t >= 1);
    let mut h = BigRational::zero();
    for i in 1..=t {
        h += BigRational::new(BigInt::from(1), BigInt::from(i as i64));
    }
    h * BigRational::from_integer(BigInt::from(t as i64))
}

/// Monte-Carlo mean number of sprays until the first T positions are all
/// covered.
pub fn coupon_collector(t: usize, trials: usize, seed: u64) -> f64 {
    assert!(t.is_power_of_two(), "T must be a power of two");
    assert!(trials >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total: u64 = 0;
    for _ in 0..trials {
        let mut hit = vec![false; t];
        let mut missing = t;
        let mut sprays = 0u64;
        while missing > 0 {
            let x = rng.gen_range(0..t);
            sprays += 1;
            if !hit[x] {
                hit[x] = true;
                missing -= 1;
            }
        }
        total += sprays;
    }
    total as f64 / trials as f64
}
