//! Convolution against the nested-loop oracle: the fixed sweep plus random
//! geometries.

mod support;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::conv::{random, run3d, sweep};

#[test]
fn every_stride_and_padding_up_to_2x3x5x6x7() {
    println!("{}", sweep());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_geometries_match_the_oracle(
        n in 1usize..3, c in 1usize..4, o in 1usize..14,
        t in 1usize..6, h in 1usize..7, w in 1usize..8,
        k in 1usize..4, stride in 1usize..3, pad in 0usize..3, seed in any::<u64>(),
    ) {
        prop_assume!(t + 2 * pad >= k && h + 2 * pad >= k && w + 2 * pad >= k);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&[n, c, t, h, w], &mut rng);
        let wt = random(&[o, c, k, k, k], &mut rng);
        let b: Vec<f64> = (0..o).map(|_| rng.random_range(-1.0..1.0)).collect();
        prop_assert!(run3d(&x, &wt, &b, stride, pad) < 1e-5);
    }
}
