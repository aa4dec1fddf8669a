#![allow(clippy::needless_range_loop)]

//! Property-based checks of the structural invariants: information
//! conservation, pmf preservation through belief and posterior updates,
//! and estimator output ranges.

use dicap_core::belief_mdp::{belief_update, disturbance_dist, reward, ActionMatrix};
use dicap_core::channels::make_binary_ising;
use dicap_core::estimators::{ctw_di, sample_markov_pair, PairKernel};
use dicap_core::probcore::{exact_directed_info, infomat, JointSequencePmf, Pmf};
use proptest::prelude::*;

fn joint_strategy(n: usize) -> impl Strategy<Value = JointSequencePmf> {
    let size = 1usize << (2 * n);
    prop::collection::vec(1e-6..1.0f64, size).prop_map(move |mut table| {
        let total: f64 = table.iter().sum();
        for w in &mut table {
            *w /= total;
        }
        JointSequencePmf::new(n, 2, 2, table).expect("normalized table")
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conservation_and_bounds(joint in joint_strategy(3)) {
        let (di, rev, mi) = exact_directed_info(&joint);
        prop_assert!((di + rev - mi).abs() <= 1e-12);
        prop_assert!(di >= 0.0);
        prop_assert!(di <= mi + 1e-12);
    }

    #[test]
    fn infomat_entries_nonnegative_and_sum_to_mi(joint in joint_strategy(2)) {
        let mat = infomat(&joint);
        let (_, _, mi) = exact_directed_info(&joint);
        for row in &mat.entries {
            for &e in row {
                prop_assert!(e >= 0.0);
            }
        }
        prop_assert!((mat.total() - mi).abs() <= 1e-12);
    }

    #[test]
    fn belief_updates_stay_on_the_simplex(
        z in 0.01..0.99f64,
        p00 in 0.0..1.0f64,
        p11 in 0.0..1.0f64,
    ) {
        let ch = make_binary_ising();
        let beta = Pmf::new(vec![z, 1.0 - z]).unwrap();
        let action = ActionMatrix::new(vec![
            vec![p00, 1.0 - p00],
            vec![1.0 - p11, p11],
        ]).unwrap();
        let py = disturbance_dist(&beta, &action, &ch).unwrap();
        prop_assert!((py.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let r = reward(&beta, &action, &ch).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&r));
        for y in 0..2 {
            if py[y] > 1e-9 {
                let next = belief_update(&beta, &action, y, &ch).unwrap();
                prop_assert!((next.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn ctw_variant_ranges_on_random_markov_sources(
        a in 0.1..0.9f64,
        b in 0.1..0.9f64,
        seed in 0u64..32,
    ) {
        // Random joint pair kernel: X iid Ber(1/2), Y flips between two
        // conditional biases depending on the previous output.
        let mut rows = vec![vec![0.0; 4]; 4];
        for prev in 0..4usize {
            let bias = if prev % 2 == 0 { a } else { b };
            for x in 0..2usize {
                rows[prev][x * 2] += 0.5 * bias;
                rows[prev][x * 2 + 1] += 0.5 * (1.0 - bias);
            }
        }
        let kernel = PairKernel::new(2, 2, rows).unwrap();
        let path = sample_markov_pair(&kernel, 3000, seed).unwrap();
        let i2 = ctw_di(&path, 3, 2).unwrap().value_bits;
        prop_assert!(i2.abs() <= 1.0 + 1e-12);
        for variant in [3u8, 4u8] {
            let v = ctw_di(&path, 3, variant).unwrap().value_bits;
            prop_assert!(v >= -1e-12);
        }
    }
}
