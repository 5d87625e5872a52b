mod common;

use markov_lsa::markov::{green_apply, sample_trajectory, stationary_distribution, tv_mixing_time, Initial, TransitionKernel};
use markov_lsa::rng::stream;
use markov_lsa::Matrix;
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn green_inverts_poisson_equation(seed in any::<u64>(), s in 2usize..8, m in 1usize..4) {
        let mut r = common::rng(seed);
        let k = common::random_kernel(&mut r, s, 0.2);
        let xi = stationary_distribution(&k).unwrap();
        let f = common::random_matrix(&mut r, s, m, 3.0);
        let g = green_apply(&k, &xi, &f).unwrap();
        let centred = &f - Matrix::from_fn(s, m, |_, j| xi.expect_rows(&f)[j]);
        let back = (Matrix::identity(s, s) - k.probs()) * &g;
        prop_assert!((back - centred).amax() <= 1e-9);
        prop_assert!(xi.expect_rows(&g).amax() <= 1e-9);
    }

    #[test]
    fn lazification_never_speeds_up_lazy_chains(seed in any::<u64>(), s in 2usize..6) {
        let mut r = common::rng(seed);
        let q = common::random_kernel(&mut r, s, 0.0);
        let p = q.lazy().unwrap();
        let pp = p.lazy().unwrap();
        let a = tv_mixing_time(&p, 0.5, 10_000).unwrap().t_mix;
        let b = tv_mixing_time(&pp, 0.5, 10_000).unwrap().t_mix;
        prop_assert!(b >= a, "lazy t_mix {b} < {a}");
    }

    #[test]
    fn square_has_same_stationary_law(seed in any::<u64>(), s in 2usize..8) {
        let mut r = common::rng(seed);
        let k = common::random_kernel(&mut r, s, 0.2);
        let k2 = TransitionKernel::new(k.power(2)).unwrap();
        let a = stationary_distribution(&k).unwrap();
        let b = stationary_distribution(&k2).unwrap();
        prop_assert!((a.weights() - b.weights()).amax() <= 1e-10);
    }
}

#[test]
fn lazification_can_speed_up_near_periodic_chain() {
    // Outside lazy chains the monotonicity fails: the flip chain oscillates
    // for a long time while its lazy version mixes in one step.
    let k = TransitionKernel::from_rows(&[vec![0.01, 0.99], vec![0.99, 0.01]]).unwrap();
    let slow = tv_mixing_time(&k, 0.5, 10_000).unwrap().t_mix;
    let fast = tv_mixing_time(&k.lazy().unwrap(), 0.5, 10_000).unwrap().t_mix;
    assert!(slow > 30 && fast == 1, "{slow} {fast}");
}

#[test]
fn occupation_frequencies_converge() {
    let k = TransitionKernel::from_rows(&[
        vec![0.1, 0.4, 0.2, 0.2, 0.1],
        vec![0.3, 0.1, 0.3, 0.1, 0.2],
        vec![0.2, 0.2, 0.1, 0.3, 0.2],
        vec![0.1, 0.3, 0.2, 0.1, 0.3],
        vec![0.3, 0.1, 0.1, 0.3, 0.2],
    ])
    .unwrap();
    let n = 1_000_000;
    let path = sample_trajectory(&k, &Initial::State(0), n, 42).unwrap();
    let mut freq = [0.0; 5];
    for &s in &path {
        freq[s] += 1.0 / path.len() as f64;
    }
    let xi = k.stationary().unwrap().weights();
    for s in 0..5 {
        assert!((freq[s] - xi[s]).abs() <= 0.01, "state {s}: {} vs {}", freq[s], xi[s]);
    }
}

#[test]
fn next_state_passes_chi_squared() {
    let row = [0.05, 0.25, 0.4, 0.3];
    let k = TransitionKernel::rank_one(&row).unwrap();
    let mut r = stream(9);
    let n = 200_000;
    let mut counts = [0usize; 4];
    for _ in 0..n {
        counts[k.next_state(&mut r, 2)] += 1;
    }
    let stat: f64 = counts
        .iter()
        .zip(row)
        .map(|(&c, p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let p_value = 1.0 - ChiSquared::new(3.0).unwrap().cdf(stat);
    assert!(p_value > 1e-4, "chi2 = {stat}, p = {p_value}");
}

#[test]
fn trajectories_are_reproducible() {
    let k = TransitionKernel::rank_one(&[0.5, 0.5]).unwrap();
    let a = sample_trajectory(&k, &Initial::Distribution(vec![0.5, 0.5]), 1000, 3).unwrap();
    let b = sample_trajectory(&k, &Initial::Distribution(vec![0.5, 0.5]), 1000, 3).unwrap();
    let c = sample_trajectory(&k, &Initial::Distribution(vec![0.5, 0.5]), 1000, 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}
