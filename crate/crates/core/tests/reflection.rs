mod common;

use common::{random_model, rng};
use mmbm::reflection::{exp_epoch_law, stationary_law, ExpEpoch, Perspective, Start, Stationary};
use mmbm::Model;
use proptest::prelude::*;
use rand::SeedableRng;

fn model_strategy() -> impl Strategy<Value = (Model, f64)> {
    (1usize..=4, any::<u64>(), 0.3f64..3.0).prop_map(|(n, seed, b)| {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (random_model(&mut r, n, 0.3), b)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn stationary_law_is_a_distribution((m, b) in model_strategy()) {
        let st = Stationary::new(&m, b).unwrap();
        let law = st.tabulate(41).unwrap();
        let n = m.n_states();
        for i in 0..n {
            let mut prev = 2.0;
            for k in 0..law.grid.len() {
                let s = law.survival[(k, i)];
                prop_assert!((-1e-10..=1.0 + 1e-10).contains(&s));
                prop_assert!(s <= prev + 1e-10);
                prev = s;
                prop_assert!(law.density[(k, i)] >= -1e-9);
            }
        }
        // Atoms plus the integrated density give total mass one per state.
        let fine = st.tabulate(401).unwrap();
        let h = b / 400.0;
        for i in 0..n {
            let f = |k: usize| fine.density[(k, i)];
            let mut integral = f(0) + f(400);
            for k in 1..400 {
                integral += if k % 2 == 1 { 4.0 * f(k) } else { 2.0 * f(k) };
            }
            integral *= h / 3.0;
            let total = st.mass0()[i] + st.mass_b()[i] + integral;
            prop_assert!((total - 1.0).abs() < 1e-6, "state {}: {}", i, total);
        }
    }

    #[test]
    fn epoch_laws_interpolate((m, b) in model_strategy(), q in 0.05f64..5.0) {
        for start in [Start::Bottom, Start::Top] {
            let ep = ExpEpoch::new(&m, b, q, start).unwrap();
            // Total mass at x = 0 is one from every start.
            let s0 = ep.survival(0.0).unwrap();
            for row in s0.row_iter() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-8);
            }
            let mid = ep.survival(0.5 * b).unwrap();
            prop_assert!(mid.min() >= -1e-10);
            prop_assert!(mid.max() <= 1.0 + 1e-10);
        }
    }
}

#[test]
fn atoms_sit_only_on_pushing_phases() {
    // Fluid state 1 moves down, so it cannot hold mass at B.
    let m = Model::from_rows(&[&[-1.0, 1.0], &[2.0, -2.0]], &[1.0, -1.5], &[1.0, 0.0]).unwrap();
    let st = Stationary::new(&m, 0.5).unwrap();
    assert_eq!(st.mass_b()[0], 0.0);
    assert_eq!(st.mass_b()[1], 0.0);
    assert!(st.mass0()[1] > 0.0);
    assert_eq!(st.mass0()[0], 0.0);
}

#[test]
fn time_reversed_perspective_matches_reversed_model() {
    let mut r = rng(41);
    for _ in 0..5 {
        let m = random_model(&mut r, 3, 0.3);
        let a = Stationary::with_perspective(&m, 1.3, Perspective::TimeReversed).unwrap();
        let b = Stationary::new(&m.time_reverse(), 1.3).unwrap();
        for x in [0.1, 0.65, 1.2] {
            assert!((a.survival(x).unwrap() - b.survival(x).unwrap()).amax() < 1e-10);
        }
    }
}

#[test]
fn tabulated_law_and_slow_epoch_agree_with_evaluator() {
    let m = Model::from_rows(&[&[-1.0, 1.0], &[2.0, -2.0]], &[0.4, -1.0], &[1.0, 0.6]).unwrap();
    let b = 1.0;
    let st = stationary_law(&m, b, 11).unwrap();
    let direct = Stationary::new(&m, b).unwrap();
    let pi = m.stationary();
    for (k, &x) in st.grid.iter().enumerate() {
        let s = direct.survival(x).unwrap();
        assert!((st.survival.row(k).transpose() - &s).amax() < 1e-12);
        // A barely killed epoch forgets the start: every row is (π_j S_j(x))_j.
        let joint = exp_epoch_law(&m, b, 1e-8, Start::Top, x).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((joint[(i, j)] - pi[j] * s[j]).abs() < 1e-6, "x = {x}");
            }
        }
    }
}

#[test]
fn zero_drift_law_is_continuous_in_drift() {
    let base = |eps: f64| Model::from_rows(&[&[-1.0, 1.0], &[1.0, -1.0]], &[1.0 + eps, -1.0], &[1.0, 0.5]).unwrap();
    let z = Stationary::new(&base(0.0), 1.0).unwrap();
    assert!(z.is_zero_drift());
    let near = Stationary::new(&base(1e-5), 1.0).unwrap();
    for x in [0.2, 0.5, 0.8] {
        assert!((z.survival(x).unwrap() - near.survival(x).unwrap()).amax() < 1e-4);
    }
}
