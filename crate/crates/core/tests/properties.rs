//! Property tests for the weighting mechanism, replay apportionment and
//! assorted numeric invariants.

use cenra::approximator::{NetSpec, ParamVector, RewardSpace};
use cenra::cra::{CraConfig, CraState};
use cenra::envsuite::{ActionId, Observation};
use cenra::replay::{allocate, ConcatReplay, SamplingWeights, Transition};
use cenra::sync::{
    combine, performance_weights, similarity_weights, FeatureWindow, ReturnWindow, DEFAULT_FLOOR,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn assert_simplex(w: &SamplingWeights) {
    let s: f64 = w.as_slice().iter().sum();
    assert!((s - 1.0).abs() <= 1e-9, "sum {s}");
    assert!(w.as_slice().iter().all(|&x| x > 0.0), "{:?}", w.as_slice());
}

fn feature_windows(means: &[Vec<f64>]) -> Vec<FeatureWindow> {
    means
        .iter()
        .map(|m| {
            let mut w = FeatureWindow::new(4);
            w.push(m.clone());
            w
        })
        .collect()
}

fn return_windows(tails: &[f64]) -> Vec<ReturnWindow> {
    tails
        .iter()
        .map(|&r| {
            let mut w = ReturnWindow::new(4);
            w.push(r);
            w
        })
        .collect()
}

fn features_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..6, 1usize..5).prop_flat_map(|(n, d)| prop::collection::vec(prop::collection::vec(-2.0..2.0f64, d), n))
}

fn weights_strategy() -> impl Strategy<Value = SamplingWeights> {
    prop::collection::vec(0.01..1.0f64, 1..8).prop_map(|v| {
        let s: f64 = v.iter().sum();
        SamplingWeights::new(v.iter().map(|x| x / s).collect()).unwrap()
    })
}

proptest! {
    #[test]
    fn similarity_weights_on_simplex(means in features_strategy()) {
        assert_simplex(&similarity_weights(&feature_windows(&means), DEFAULT_FLOOR).unwrap());
    }

    #[test]
    fn performance_weights_on_simplex(tails in prop::collection::vec(0.0..=1.0f64, 1..8)) {
        assert_simplex(&performance_weights(&return_windows(&tails), DEFAULT_FLOOR).unwrap());
    }

    #[test]
    fn combined_weights_on_simplex(a in weights_strategy(), alpha in 0.0..=1.0f64, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..a.len()).map(|_| rng.random_range(0.01..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let b = SamplingWeights::new(raw.iter().map(|x| x / s).collect()).unwrap();
        let w = combine(&a, &b, alpha).unwrap();
        assert_simplex(&w);
        for i in 0..a.len() {
            let expect = alpha * a.as_slice()[i] + (1.0 - alpha) * b.as_slice()[i];
            prop_assert!((w.as_slice()[i] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn similarity_is_permutation_equivariant(means in features_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..means.len()).collect();
        rand::seq::SliceRandom::shuffle(&mut perm[..], &mut rng);
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| means[i].clone()).collect();
        let w = similarity_weights(&feature_windows(&means), DEFAULT_FLOOR).unwrap();
        let wp = similarity_weights(&feature_windows(&permuted), DEFAULT_FLOOR).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert!((wp.as_slice()[k] - w.as_slice()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn performance_is_permutation_equivariant(tails in prop::collection::vec(0.0..=1.0f64, 1..8), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..tails.len()).collect();
        rand::seq::SliceRandom::shuffle(&mut perm[..], &mut rng);
        let permuted: Vec<f64> = perm.iter().map(|&i| tails[i]).collect();
        let w = performance_weights(&return_windows(&tails), DEFAULT_FLOOR).unwrap();
        let wp = performance_weights(&return_windows(&permuted), DEFAULT_FLOOR).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert!((wp.as_slice()[k] - w.as_slice()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn lower_tail_return_raises_weight(
        tails in prop::collection::vec(0.05..=1.0f64, 2..6),
        which in any::<prop::sample::Index>(),
        drop in 0.01..0.5f64,
    ) {
        let i = which.index(tails.len());
        let mut lower = tails.clone();
        lower[i] = (tails[i] - drop).max(0.01);
        prop_assume!(lower[i] < tails[i]);
        let before = performance_weights(&return_windows(&tails), DEFAULT_FLOOR).unwrap();
        let after = performance_weights(&return_windows(&lower), DEFAULT_FLOOR).unwrap();
        prop_assert!(after.as_slice()[i] > before.as_slice()[i]);
    }

    #[test]
    fn weaker_projection_gets_weakly_more_similarity_weight(
        others in prop::collection::vec(prop::collection::vec(0.2..2.0f64, 3), 2..5),
        scale in 0.2..0.95f64,
    ) {
        // two candidate tasks along the same direction; the shorter one
        // projects less onto the shared centroid
        let mut means = others.clone();
        let dir = others[0].clone();
        means.push(dir.iter().map(|v| v * scale).collect());
        means.push(dir.clone());
        let n = means.len();
        let w = similarity_weights(&feature_windows(&means), DEFAULT_FLOOR).unwrap();
        prop_assert!(w.as_slice()[n - 2] >= w.as_slice()[n - 1]);
    }

    #[test]
    fn allocation_sums_exactly(w in weights_strategy(), batch in 0usize..1000) {
        let counts = allocate(&w, batch);
        prop_assert_eq!(counts.iter().sum::<usize>(), batch);
        for (c, x) in counts.iter().zip(w.as_slice()) {
            // largest remainder stays within one of the exact quota
            prop_assert!((*c as f64 - x * batch as f64).abs() < 1.0 + 1e-9);
        }
    }

    #[test]
    fn reward_space_bound_holds(seed in any::<u64>(), scale in 0.1..50.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = CraConfig { hidden: vec![6], ..CraConfig::default() };
        let mut cra = CraState::<f32>::new(3, &config, &mut rng).unwrap();
        for v in cra.actor.params.values_mut() {
            *v *= scale as f32;
        }
        for _ in 0..50 {
            let obs = Observation((0..3).map(|_| rng.random_range(-10.0..10.0f32)).collect());
            let a = ActionId(rng.random_range(0..4));
            let r = cra.sample_reward(&obs, a, &mut rng).unwrap();
            prop_assert!((-1.0..=1.0).contains(&r));
            prop_assert!((-1.0..=1.0).contains(&cra.mean_reward(&obs, a).unwrap()));
        }
    }
}

#[test]
fn floor_behaviour() {
    // all floored inputs: uniform
    let w = performance_weights(&return_windows(&[0.0, 0.0, 0.0, 0.0]), DEFAULT_FLOOR).unwrap();
    for &x in w.as_slice() {
        assert!((x - 0.25).abs() < 1e-12);
    }
    // one floored task next to healthy ones takes nearly everything, others stay positive
    let w = performance_weights(&return_windows(&[0.0, 0.5, 0.5]), DEFAULT_FLOOR).unwrap();
    assert_simplex(&w);
    assert!(w.as_slice()[0] > 1.0 - 1e-12);
    // non-positive similarity scores are floored rather than flipped
    let w = similarity_weights(&feature_windows(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0]]), DEFAULT_FLOOR)
        .unwrap();
    assert_simplex(&w);
    let logits_finite = 1.0 / DEFAULT_FLOOR;
    assert!(logits_finite.is_finite());
}

#[test]
fn performance_example_ordering() {
    let w = performance_weights(&return_windows(&[0.01, 0.5, 0.5, 0.5]), DEFAULT_FLOOR).unwrap();
    let s = w.as_slice();
    assert!(s[0] > s[1] && s[0] > s[2] && s[0] > s[3]);
}

#[test]
fn empirical_proportions_converge() {
    let space = RewardSpace::new(-1.0f32, 1.0).unwrap();
    let mut replay = ConcatReplay::new(3, 100, space).unwrap();
    for task_id in 0..3 {
        for k in 0..10 {
            replay
                .push(Transition {
                    task_id,
                    obs: Observation(vec![k as f32]),
                    action: ActionId(0),
                    next_obs: Observation(vec![k as f32]),
                    next_action: ActionId(0),
                    r_env: 0.0,
                    r_knw_stored: 0.0,
                    done: false,
                })
                .unwrap();
        }
    }
    let w = SamplingWeights::new(vec![0.5, 0.3, 0.2]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut counts = [0usize; 3];
    // 10k draws in reward-agent sized batches, whose quotas are not integers
    let mut drawn = 0;
    while drawn < 10_000 {
        for t in replay.sample_cra(&w, 256, &mut rng).unwrap() {
            counts[t.task_id] += 1;
        }
        drawn += 256;
    }
    for (c, x) in counts.iter().zip(w.as_slice()) {
        let p = *c as f64 / drawn as f64;
        assert!((p - x).abs() <= 0.01, "{p} vs {x}");
    }
}

#[test]
fn soft_updates_reach_a_frozen_source() {
    let spec = NetSpec::new(3, vec![4], 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let source = ParamVector::<f64>::init(&spec, &mut rng);
    let mut target = source.clone();
    for _ in 0..1000 {
        target.soft_update_from(&source, 5e-3);
    }
    assert_eq!(target, source);
    let mut far = ParamVector::<f64>::zeros(&spec);
    far.soft_update_from(&source, 1.0);
    assert_eq!(far, source);
}

/// Every check above, for callers that include this file as a module.
#[allow(dead_code)]
pub fn run_all() {
    similarity_weights_on_simplex();
    performance_weights_on_simplex();
    combined_weights_on_simplex();
    similarity_is_permutation_equivariant();
    performance_is_permutation_equivariant();
    lower_tail_return_raises_weight();
    weaker_projection_gets_weakly_more_similarity_weight();
    allocation_sums_exactly();
    reward_space_bound_holds();
    floor_behaviour();
    performance_example_ordering();
    empirical_proportions_converge();
    soft_updates_reach_a_frozen_source();
}
