use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use zsl_core::dataset::{
    load_dataset, make_split, save_dataset, standardize_signatures, Dataset, SignatureMatrix,
    SyntheticConfig,
};
use zsl_core::diagnostics::{aggregate_scores, collect_mispredictions, Side};
use zsl_core::model::{
    compatibility, loss_and_grad, predict, weighted_compatibility, MappingModel,
};
use zsl_core::steering::SteeringState;
use zsl_core::Matrix;

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Random dataset with `classes` classes of `per_class` instances each.
fn random_dataset(seed: u64, classes: usize, per_class: usize, d: usize, a: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = classes * per_class;
    let features = (0..n * d).map(|_| rng.random_range(-2.0f32..2.0)).collect();
    let labels = (0..n).map(|i| i % classes).collect();
    Dataset::new(
        Matrix::from_vec(n, d, features).unwrap(),
        labels,
        (0..classes).map(|c| format!("c{c}")).collect(),
        Matrix::from_vec(classes, a, uniform_vec(&mut rng, classes * a, 1.0)).unwrap(),
        (0..a).map(|k| format!("a{k}")).collect(),
    )
    .unwrap()
}

fn random_model(seed: u64, d: usize, h: usize, a: usize) -> MappingModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = MappingModel::init(d, h, a, &mut rng);
    for p in m.params_mut() {
        for v in p.iter_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
    }
    m
}

fn weights_strategy(a: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), Just(1.0), 0.0..=1.0f64], a)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn save_load_round_trip(
        seed in any::<u64>(),
        seen in 2usize..5,
        unseen in 0usize..3,
        a in 1usize..6,
        extra_dim in 0usize..4,
        per_class in 2usize..6,
        corrupt in any::<bool>(),
    ) {
        let cfg = SyntheticConfig {
            seen_classes: seen,
            unseen_classes: unseen,
            attributes: a,
            dim: a + extra_dim,
            per_class,
            noise_sigma: 0.5,
            corrupt_attribute: corrupt.then_some(0),
            seed,
        };
        let ds = zsl_core::dataset::generate_synthetic(&cfg).unwrap().dataset;
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        prop_assert_eq!(back.features().as_slice(), ds.features().as_slice());
        for (x, y) in back.raw_attributes().as_slice().iter().zip(ds.raw_attributes().as_slice()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn split_partition_laws(
        seed in any::<u64>(),
        classes in 3usize..7,
        per_class in 2usize..30,
        fraction in 0.01f64..0.99,
        unseen_count in 0usize..2,
    ) {
        let ds = random_dataset(seed, classes, per_class, 2, 2);
        let unseen: Vec<String> = (0..unseen_count).map(|c| format!("c{c}")).collect();
        let split = make_split(&ds, &unseen, fraction, seed).unwrap();
        let mut all: Vec<usize> = split.train_instances.iter().chain(&split.diag_instances).copied().collect();
        all.sort_unstable();
        let before = all.len();
        all.dedup();
        prop_assert_eq!(before, all.len(), "train and diag overlap");
        let expected: Vec<usize> = (0..ds.num_instances())
            .filter(|&i| split.is_seen(ds.labels()[i]))
            .collect();
        prop_assert_eq!(all, expected);
        let counts = split.diag_counts(&ds);
        for &c in &split.seen_classes {
            let n = per_class as f64;
            let want = ((fraction * n - 1e-9).ceil() as usize).clamp(1, per_class - 1);
            prop_assert_eq!(counts[c], want);
        }
        for &c in &split.unseen_classes {
            prop_assert_eq!(counts[c], 0);
        }
        prop_assert_eq!(make_split(&ds, &unseen, fraction, seed).unwrap(), split);
    }

    #[test]
    fn standardize_is_idempotent(seed in any::<u64>(), rows in 2usize..12, cols in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = uniform_vec(&mut rng, rows * cols, 50.0);
        // Force one constant column now and then.
        if seed % 3 == 0 {
            for r in 0..rows {
                data[r * cols] = 7.5;
            }
        }
        let raw = Matrix::from_vec(rows, cols, data).unwrap();
        let once = standardize_signatures(&raw).unwrap();
        let twice = standardize_signatures(once.matrix()).unwrap();
        for k in 0..cols {
            if once.constant_columns().contains(&k) {
                continue;
            }
            for r in 0..rows {
                prop_assert!((once.matrix().get(r, k) - twice.matrix().get(r, k)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn diagnostics_laws(
        seed in any::<u64>(),
        classes in 2usize..6,
        a in 1usize..7,
        w in weights_strategy(6),
    ) {
        let w = &w[..a];
        let (d, h) = (4, 5);
        let ds = random_dataset(seed, classes, 12, d, a);
        let sigs = SignatureMatrix::from_matrix(ds.raw_attributes().clone());
        let model = random_model(seed ^ 0x5eed, d, h, a);
        let seen: Vec<usize> = (0..classes).collect();
        let instances: Vec<usize> = (0..ds.num_instances()).collect();
        let records = collect_mispredictions(&model, &instances, &seen, &ds, &sigs, w).unwrap();
        for r in &records {
            let wz = |c: usize| -> Vec<f64> {
                sigs.signature(c).iter().zip(w).map(|(z, w)| z * w).collect()
            };
            let gap = compatibility(&r.mapped, &wz(r.predicted_class)).unwrap()
                - compatibility(&r.mapped, &wz(r.true_class)).unwrap();
            let sum: f64 = r.contributions.iter().sum();
            prop_assert!((sum - gap).abs() <= 1e-9);
            // Ties go to the lower index, so a wrong winner either scores
            // higher or ties from below.
            prop_assert!(gap > 0.0 || (gap == 0.0 && r.predicted_class < r.true_class));
        }

        let counts = vec![12usize; classes];
        let summary = aggregate_scores(&records, a, &seen, &counts).unwrap();
        for side in [Side::Over, Side::Under] {
            for k in 0..a {
                for j in 0..classes {
                    let q = summary.q(side).get(k, j);
                    prop_assert!(q >= 0.0);
                    let parts = summary.breakdown(k, j).side(side);
                    prop_assert!(parts.values().all(|&v| v >= 0.0));
                    let total: f64 = parts.values().sum();
                    prop_assert!((total - q).abs() <= 1e-9);
                }
            }
        }

        let doubled: Vec<_> = records.iter().chain(&records).cloned().collect();
        let counts2: Vec<usize> = counts.iter().map(|c| 2 * c).collect();
        let summary2 = aggregate_scores(&doubled, a, &seen, &counts2).unwrap();
        for side in [Side::Over, Side::Under] {
            for (x, y) in summary.q(side).as_slice().iter().zip(summary2.q(side).as_slice()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn weighted_compatibility_identities(
        z1 in prop::collection::vec(-10.0..10.0f64, 1..16),
        seed in any::<u64>(),
    ) {
        let a = z1.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z2 = uniform_vec(&mut rng, a, 10.0);
        let w: Vec<f64> = (0..a).map(|_| rng.random_range(0.0..=1.0)).collect();
        let scaled: Vec<f64> = z2.iter().zip(&w).map(|(z, w)| z * w).collect();
        let lhs = weighted_compatibility(&z1, &z2, &w).unwrap();
        let rhs = compatibility(&z1, &scaled).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12);
        let ones = vec![1.0; a];
        prop_assert_eq!(weighted_compatibility(&z1, &z2, &ones).unwrap(), compatibility(&z1, &z2).unwrap());
    }

    #[test]
    fn prediction_invariances(
        seed in any::<u64>(),
        classes in 2usize..8,
        a in 2usize..8,
        exponent in -4i32..5,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 5;
        let model = random_model(seed, d, 6, a);
        let sigs = Matrix::from_vec(classes, a, uniform_vec(&mut rng, classes * a, 2.0)).unwrap();
        let candidates: Vec<usize> = (0..classes).collect();
        let k = rng.random_range(0..a);
        let mut w: Vec<f64> = (0..a).map(|_| rng.random_range(0.0..=1.0)).collect();
        w[k] = 0.0;
        let mut randomized = sigs.clone();
        for c in 0..classes {
            randomized.set(c, k, rng.random_range(-100.0..100.0));
        }
        let c = 2f64.powi(exponent);
        let scaled = Matrix::from_vec(classes, a, sigs.as_slice().iter().map(|v| v * c).collect()).unwrap();
        let (s, r, sc) = (
            SignatureMatrix::from_matrix(sigs),
            SignatureMatrix::from_matrix(randomized),
            SignatureMatrix::from_matrix(scaled),
        );
        for _ in 0..20 {
            let x = uniform_vec(&mut rng, d, 3.0);
            let base = predict(&model, &x, &candidates, &s, &w).unwrap();
            prop_assert_eq!(predict(&model, &x, &candidates, &r, &w).unwrap(), base);
            prop_assert_eq!(predict(&model, &x, &candidates, &sc, &w).unwrap(), base);
        }
    }

    #[test]
    fn hinge_loss_is_nonnegative(
        seed in any::<u64>(),
        eta in 0.0..2.0f64,
        w in weights_strategy(4),
    ) {
        let ds = random_dataset(seed, 4, 3, 3, 4);
        let sigs = SignatureMatrix::from_matrix(ds.raw_attributes().clone());
        let model = random_model(seed, 3, 4, 4);
        let xs: Vec<Vec<f64>> = (0..ds.num_instances())
            .map(|i| ds.feature_row(i).iter().map(|&v| v as f64).collect())
            .collect();
        let inputs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let seen = [0, 1, 2, 3];
        let (loss, _) = loss_and_grad(&model, &inputs, ds.labels(), &sigs, &seen, &w, eta, 0.0).unwrap();
        prop_assert!(loss >= 0.0 && loss.is_finite());
    }

    #[test]
    fn steering_clamp_and_replay(
        a in 1usize..6,
        steps in prop::collection::vec((0usize..6, -1.5..1.5f64), 0..40),
    ) {
        let mut state = SteeringState::new(a);
        let mut revision = 0;
        for (k, delta) in steps {
            let result = state.apply(k, delta);
            if k < a {
                prop_assert!(result.is_ok());
                revision += 1;
            } else {
                prop_assert!(result.is_err());
            }
            prop_assert!(state.weights().iter().all(|w| (0.0..=1.0).contains(w)));
            prop_assert_eq!(state.revision(), revision);
        }
        prop_assert_eq!(state.replay(), state.weights().to_vec());
    }
}
