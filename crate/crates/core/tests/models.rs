use aegan::models::*;
use aegan::par::Exec;
use ndarray::{s, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const IMAGE: ImageShape = ImageShape { height: 8, width: 8, channels: 3 };

fn random(rows: usize, cols: usize, seed: u64, half: f64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-half..half))
}

fn all_specs() -> Vec<NetworkSpec> {
    vec![
        NetworkSpec::dense(NetworkRole::Generator, vec![4, 16, 2]).with_output_scale(3.0),
        NetworkSpec::dense(NetworkRole::Encoder, vec![2, 16, 16, 4]),
        NetworkSpec::dense(NetworkRole::SampleDiscriminator, vec![2, 8, 1]),
        NetworkSpec::dense(NetworkRole::LatentDiscriminator, vec![4, 8, 1]),
        NetworkSpec::convolutional(NetworkRole::Generator, vec![6, 4, 3], IMAGE),
        NetworkSpec::convolutional(NetworkRole::Encoder, vec![3, 4, 6], IMAGE),
        NetworkSpec::convolutional(NetworkRole::SampleDiscriminator, vec![3, 4, 1], IMAGE),
    ]
}

#[test]
fn shape_algebra() {
    for spec in all_specs() {
        let net = build_network(&spec, 1).unwrap();
        let out = net.forward(&random(5, net.input_dim(), 2, 1.0), Exec::Sequential).unwrap();
        assert_eq!(out.dim(), (5, net.output_dim()), "{spec:?}");
        let expected = match (spec.role, spec.family) {
            (NetworkRole::Generator, ArchitectureFamily::Convolutional) => IMAGE.len(),
            (NetworkRole::Encoder, ArchitectureFamily::Convolutional) => 6,
            (NetworkRole::Encoder, _) => 4,
            (NetworkRole::Generator, _) => 2,
            _ => 1,
        };
        assert_eq!(net.output_dim(), expected);
        assert!(net.forward(&random(5, net.input_dim() + 1, 2, 1.0), Exec::Sequential).is_err());
    }
}

#[test]
fn output_ranges() {
    for spec in all_specs() {
        let net = build_network(&spec, 3).unwrap();
        let out = net.forward(&random(16, net.input_dim(), 4, 50.0), Exec::Sequential).unwrap();
        match spec.output_activation {
            OutputActivation::BoundedSymmetric => assert!(out.iter().all(|v| v.abs() <= spec.output_scale)),
            OutputActivation::Probability => assert!(out.iter().all(|v| (PROB_EPS..=1.0 - PROB_EPS).contains(v))),
            OutputActivation::Identity => assert!(out.iter().all(|v| v.is_finite())),
        }
    }
}

#[test]
fn construction_is_deterministic_per_seed() {
    for spec in all_specs() {
        assert_eq!(build_network(&spec, 9).unwrap(), build_network(&spec, 9).unwrap());
        assert_ne!(build_network(&spec, 9).unwrap().fingerprint(), build_network(&spec, 10).unwrap().fingerprint());
    }
}

#[test]
fn sequential_and_parallel_agree_bitwise() {
    for spec in all_specs() {
        let net = build_network(&spec, 5).unwrap();
        let x = random(7, net.input_dim(), 6, 1.0);
        assert_eq!(net.forward(&x, Exec::Sequential).unwrap(), net.forward(&x, Exec::Parallel).unwrap());
    }
}

#[test]
fn role_mismatch_is_rejected() {
    let e = build_network(&NetworkSpec::dense(NetworkRole::Encoder, vec![2, 8, 4]), 0).unwrap();
    let z = LatentBatch::new(random(3, 2, 0, 1.0)).unwrap();
    assert!(generate(&e, &z).is_err());
}

#[test]
fn wrong_output_activation_is_rejected() {
    let mut spec = NetworkSpec::dense(NetworkRole::SampleDiscriminator, vec![2, 8, 1]);
    spec.output_activation = OutputActivation::Identity;
    assert!(build_network(&spec, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn batch_independence(seed in 0u64..1000, n in 2usize..9, k in 0usize..8) {
        let k = k % n;
        for spec in all_specs() {
            let net = build_network(&spec, seed).unwrap();
            let x = random(n, net.input_dim(), seed + 1, 1.0);
            let batched = net.forward(&x, Exec::Sequential).unwrap();
            let alone = net.forward(&x.slice(s![k..k + 1, ..]).to_owned(), Exec::Sequential).unwrap();
            for (a, b) in batched.row(k).iter().zip(alone.row(0)) {
                prop_assert!((a - b).abs() <= 1e-5 * (1.0 + b.abs()));
            }
        }
    }
}
