mod common;

use aegan::losses::*;
use aegan::models::{LatentBatch, Probabilities, SampleBatch, SampleShape, ValueRange, PROB_EPS};
use common::{loss_examples, p};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

#[test]
fn analytic_examples() {
    for e in loss_examples() {
        let tol = if e.name.contains("perfect") { 1e-5 } else { 1e-6 };
        assert!((e.got - e.want).abs() <= tol, "{}: got {} want {}", e.name, e.got, e.want);
    }
}

#[test]
fn empty_batches_are_rejected() {
    assert!(gan_loss_x_hat(&p(&[]), &p(&[0.5])).is_err());
    assert!(generator_term(&p(&[]), GeneratorLoss::Minimax).is_err());
    let a = Array2::<f64>::zeros((0, 2));
    assert!(recon_x_value(&a, &a).is_err());
    assert!(recon_z_value(&Array2::zeros((2, 2)), &Array2::zeros((2, 3)), LatentNorm::L2).is_err());
}

#[test]
fn negative_weights_are_rejected() {
    assert!(ReconWeights::new(-1.0, 1.0).is_err());
    assert!(ReconWeights::new(1.0, f64::NAN).is_err());
}

fn probs(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(PROB_EPS..1.0 - PROB_EPS, 1..n)
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-3.0..3.0f64, rows * cols).prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

proptest! {
    #[test]
    fn adversarial_term_is_nonpositive(real in probs(8), fake in probs(8)) {
        prop_assert!(adversarial_term(&p(&real), &p(&fake)).unwrap() <= 0.0);
    }

    #[test]
    fn kernel_is_symmetric_under_swapping_roles(real in probs(8), fake in probs(8)) {
        let flip = |v: &[f64]| Probabilities(Array1::from(v.iter().map(|q| 1.0 - q).collect::<Vec<_>>()));
        let a = adversarial_term(&p(&real), &p(&fake)).unwrap();
        let b = adversarial_term(&flip(&fake), &flip(&real)).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn better_discriminator_scores_higher(real in probs(8), fake in probs(8), bump in 0.0..0.5f64) {
        let sharper: Vec<f64> = real.iter().map(|q| (q + bump * (1.0 - q)).min(1.0 - PROB_EPS)).collect();
        let base = adversarial_term(&p(&real), &p(&fake)).unwrap();
        prop_assert!(adversarial_term(&p(&sharper), &p(&fake)).unwrap() >= base - 1e-12);
    }

    #[test]
    fn four_components_share_one_kernel(real in probs(8), fake in probs(8)) {
        let (r, f) = (p(&real), p(&fake));
        let k = adversarial_term(&r, &f).unwrap();
        for v in [gan_loss_x_hat(&r, &f), gan_loss_x_tilde(&r, &f), gan_loss_z_hat(&r, &f), gan_loss_z_tilde(&r, &f)] {
            prop_assert_eq!(v.unwrap(), k);
        }
    }

    #[test]
    fn reconstruction_identity_of_indiscernibles(x in matrix(4, 3), d in matrix(4, 3)) {
        prop_assert_eq!(recon_x_value(&x, &x).unwrap(), 0.0);
        prop_assert_eq!(recon_z_value(&x, &x, LatentNorm::L2).unwrap(), 0.0);
        let y = &x + &d;
        if d.iter().any(|v| *v != 0.0) {
            prop_assert!(recon_x_value(&x, &y).unwrap() > 0.0);
            prop_assert!(recon_z_value(&x, &y, LatentNorm::L2).unwrap() > 0.0);
        }
        prop_assert!((recon_x_value(&x, &y).unwrap() - recon_x_value(&y, &x).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn latent_norm_relation(x in matrix(1, 3), d in matrix(1, 3)) {
        let y = &x + &d;
        let l2 = recon_z_value(&x, &y, LatentNorm::L2).unwrap();
        let sq = recon_z_value(&x, &y, LatentNorm::SquaredL2).unwrap();
        prop_assert!((l2 * l2 - sq).abs() < 1e-9 * (1.0 + sq));
    }

    #[test]
    fn total_is_linear_in_lambdas(
        rx in 0.0..2.0f64, rz in 0.0..2.0f64,
        a in 0.0..5.0f64, b in 0.0..5.0f64, c in 0.0..5.0f64, d in 0.0..5.0f64,
    ) {
        let gan = [Some(-1.2), Some(-0.3), Some(-0.9), Some(-2.0)];
        let total = |l1: f64, l2: f64| LossBreakdown::compose(gan, Some(rx), Some(rz), ReconWeights::new(l1, l2).unwrap()).total;
        let base = total(0.0, 0.0);
        let lhs = total(a + b, c + d) - base;
        let rhs = (total(a, c) - base) + (total(b, d) - base);
        prop_assert!((lhs - rhs).abs() < 1e-9);
        prop_assert!((total(a, 0.0) - base - a * rx).abs() < 1e-9);
    }

    #[test]
    fn weighted_sum_matches_parts(x in matrix(3, 2), xr in matrix(3, 2), z in matrix(3, 4), zr in matrix(3, 4), l1 in 0.0..4.0f64, l2 in 0.0..4.0f64) {
        let s = |v: &Array2<f64>| SampleBatch::new(v.clone(), SampleShape::Point { dim: 2 }, ValueRange::symmetric(3.0)).unwrap();
        let l = |v: &Array2<f64>| LatentBatch::new(v.clone()).unwrap();
        let r = reconstruction_loss(&s(&x), &s(&xr), &l(&z), &l(&zr), ReconWeights::new(l1, l2).unwrap()).unwrap();
        prop_assert!((r.weighted_sum - (l1 * r.recon_x + l2 * r.recon_z)).abs() < 1e-9);
    }

    #[test]
    fn generator_variants_agree_in_direction(q in probs(8)) {
        let fake = p(&q);
        let mm = generator_term_grad(&fake, GeneratorLoss::Minimax);
        let ns = generator_term_grad(&fake, GeneratorLoss::NonSaturating);
        prop_assert!(mm.iter().zip(ns.iter()).all(|(a, b)| *a < 0.0 && *b < 0.0));
    }
}
