mod common;

use common::{perturb, reference, small_smooth, Dense};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vropt::estimator::{binomial, delta_b, minibatch_estimate, svrg_estimate, variance_diag};
use vropt::{BatchIndex, CompositeObjective, LossKind, Regularizer, SnapshotContext};

#[test]
fn estimator_is_unbiased_and_exact_at_snapshot() {
    for logistic in [false, true] {
        let obj = small_smooth(4, logistic);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x_tilde = perturb(&mut rng, &[0.0; 3], 2.0);
            let x = perturb(&mut rng, &[0.0; 3], 2.0);
            let ctx = SnapshotContext::new(&obj, x_tilde.clone());
            let mut mean = vec![0.0; 3];
            for i in 0..obj.n() {
                let v = svrg_estimate(&obj, &ctx, i, &x).unwrap();
                for j in 0..3 {
                    mean[j] += v[j] / obj.n() as f64;
                }
                assert_eq!(svrg_estimate(&obj, &ctx, i, &x_tilde).unwrap(), ctx.mu_tilde());
            }
            let g = obj.full_grad(&x);
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
            assert!(common::max_abs_diff(&mean, &g) <= 1e-12 * norm);
        }
    }
}

#[test]
fn full_batch_reproduces_full_gradient() {
    let obj = small_smooth(2, false);
    let ctx = SnapshotContext::new(&obj, vec![0.5, -0.5, 1.0]);
    let x = vec![1.0, 2.0, -1.0];
    let all = BatchIndex::new((0..20).collect(), 20).unwrap();
    let v = minibatch_estimate(&obj, &ctx, &all, &x).unwrap();
    assert!(common::close(&v, &obj.full_grad(&x), 1e-12));
}

fn check_bounds(obj: &CompositeObjective, batches: &[usize]) {
    let r = reference(obj);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for pair in 0..50 {
        let x_tilde = perturb(&mut rng, &r.x_star, 1.5);
        let x = perturb(&mut rng, &r.x_star, 1.5);
        let ctx = SnapshotContext::new(obj, x_tilde);
        let mut prev = f64::INFINITY;
        let base = variance_diag(obj, &ctx, &x, 1, r.f_star, 0).unwrap();
        for &b in batches {
            let v = variance_diag(obj, &ctx, &x, b, r.f_star, 0).unwrap();
            assert!(v.exhaustive);
            assert!(v.empirical_mse <= v.bound + 1e-10, "pair {pair} b={b}: {} > {}", v.empirical_mse, v.bound);
            assert!(v.empirical_mse <= prev + 1e-15, "variance grew at b={b}");
            // sampling without replacement scales the single-index variance by δ(b)
            let want = delta_b(obj.n(), b) * base.empirical_mse;
            assert!((v.empirical_mse - want).abs() <= 1e-10 * (1.0 + want), "b={b}");
            prev = v.empirical_mse;
        }
    }
}

#[test]
fn smooth_variance_bounds_hold() {
    for logistic in [false, true] {
        check_bounds(&small_smooth(9, logistic), &[1, 2, 3, 4, 5, 19, 20]);
    }
}

#[test]
fn nonsmooth_variance_bound_holds() {
    let p = Dense::random(12, 3, false, 0.02, 0.05, 5);
    check_bounds(&p.objective(), &[1, 2, 4, 12]);
    let ds = vropt::dataset::synth_classification(12, 3, 0.1, 8).unwrap();
    let obj = CompositeObjective::new(std::sync::Arc::new(ds), LossKind::Logistic, Regularizer::new(0.0, 0.05).unwrap())
        .unwrap();
    check_bounds(&obj, &[1, 3, 6]);
}

#[test]
fn delta_endpoints_are_exact() {
    assert_eq!(delta_b(20, 1), 1.0);
    assert_eq!(delta_b(20, 20), 0.0);
    assert_eq!(delta_b(1, 1), 0.0);
    assert!((delta_b(20, 2) - 18.0 / 38.0).abs() < 1e-16);
}

#[test]
fn large_batch_count_falls_back_to_sampling() {
    let p = Dense::random(40, 2, false, 0.1, 0.0, 3);
    let obj = p.objective();
    assert!(binomial(40, 10) > 100_000);
    let ctx = SnapshotContext::new(&obj, vec![0.0, 0.0]);
    let x = vec![0.4, -0.2];
    let one = variance_diag(&obj, &ctx, &x, 1, 0.0, 0).unwrap();
    let v = variance_diag(&obj, &ctx, &x, 10, 0.0, 5).unwrap();
    assert!(!v.exhaustive);
    assert!(v.std_err > 0.0);
    let want = delta_b(40, 10) * one.empirical_mse;
    assert!((v.empirical_mse - want).abs() <= 5.0 * v.std_err);
    let again = variance_diag(&obj, &ctx, &x, 10, 0.0, 5).unwrap();
    assert_eq!(v.empirical_mse.to_bits(), again.empirical_mse.to_bits());
}
