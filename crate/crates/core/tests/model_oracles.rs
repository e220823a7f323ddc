mod common;

use common::*;
use mlt::model::{
    interdependence, log_odds, log_odds_matrix, nll, nll_grad, nll_sampled, sample_network,
    MaskPlan, MltParams, Observations, Variant,
};
use mlt::simplex::softplus_inv;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn nll_matches_dyad_loop_for_every_variant() {
    for seed in 0..15 {
        for variant in [Variant::Bias, Variant::Tradeoff, Variant::Full] {
            let (g, p, mask) = random_instance(seed, 6, 2, 2, variant);
            let a = nll(&g, &p, &mask).unwrap();
            let b = brute_nll(&g, &p, &mask);
            assert!((a - b).abs() <= 1e-10, "seed {seed} {variant}: {a} vs {b}");
        }
    }
}

#[test]
fn matrix_and_scalar_log_odds_agree() {
    let (_, p, _) = random_instance(4, 7, 3, 2, Variant::Full);
    for l in 0..3 {
        let r = log_odds_matrix(&p, l);
        for i in 0..7 {
            for j in 0..7 {
                if i != j {
                    let s = log_odds(&p, i, j, l).unwrap();
                    assert!((r[[i, j]] - s).abs() < 1e-12);
                    assert!((s - naive_log_odds(&p, i, j, l)).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn one_hot_memberships_reduce_to_block_indicator() {
    // 4 nodes, H = 2; finest blocks 0, 1, 2, 0
    let blocks = [0usize, 1, 2, 0];
    let mut p = MltParams::zeros(4, 1, 2, Variant::Full);
    for (i, &b) in blocks.iter().enumerate() {
        for k in 0..4 {
            let x = if k == b { 60.0 } else { -60.0 };
            p.u_logits[0][[i, k]] = x;
            p.v_logits[0][[i, k]] = x;
        }
    }
    p.strength.global_raw = softplus_inv(6.0);
    p.strength.level_logits[0] = vec![0.2, -0.3, 0.9];
    let s = p.strength.strengths(0);
    for i in 0..4 {
        for j in 0..4 {
            if i == j {
                continue;
            }
            let (a, b) = (blocks[i], blocks[j]);
            // deepest shared level of the binary tree
            let shared = (0..=2)
                .take_while(|&h| a >> (2 - h) == b >> (2 - h))
                .count();
            let expect: f64 = s[..shared].iter().sum();
            let eta = interdependence(&p, i, j, 0).unwrap();
            assert!((eta - expect).abs() < 1e-12, "({i},{j}) {eta} vs {expect}");
        }
    }
}

#[test]
fn full_model_with_vanishing_strength_equals_bias_model() {
    for seed in 0..5 {
        let (g, mut p, mask) = random_instance(seed, 8, 3, 2, Variant::Full);
        p.strength.global_raw = -800.0;
        let full = nll(&g, &p, &mask).unwrap();
        let bias = nll(&g, &p.with_variant(Variant::Bias), &mask).unwrap();
        assert_eq!(full, bias);
    }
}

#[test]
fn bias_log_odds_ignore_other_parameters() {
    let (_, p, _) = random_instance(1, 6, 2, 2, Variant::Bias);
    let mut q = p.clone();
    let mut r = rng(99);
    q.z_logits.mapv_inplace(|_| r.gen_range(-3.0..3.0));
    q.u_logits[1].mapv_inplace(|_| r.gen_range(-3.0..3.0));
    q.strength.global_raw = 4.0;
    for l in 0..2 {
        assert_eq!(log_odds_matrix(&p, l), log_odds_matrix(&q, l));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn nll_invariant_to_logit_shifts(seed in 0u64..1000, node in 0usize..6, c in -5.0f64..5.0) {
        let (g, p, mask) = random_instance(seed, 6, 2, 2, Variant::Full);
        let base = nll(&g, &p, &mask).unwrap();
        let mut q = p.clone();
        q.z_logits.row_mut(node).mapv_inplace(|x| x + c);
        q.w_logits.row_mut(node).mapv_inplace(|x| x + c);
        q.u_logits[1].row_mut(node).mapv_inplace(|x| x + c);
        q.v_logits[0].row_mut(node).mapv_inplace(|x| x + c);
        q.strength.level_logits[1].iter_mut().for_each(|x| *x += c);
        let shifted = nll(&g, &q, &mask).unwrap();
        prop_assert!((base - shifted).abs() < 1e-12);
    }
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    for seed in 0..3 {
        for variant in [Variant::Bias, Variant::Tradeoff, Variant::Full] {
            let (g, p, mask) = random_instance(100 + seed, 8, 3, 2, variant);
            let obs = Observations::new(&g, &mask);
            let (_, grad) = obs.nll_grad(&p, None).unwrap();
            let fd = finite_difference(&p, 1e-5, |q| obs.nll(q).unwrap());
            let err = max_rel_err(&grad.flatten(), &fd, 1e-6);
            assert!(err <= 1e-4, "seed {seed} {variant}: rel err {err}");
        }
    }
}

#[test]
fn sampled_gradient_matches_finite_differences() {
    let (g, p, mask) = random_instance(7, 10, 2, 2, Variant::Full);
    let obs = Observations::new(&g, &mask);
    let nodes = [1, 3, 4, 8, 9];
    let (_, grad) = obs.nll_grad(&p, Some(&nodes)).unwrap();
    let fd = finite_difference(&p, 1e-5, |q| obs.nll_on(q, &nodes).unwrap());
    assert!(max_rel_err(&grad.flatten(), &fd, 1e-6) <= 1e-4);
    // unsampled nodes receive no bias gradient
    assert_eq!(grad.beta[[0, 0]], 0.0);
    assert_eq!(grad.gamma[[2, 1]], 0.0);
}

#[test]
fn nll_grad_loss_equals_nll() {
    let (g, p, mask) = random_instance(3, 9, 2, 3, Variant::Full);
    let (l, _) = nll_grad(&g, &p, &mask, None).unwrap();
    assert_eq!(l, nll(&g, &p, &mask).unwrap());
}

#[test]
fn subsampled_estimator_is_unbiased() {
    let (g, p, mask) = random_instance(5, 30, 2, 3, Variant::Full);
    let exact = nll(&g, &p, &mask).unwrap();
    let mut r = rng(2024);
    let draws: Vec<f64> = (0..2000)
        .map(|_| nll_sampled(&g, &p, &mask, 10, &mut r).unwrap())
        .collect();
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let se = sd / n.sqrt();
    assert!(
        (mean - exact).abs() <= 3.0 * se,
        "mean {mean} exact {exact} se {se}"
    );
}

#[test]
fn unit_probability_sampler_concentrates() {
    // all-zero bias model: each dyad is a fair coin
    let p = MltParams::zeros(40, 1, 1, Variant::Bias);
    let dyads = 40.0 * 39.0;
    let sd = (dyads * 0.25f64).sqrt();
    let mut inside = 0;
    for seed in 0..100 {
        let g = sample_network(&p, &mut rng(seed));
        if (g.total_edges() as f64 - 0.5 * dyads).abs() <= 3.0 * sd {
            inside += 1;
        }
    }
    assert!(inside >= 95, "{inside}/100 within 3 sd");
}

#[test]
fn masking_shrinks_the_likelihood_support() {
    let (g, p, _) = random_instance(12, 6, 1, 1, Variant::Bias);
    let mut mask = MaskPlan::empty(1);
    for j in 1..6 {
        mask.hide(0, 0, j).unwrap();
    }
    assert!((nll(&g, &p, &mask).unwrap() - brute_nll(&g, &p, &mask)).abs() < 1e-12);
}
