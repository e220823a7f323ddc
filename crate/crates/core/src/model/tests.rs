use approx::assert_abs_diff_eq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::simplex::softplus_inv;

/// N=2, L=2, H=1 instance with hand-chosen values.
fn worked_params() -> MltParams {
    let mut p = MltParams::zeros(2, 2, 1, Variant::Full);
    p.z_logits
        .row_mut(0)
        .assign(&ndarray::arr1(&[0.6f64.ln(), 0.4f64.ln()]));
    p.w_logits
        .row_mut(1)
        .assign(&ndarray::arr1(&[0.5f64.ln(), 0.5f64.ln()]));
    p.u_logits[0]
        .row_mut(0)
        .assign(&ndarray::arr1(&[0.7f64.ln(), 0.3f64.ln()]));
    p.v_logits[0]
        .row_mut(1)
        .assign(&ndarray::arr1(&[0.2f64.ln(), 0.8f64.ln()]));
    p.strength.global_raw = softplus_inv(3.0);
    p.strength.level_logits[0] = vec![1f64.ln(), 2f64.ln()];
    p
}

#[test]
fn worked_interdependence() {
    let mut p = worked_params();
    assert_abs_diff_eq!(
        interdependence(&p, 0, 1, 0).unwrap(),
        0.528,
        epsilon = 1e-12
    );
    p.beta[[0, 0]] = 0.2;
    p.gamma[[1, 0]] = -0.1;
    assert_abs_diff_eq!(log_odds(&p, 0, 1, 0).unwrap(), 0.628, epsilon = 1e-12);
    assert_abs_diff_eq!(log_odds_matrix(&p, 0)[[0, 1]], 0.628, epsilon = 1e-12);
}

#[test]
fn zero_strength_switches_interaction_off() {
    let mut p = worked_params();
    p.strength.global_raw = -800.0;
    assert_eq!(interdependence(&p, 0, 1, 0).unwrap(), 0.0);
}

#[test]
fn perfect_comembership_sums_strengths() {
    let mut p = MltParams::zeros(2, 1, 2, Variant::Full);
    let onehot = [60.0, -60.0, -60.0, -60.0];
    p.u_logits[0].row_mut(0).assign(&ndarray::arr1(&onehot));
    p.v_logits[0].row_mut(1).assign(&ndarray::arr1(&onehot));
    p.strength.global_raw = softplus_inv(2.5);
    p.strength.level_logits[0] = vec![0.1, 0.7, -0.4];
    let total: f64 = p.strength.strengths(0).iter().sum();
    assert_abs_diff_eq!(
        interdependence(&p, 0, 1, 0).unwrap(),
        total,
        epsilon = 1e-12
    );
}

#[test]
fn diagonal_dyad_is_rejected() {
    let p = worked_params();
    assert!(interdependence(&p, 1, 1, 0).is_err());
    assert!(log_odds(&p, 0, 0, 1).is_err());
    assert!(log_odds(&p, 0, 2, 0).is_err());
}

#[test]
fn variant_specific_log_odds() {
    let mut p = MltParams::zeros(3, 2, 1, Variant::Bias);
    assert_eq!(log_odds(&p, 0, 1, 0).unwrap(), 0.0);
    assert_eq!(link_probability(&p, 0, 1, 0).unwrap(), 0.5);
    p.beta[[0, 1]] = 1.0;
    p.gamma[[2, 1]] = -0.5;
    assert_eq!(log_odds(&p, 0, 2, 1).unwrap(), 0.5);

    let mut t = worked_params().with_variant(Variant::Tradeoff);
    t.strength.global_raw = softplus_inv(2.0);
    // z_0 = (0.6, 0.4), w_1 = (0.5, 0.5)
    assert_abs_diff_eq!(
        interdependence(&t, 0, 1, 0).unwrap(),
        0.6 * 2.0 * 0.5,
        epsilon = 1e-12
    );
}

#[test]
fn two_node_nll() {
    let g = MultiplexGraph::from_edges(2, 1, [(0, 0, 1)]).unwrap();
    let p = MltParams::zeros(2, 1, 1, Variant::Bias);
    let v = nll(&g, &p, &MaskPlan::empty(1)).unwrap();
    assert_abs_diff_eq!(v, 2f64.ln(), epsilon = 1e-15);
}

#[test]
fn empty_graph_nll_counts_layers() {
    let g = MultiplexGraph::new(5, 3);
    let p = MltParams::zeros(5, 3, 1, Variant::Bias);
    let v = nll(&g, &p, &MaskPlan::empty(3)).unwrap();
    assert_abs_diff_eq!(v, 3.0 * 2f64.ln(), epsilon = 1e-14);
}

#[test]
fn shape_mismatch_is_an_error() {
    let g = MultiplexGraph::new(5, 3);
    let p = MltParams::zeros(4, 3, 1, Variant::Bias);
    assert!(matches!(
        nll(&g, &p, &MaskPlan::empty(3)),
        Err(MltError::Shape(_))
    ));
}

#[test]
fn full_sample_equals_nll() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = MltParams::random(7, 2, 2, Variant::Full, &mut rng);
    let g = sample_network(&p, &mut rng);
    let mask = MaskPlan::empty(2);
    let exact = nll(&g, &p, &mask).unwrap();
    let sampled = nll_sampled(&g, &p, &mask, 7, &mut rng).unwrap();
    assert_abs_diff_eq!(sampled, exact, epsilon = 1e-14);
    assert!(nll_sampled(&g, &p, &mask, 1, &mut rng).is_err());
    assert!(nll_sampled(&g, &p, &mask, 8, &mut rng).is_err());
}

#[test]
fn sampled_nll_is_deterministic_per_seed() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = MltParams::random(12, 2, 2, Variant::Full, &mut rng);
    let g = sample_network(&p, &mut rng);
    let mask = MaskPlan::empty(2);
    let a = nll_sampled(&g, &p, &mask, 5, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let b = nll_sampled(&g, &p, &mask, 5, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn masked_dyads_do_not_move_the_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let p = MltParams::random(6, 2, 2, Variant::Full, &mut rng);
    let g = sample_network(&p, &mut rng);
    let mut mask = MaskPlan::empty(2);
    mask.hide(1, 2, 4).unwrap();
    let mut flipped = g.clone();
    if g.has_edge(1, 2, 4) {
        flipped = MultiplexGraph::from_edges(
            6,
            2,
            (0..2)
                .flat_map(|l| g.edges(l).map(move |(i, j)| (l, i, j)))
                .filter(|&e| e != (1, 2, 4)),
        )
        .unwrap();
    } else {
        flipped.add_edge(1, 2, 4).unwrap();
    }
    let (la, ga) = nll_grad(&g, &p, &mask, None).unwrap();
    let (lb, gb) = nll_grad(&flipped, &p, &mask, None).unwrap();
    assert_eq!(la, lb);
    assert_eq!(ga, gb);
}

#[test]
fn symmetric_instance_has_symmetric_gradient() {
    // every node identical, complete graph in layer 0, empty layer 1
    let n = 5;
    let mut g = MultiplexGraph::new(n, 2);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                g.add_edge(0, i, j).unwrap();
            }
        }
    }
    let mut p = MltParams::zeros(n, 2, 2, Variant::Full);
    for i in 0..n {
        p.u_logits[0]
            .row_mut(i)
            .assign(&ndarray::arr1(&[0.3, -0.2, 0.5, 0.0]));
        p.v_logits[0]
            .row_mut(i)
            .assign(&ndarray::arr1(&[0.1, 0.4, -0.3, 0.2]));
        p.beta[[i, 0]] = -0.4;
        p.gamma[[i, 1]] = 0.25;
    }
    let (_, grad) = nll_grad(&g, &p, &MaskPlan::empty(2), None).unwrap();
    for i in 1..n {
        for l in 0..2 {
            assert_abs_diff_eq!(grad.beta[[i, l]], grad.beta[[0, l]], epsilon = 1e-15);
            assert_abs_diff_eq!(grad.gamma[[i, l]], grad.gamma[[0, l]], epsilon = 1e-15);
            assert_abs_diff_eq!(
                grad.z_logits[[i, l]],
                grad.z_logits[[0, l]],
                epsilon = 1e-15
            );
        }
        for k in 0..4 {
            assert_abs_diff_eq!(
                grad.u_logits[0][[i, k]],
                grad.u_logits[0][[0, k]],
                epsilon = 1e-15
            );
        }
    }
}

#[test]
fn sampled_network_shapes_and_saturation() {
    let mut p = MltParams::zeros(10, 2, 1, Variant::Full);
    p.beta.fill(-30.0);
    p.gamma.fill(-30.0);
    p.strength.global_raw = -800.0;
    let g = sample_network(&p, &mut ChaCha8Rng::seed_from_u64(0));
    assert_eq!((g.n_nodes(), g.n_layers(), g.total_edges()), (10, 2, 0));
}

#[test]
fn sampled_network_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = MltParams::random(15, 3, 2, Variant::Full, &mut rng);
    let a = sample_network(&p, &mut ChaCha8Rng::seed_from_u64(77));
    let b = sample_network(&p, &mut ChaCha8Rng::seed_from_u64(77));
    assert_eq!(a, b);
}

#[test]
fn param_file_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = MltParams::random(6, 3, 2, Variant::Full, &mut rng);
    let s = serde_json::to_string(&p).unwrap();
    let back: MltParams = serde_json::from_str(&s).unwrap();
    assert_eq!(back, p);
    assert_eq!(serde_json::to_string(&back).unwrap(), s);
}

#[test]
fn param_file_rejects_bad_shapes() {
    let p = MltParams::zeros(3, 2, 1, Variant::Bias);
    let mut f = ParamFile::from(p);
    f.beta.pop();
    let s = serde_json::to_string(&f).unwrap();
    assert!(serde_json::from_str::<MltParams>(&s).is_err());
}

#[test]
fn flat_view_round_trip_per_variant() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for v in [Variant::Bias, Variant::Tradeoff, Variant::Full] {
        let p = MltParams::random(4, 3, 2, v, &mut rng);
        let flat = p.flatten();
        assert_eq!(flat.len(), p.n_active());
        let mut q = p.zeros_like();
        q.assign_flat(&flat);
        assert_eq!(q.flatten(), flat);
        let expect = match v {
            Variant::Bias => 24,
            Variant::Tradeoff => 24 + 24 + 1,
            Variant::Full => 24 + 24 + 1 + 2 * 3 * 4 * 4 + 3 * 3,
        };
        assert_eq!(flat.len(), expect);
    }
}

#[test]
fn mask_plan_basics() {
    let mut m = MaskPlan::empty(2);
    assert!(m.is_empty());
    assert!(m.hide(0, 1, 1).is_err());
    m.hide(1, 0, 2).unwrap();
    m.hide(1, 0, 2).unwrap();
    assert_eq!(m.len(), 1);
    assert!(m.is_hidden(1, 0, 2) && !m.is_hidden(0, 0, 2) && !m.is_hidden(5, 0, 2));
}
