mod common;

use common::{random_tensor, rng};
use proptest::prelude::*;
use rganet::engine::{Mode, ParamStore, Session, Shape, Tensor};
use rganet::gam::{gam_param_count, gam_residual, Gam, OutMap};

fn built(h: usize, w: usize, c: usize, out_map: OutMap, seed: u64) -> (Gam, ParamStore<f64>) {
    let gam = Gam::new("gam.p", h, w, c, out_map);
    let mut store = ParamStore::new();
    gam.init(&mut store, &mut rng(seed)).unwrap();
    (gam, store)
}

fn enumerated_depthwise(gam: &Gam, store: &ParamStore<f64>) -> usize {
    gam.depthwise_params().iter().map(|(n, _)| store.get(n).unwrap().numel()).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn enumerated_params_match_formula(h in 1usize..20, w in 1usize..20, c in 1usize..20) {
        let (gam, store) = built(h, w, c, OutMap::Sigmoid, 1);
        prop_assert_eq!(enumerated_depthwise(&gam, &store), gam_param_count(h, w, c, false));
        prop_assert_eq!(store.count_trainable("gam.p."), gam_param_count(h, w, c, true));
    }

    #[test]
    fn lambda_in_unit_interval(h in 1usize..6, w in 1usize..6, c in 1usize..5, seed in 0u64..1000, softmax in any::<bool>()) {
        let map = if softmax { OutMap::SoftmaxChannels } else { OutMap::Sigmoid };
        let (gam, mut store) = built(h, w, c, map, seed);
        let x = random_tensor(Shape::new(2, c, h, w), seed + 1, -10.0, 10.0);
        let mut sess = Session::new(&mut store, Mode::Train);
        let xv = sess.input(x);
        let (lambda, _) = gam.forward(&mut sess, xv).unwrap();
        let l = sess.value(lambda);
        prop_assert!(l.data().iter().all(|v| (0.0..=1.0).contains(v)));
        if softmax {
            for n in 0..2 { for r in 0..h { for q in 0..w {
                let s: f64 = (0..c).map(|k| l.at(n, k, r, q)).sum();
                prop_assert!((s - 1.0).abs() <= 1e-6);
            }}}
        }
    }

    #[test]
    fn residual_bounds(vals in proptest::collection::vec((0.0f64..5.0, 0.0f64..=1.0), 12)) {
        let x = Tensor::from_vec(Shape::new(1, 3, 2, 2), vals.iter().map(|p| p.0).collect()).unwrap();
        let lam = Tensor::from_vec(Shape::new(1, 3, 2, 2), vals.iter().map(|p| p.1).collect()).unwrap();
        let mut store = ParamStore::<f64>::new();
        let mut sess = Session::new(&mut store, Mode::Eval);
        let (xv, lv) = (sess.input(x.clone()), sess.input(lam));
        let out = gam_residual(&mut sess, xv, lv).unwrap();
        for (o, xi) in sess.value(out).data().iter().zip(x.data()) {
            prop_assert!(*o >= *xi && *o <= 2.0 * xi);
        }
    }
}

#[test]
fn residual_identities() {
    let x = random_tensor(Shape::new(1, 2, 3, 3), 5, -2.0, 2.0);
    let mut store = ParamStore::<f64>::new();
    let mut sess = Session::new(&mut store, Mode::Eval);
    let xv = sess.input(x.clone());
    let zero = sess.input(Tensor::zeros(x.shape()));
    let one = sess.input(Tensor::full(x.shape(), 1.0));
    let same = gam_residual(&mut sess, xv, zero).unwrap();
    let double = gam_residual(&mut sess, xv, one).unwrap();
    assert_eq!(sess.value(same), &x);
    assert_eq!(sess.value(double), &x.map(|v| 2.0 * v));
    let wrong = sess.input(Tensor::zeros(Shape::new(1, 2, 3, 4)));
    assert!(gam_residual(&mut sess, xv, wrong).is_err());
}

#[test]
fn fixed_shapes_match_formula() {
    for (h, w, c) in [(8, 10, 6), (15, 20, 375), (5, 7, 4), (1, 1, 1), (12, 12, 12)] {
        let (gam, store) = built(h, w, c, OutMap::Sigmoid, 2);
        assert_eq!(enumerated_depthwise(&gam, &store), 2 * h * w + c * w + h * c);
    }
}

#[test]
fn no_nan_gradients_over_random_trials() {
    let (gam, store) = built(3, 4, 2, OutMap::Sigmoid, 3);
    for trial in 0..1000u64 {
        let mut work = store.clone();
        let mut sess = Session::new(&mut work, Mode::Train);
        let x = random_tensor(Shape::new(2, 2, 3, 4), 1000 + trial, -10.0, 10.0);
        let xv = sess.input(x);
        let (_, out) = gam.forward(&mut sess, xv).unwrap();
        let l = sess.tape_mut().sum(out).unwrap();
        let g = sess.backward(l).unwrap();
        let pg = sess.param_grads(&g);
        assert!(pg.all_finite(), "trial {trial}");
        assert!(g.get(xv).unwrap().is_finite(), "trial {trial}");
    }
}

#[test]
fn cheaper_than_vanilla_convolution() {
    for h in 2..40 {
        for w in 2..40 {
            for c in [2, 3, 15, 60, 375] {
                let vanilla = h * w * w + w * h * h + c * w * w + c * h * h;
                assert!(gam_param_count(h, w, c, false) < vanilla, "({h},{w},{c})");
            }
        }
    }
}

#[test]
fn default_prefix_serializes_under_gam() {
    let (_, store) = built(2, 2, 2, OutMap::Sigmoid, 4);
    assert!(store.iter().all(|(n, _)| n.starts_with("gam.")));
}
