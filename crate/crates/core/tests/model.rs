mod common;

use common::random_tensor;
use rganet::engine::{Mode, Shape, Tensor};
use rganet::model::{blocked_preset, build_model, ModelConfig};
use rganet::{gam_param_count, Model32};

fn tiny(h: usize, w: usize) -> ModelConfig {
    ModelConfig {
        scales: 3,
        k: 4,
        expansion: 2,
        ess_sizes: vec![1, 1, 2],
        input_size: (h, w),
        ..ModelConfig::default()
    }
}

fn image(shape: Shape, seed: u64) -> Tensor<f32> {
    random_tensor(shape, seed, 0.0, 1.0).cast()
}

#[test]
fn default_encoder_extents() {
    let cfg = ModelConfig::default();
    let got: Vec<_> = (1..=5).map(|i| cfg.extent_at(i)).collect();
    assert_eq!(got, vec![(240, 320), (120, 160), (60, 80), (30, 40), (15, 20)]);
}

#[test]
fn head_takes_features_and_image() {
    let m = build_model::<f32>(ModelConfig::default(), 0).unwrap();
    assert_eq!(m.params.tensor("du.head.weight").unwrap().shape(), Shape::new(3, 18, 1, 1));
}

#[test]
fn same_seed_same_parameters() {
    let a = build_model::<f32>(tiny(16, 16), 7).unwrap();
    let b = build_model::<f32>(tiny(16, 16), 7).unwrap();
    let c = build_model::<f32>(tiny(16, 16), 8).unwrap();
    let bits = |m: &Model32| -> Vec<u32> { m.params.iter().flat_map(|(_, e)| e.tensor.data().iter().map(|v| v.to_bits())).collect() };
    assert_eq!(bits(&a), bits(&b));
    assert_ne!(bits(&a), bits(&c));
}

#[test]
fn output_is_normalized_and_full_size() {
    let mut m = build_model::<f32>(tiny(48, 64), 1).unwrap();
    let x = image(Shape::new(2, 3, 48, 64), 2);
    let p = m.forward(&x, Mode::Train).unwrap();
    assert_eq!(p.shape(), Shape::new(2, 3, 48, 64));
    for n in 0..2 {
        for r in 0..48 {
            for c in 0..64 {
                let s: f32 = (0..3).map(|k| p.at(n, k, r, c)).sum();
                assert!((s - 1.0).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn wrong_input_size_is_rejected() {
    let mut m = build_model::<f32>(tiny(16, 16), 1).unwrap();
    let err = m.forward(&image(Shape::new(1, 3, 16, 24), 3), Mode::Eval).unwrap_err();
    assert!(err.to_string().contains("16"));
}

#[test]
fn eval_forward_is_pure() {
    let mut m = build_model::<f32>(tiny(16, 16), 4).unwrap();
    let x = image(Shape::new(1, 3, 16, 16), 5);
    let a = m.forward(&x, Mode::Eval).unwrap();
    let b = m.forward(&x, Mode::Eval).unwrap();
    assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
}

#[test]
fn blocking_highways_changes_values_not_shape() {
    let x = image(Shape::new(1, 3, 16, 16), 6);
    let mut open = build_model::<f32>(tiny(16, 16), 9).unwrap();
    let base = open.forward(&x, Mode::Eval).unwrap();
    for m in 1..=2 {
        let cfg = tiny(16, 16).blocked_last(m);
        let mut blocked = build_model::<f32>(cfg, 9).unwrap();
        let out = blocked.forward(&x, Mode::Eval).unwrap();
        assert_eq!(out.shape(), base.shape());
        assert_ne!(out.data(), base.data());
    }
}

#[test]
fn presets_block_deepest_first() {
    assert!(blocked_preset(5, 0).is_empty());
    assert_eq!(blocked_preset(5, 1).into_iter().collect::<Vec<_>>(), vec![4]);
    assert_eq!(blocked_preset(5, 4).into_iter().collect::<Vec<_>>(), vec![1, 2, 3, 4]);
}

#[test]
fn runs_without_decoder_dense_stacks_or_decision_unit() {
    for (decoder_ess, with_du) in [(false, true), (true, false), (false, false)] {
        let cfg = ModelConfig { decoder_ess, with_du, ..tiny(16, 16) };
        let mut m = build_model::<f32>(cfg, 2).unwrap();
        let p = m.forward(&image(Shape::new(1, 3, 16, 16), 7), Mode::Eval).unwrap();
        assert_eq!(p.shape(), Shape::new(1, 3, 16, 16));
    }
}

#[test]
fn invalid_configs_list_every_violation() {
    let cfg = ModelConfig {
        ess_sizes: vec![3, 3],
        input_size: (0, 64),
        blocked_highways: [0, 5].into_iter().collect(),
        ..ModelConfig::default()
    };
    let msg = build_model::<f32>(cfg, 0).unwrap_err().to_string();
    assert!(msg.contains("ess_sizes"), "{msg}");
    assert!(msg.contains("0x64"), "{msg}");
    assert!(msg.contains("blocked highway 0"), "{msg}");
    assert!(msg.contains("blocked highway 5"), "{msg}");
}

#[test]
fn profile_parts_sum_to_totals() {
    let m = build_model::<f32>(ModelConfig::default(), 0).unwrap();
    let p = m.count_params_flops().unwrap();
    assert_eq!(p.modules.iter().map(|c| c.params).sum::<usize>(), p.params);
    assert_eq!(p.modules.iter().map(|c| c.flops).sum::<u64>(), p.flops);
    for g in &p.gams {
        assert_eq!(g.depthwise, gam_param_count(g.h, g.w, g.c, false));
        assert_eq!(g.total, gam_param_count(g.h, g.w, g.c, true));
    }
}

#[test]
fn doubling_resolution_scales_non_gam_costs() {
    let small = build_model::<f32>(tiny(32, 32), 0).unwrap().count_params_flops().unwrap();
    let big = build_model::<f32>(tiny(64, 64), 0).unwrap().count_params_flops().unwrap();
    for (a, b) in small.modules.iter().zip(&big.modules) {
        assert_eq!(a.name, b.name);
        if a.name.starts_with("vu") || a.name.starts_with("dec") {
            assert_eq!(a.params, b.params, "{}", a.name);
            assert_eq!(4 * a.flops, b.flops, "{}", a.name);
        }
    }
    let non_gam = |p: &rganet::Profile| p.params - p.gams.iter().map(|g| g.depthwise).sum::<usize>();
    assert_eq!(non_gam(&small), non_gam(&big));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.rgan");
    let cfg = ModelConfig { blocked_highways: [2].into_iter().collect(), ..tiny(16, 16) };
    let mut m = build_model::<f32>(cfg, 11).unwrap();
    let x = image(Shape::new(1, 3, 16, 16), 8);
    m.forward(&x, Mode::Train).unwrap();
    m.save(&path).unwrap();
    let mut back = Model32::load(&path).unwrap();
    assert_eq!(back.config(), m.config());
    let a = m.forward(&x, Mode::Eval).unwrap();
    let b = back.forward(&x, Mode::Eval).unwrap();
    assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.rgan");
    std::fs::write(&path, b"RGAN\x01\x00\x00\x00garbage").unwrap();
    assert!(Model32::load(&path).is_err());
    assert!(Model32::load(&dir.path().join("missing.rgan")).is_err());
}

#[test]
fn odd_extents_round_trip_to_input_size() {
    for (h, w) in [(50, 70), (33, 17), (5, 3)] {
        let cfg = ModelConfig { blocked_highways: [1].into_iter().collect(), ..tiny(h, w) };
        assert_eq!(cfg.extent_at(3), (h.div_ceil(8), w.div_ceil(8)));
        let mut m = build_model::<f32>(cfg, 2).unwrap();
        let p = m.forward(&image(Shape::new(1, 3, h, w), 3), Mode::Eval).unwrap();
        assert_eq!(p.shape(), Shape::new(1, 3, h, w));
    }
}
