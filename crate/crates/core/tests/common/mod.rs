#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rganet::blocks::{Bottleneck, Ess, Vu, VuMode};
use rganet::engine::{Activation, Collapse, Mode, ParamStore, Session, Shape, Tape, Tensor, Var};
use rganet::gam::{Gam, OutMap};
use rganet::gradcheck::{check_params, numeric_gradient, relative_error, STEP};
use rganet::mask::SegMask;
use rganet::model::{build_model, ModelConfig};
use rganet::optim::{record_loss, LossConfig, LossKind};
use rganet::Result;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: Shape, seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
    let mut r = rng(seed);
    Tensor::from_fn(shape, |_, _, _, _| r.gen_range(lo..hi))
}

pub fn random_mask(h: usize, w: usize, classes: u8, seed: u64) -> SegMask {
    let mut r = rng(seed);
    SegMask::from_fn(h, w, |_, _| r.gen_range(0..classes))
}

type Build<'a> = &'a dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>;

/// `Σ w ⊙ op(inputs)` with fixed random weights, so every output element
/// carries a distinct cotangent.
fn weighted(tape: &mut Tape<f64>, out: Var) -> Result<Var> {
    let s = tape.shape(out);
    let w = if s.numel() == 1 {
        Tensor::full(s, 1.0)
    } else {
        random_tensor(s, 99, -1.0, 1.0)
    };
    let wv = tape.leaf(w);
    let m = tape.mul(out, wv)?;
    tape.sum(m)
}

fn eval_op(inputs: &[Tensor<f64>], build: Build) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars).expect("op builds");
    let l = weighted(&mut tape, out).expect("loss builds");
    tape.value(l).data()[0]
}

/// Largest relative error over all inputs between backward and central differences.
pub fn op_error(inputs: &[Tensor<f64>], build: Build) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars).expect("op builds");
    let l = weighted(&mut tape, out).expect("loss builds");
    let grads = tape.backward(l).expect("backward");
    let mut worst: f64 = 0.0;
    for (i, x) in inputs.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[i], x.shape());
        let numeric = numeric_gradient(x.data(), STEP, |probe| {
            let mut moved = inputs.to_vec();
            moved[i].data_mut().copy_from_slice(probe);
            eval_op(&moved, build)
        });
        worst = worst.max(relative_error(analytic.data(), &numeric));
    }
    worst
}

type Forward<'a> = &'a dyn Fn(&mut Session<'_, f64>, Var) -> Result<Var>;

fn module_loss(store: &mut ParamStore<f64>, x: &Tensor<f64>, mode: Mode, f: Forward) -> Result<f64> {
    let mut sess = Session::new(store, mode);
    let xv = sess.input(x.clone());
    let out = f(&mut sess, xv)?;
    let l = weighted(sess.tape_mut(), out)?;
    Ok(sess.value(l).data()[0])
}

/// Worst relative error over every trainable parameter and the input.
pub fn module_errors(store: &ParamStore<f64>, x: &Tensor<f64>, mode: Mode, f: Forward) -> Vec<(String, f64)> {
    let mut work = store.clone();
    let mut sess = Session::new(&mut work, mode);
    let xv = sess.input(x.clone());
    let out = f(&mut sess, xv).expect("forward");
    let l = weighted(sess.tape_mut(), out).expect("loss");
    let grads = sess.backward(l).expect("backward");
    let pg = sess.param_grads(&grads);
    let dx = grads.get_or_zeros(xv, x.shape());
    drop(sess);
    let mut report = check_params(store, &pg, STEP, |s| module_loss(s, x, mode, f)).expect("param check");
    let mut probe_store = store.clone();
    let numeric = numeric_gradient(x.data(), STEP, |probe| {
        let moved = Tensor::from_vec(x.shape(), probe.to_vec()).unwrap();
        module_loss(&mut probe_store, &moved, mode, f).expect("forward")
    });
    report.push(("input".into(), relative_error(dx.data(), &numeric)));
    report
}

pub fn worst(report: &[(String, f64)]) -> f64 {
    report.iter().map(|(_, e)| *e).fold(0.0, f64::max)
}

pub struct GradCase {
    pub name: &'static str,
    pub tol: f64,
    pub run: fn() -> f64,
}

fn s(n: usize, c: usize, h: usize, w: usize) -> Shape {
    Shape::new(n, c, h, w)
}

fn t(shape: Shape, seed: u64) -> Tensor<f64> {
    random_tensor(shape, seed, -1.0, 1.0)
}

pub fn engine_cases() -> Vec<GradCase> {
    vec![
        GradCase { name: "conv2d 3x3 pad 1 with bias", tol: 1e-4, run: || {
            op_error(&[t(s(2, 3, 5, 6), 1), t(s(4, 3, 3, 3), 2), t(Shape::from_dims(&[4]).unwrap(), 3)],
                &|tp, v| tp.conv2d(v[0], v[1], Some(v[2]), 1, 1))
        }},
        GradCase { name: "conv2d 3x3 stride 2", tol: 1e-4, run: || {
            op_error(&[t(s(2, 2, 7, 6), 4), t(s(3, 2, 3, 3), 5)], &|tp, v| tp.conv2d(v[0], v[1], None, 2, 1))
        }},
        GradCase { name: "conv2d 1x1", tol: 1e-4, run: || {
            op_error(&[t(s(2, 5, 3, 4), 6), t(s(3, 5, 1, 1), 7)], &|tp, v| tp.conv2d(v[0], v[1], None, 1, 0))
        }},
        GradCase { name: "deconv 2x2 stride 2", tol: 1e-4, run: || {
            op_error(&[t(s(2, 3, 3, 4), 8), t(s(3, 2, 2, 2), 9)], &|tp, v| tp.deconv2x2(v[0], v[1]))
        }},
        GradCase { name: "long conv collapsing columns", tol: 1e-4, run: || {
            op_error(&[t(s(2, 3, 4, 5), 10), t(Shape::from_dims(&[3, 5]).unwrap(), 11)],
                &|tp, v| tp.depthwise_long_conv(v[0], v[1], Collapse::Cols))
        }},
        GradCase { name: "long conv collapsing rows", tol: 1e-4, run: || {
            op_error(&[t(s(2, 3, 4, 5), 12), t(Shape::from_dims(&[3, 4]).unwrap(), 13)],
                &|tp, v| tp.depthwise_long_conv(v[0], v[1], Collapse::Rows))
        }},
        GradCase { name: "slice outer product", tol: 1e-4, run: || {
            op_error(&[t(s(2, 3, 4, 1), 14), t(s(2, 3, 1, 5), 15)], &|tp, v| tp.slice_outer_product(v[0], v[1]))
        }},
        GradCase { name: "permute", tol: 1e-4, run: || {
            op_error(&[t(s(2, 3, 4, 5), 16)], &|tp, v| tp.permute(v[0], [0, 3, 1, 2]))
        }},
        GradCase { name: "concat channels", tol: 1e-4, run: || {
            op_error(&[t(s(2, 2, 3, 3), 17), t(s(2, 3, 3, 3), 18)], &|tp, v| tp.concat_channels(&[v[0], v[1]]))
        }},
        GradCase { name: "batch norm (batch statistics)", tol: 1e-4, run: || {
            op_error(&[t(s(3, 2, 3, 4), 19), t(Shape::from_dims(&[2]).unwrap(), 20), t(Shape::from_dims(&[2]).unwrap(), 21)],
                &|tp, v| Ok(tp.batchnorm_train(v[0], v[1], v[2])?.0))
        }},
        GradCase { name: "batch norm (running statistics)", tol: 1e-4, run: || {
            op_error(&[t(s(2, 2, 3, 3), 22), t(Shape::from_dims(&[2]).unwrap(), 23), t(Shape::from_dims(&[2]).unwrap(), 24)],
                &|tp, v| tp.batchnorm_eval(v[0], v[1], v[2], &[0.1, -0.2], &[0.5, 2.0]))
        }},
        GradCase { name: "swish", tol: 1e-4, run: || {
            op_error(&[random_tensor(s(2, 3, 3, 3), 25, -4.0, 4.0)], &|tp, v| tp.activation(v[0], Activation::Swish))
        }},
        GradCase { name: "sigmoid", tol: 1e-4, run: || {
            op_error(&[random_tensor(s(2, 3, 3, 3), 26, -4.0, 4.0)], &|tp, v| tp.activation(v[0], Activation::Sigmoid))
        }},
        GradCase { name: "relu", tol: 1e-4, run: || {
            op_error(&[t(s(2, 3, 3, 3), 27)], &|tp, v| tp.activation(v[0], Activation::Relu))
        }},
        GradCase { name: "channel softmax", tol: 1e-4, run: || {
            op_error(&[random_tensor(s(2, 4, 3, 3), 28, -3.0, 3.0)], &|tp, v| tp.activation(v[0], Activation::SoftmaxChannels))
        }},
        GradCase { name: "crop", tol: 1e-4, run: || {
            op_error(&[t(s(2, 2, 5, 4), 30)], &|tp, v| tp.crop(v[0], 3, 4))
        }},
        GradCase { name: "nearest upsample 2x", tol: 1e-4, run: || {
            op_error(&[t(s(2, 3, 3, 4), 29)], &|tp, v| tp.upsample_nearest2x(v[0]))
        }},
        GradCase { name: "add", tol: 1e-4, run: || {
            op_error(&[t(s(2, 3, 3, 3), 30), t(s(2, 3, 3, 3), 31)], &|tp, v| tp.add(v[0], v[1]))
        }},
        GradCase { name: "mul", tol: 1e-4, run: || {
            op_error(&[t(s(2, 3, 3, 3), 32), t(s(2, 3, 3, 3), 33)], &|tp, v| tp.mul(v[0], v[1]))
        }},
        GradCase { name: "add scalar", tol: 1e-4, run: || {
            op_error(&[t(s(2, 3, 3, 3), 34)], &|tp, v| tp.add_scalar(v[0], 1.0))
        }},
        GradCase { name: "scale", tol: 1e-4, run: || {
            op_error(&[t(s(2, 3, 3, 3), 35)], &|tp, v| tp.scale(v[0], -2.5))
        }},
        GradCase { name: "sum", tol: 1e-4, run: || {
            op_error(&[t(s(2, 3, 3, 3), 36)], &|tp, v| tp.sum(v[0]))
        }},
    ]
}

pub fn gam_error() -> f64 {
    let gam = Gam::new("gam.check", 5, 7, 4, OutMap::Sigmoid);
    let mut store = ParamStore::new();
    gam.init(&mut store, &mut rng(40)).unwrap();
    let x = t(s(2, 4, 5, 7), 41);
    worst(&module_errors(&store, &x, Mode::Train, &|sess, xv| Ok(gam.forward(sess, xv)?.1)))
}

fn loss_error(kind: LossKind) -> f64 {
    let cfg = LossConfig { kind, ..LossConfig::default() };
    let probs = random_tensor(s(2, 3, 3, 4), 50, 0.05, 0.95);
    let masks = vec![random_mask(3, 4, 3, 51), random_mask(3, 4, 3, 52)];
    op_error(&[probs], &|tp, v| record_loss(tp, v[0], &masks, &cfg))
}

pub fn micro_model_error() -> f64 {
    let cfg = ModelConfig {
        scales: 2,
        k: 4,
        ess_sizes: vec![2, 2],
        input_size: (8, 8),
        ..ModelConfig::default()
    };
    let model = build_model::<f64>(cfg, 60).unwrap();
    let x = random_tensor(model.net.input_shape(2), 61, 0.0, 1.0);
    let masks = vec![random_mask(8, 8, 3, 62), random_mask(8, 8, 3, 63)];
    let loss_cfg = LossConfig::default();
    let net = model.net.clone();
    worst(&module_errors(&model.params, &x, Mode::Train, &|sess, xv| {
        let probs = net.forward(sess, xv)?;
        record_loss(sess.tape_mut(), probs, &masks, &loss_cfg)
    }))
}

pub fn block_cases() -> Vec<GradCase> {
    vec![
        GradCase { name: "GAM (h,w,c)=(5,7,4)", tol: 1e-4, run: gam_error },
        GradCase { name: "bottleneck", tol: 1e-4, run: || {
            let b = Bottleneck { prefix: "bnk".into(), c_in: 3, k: 3, s: 2 };
            let mut store = ParamStore::new();
            b.init(&mut store, &mut rng(42)).unwrap();
            worst(&module_errors(&store, &t(s(2, 3, 4, 4), 43), Mode::Train, &|sess, xv| b.forward(sess, xv)))
        }},
        GradCase { name: "ESS-3", tol: 1e-4, run: || {
            let e = Ess::new("ess", 3, 2, 2);
            let mut store = ParamStore::new();
            e.init(&mut store, &mut rng(44)).unwrap();
            worst(&module_errors(&store, &t(s(2, 2, 4, 3), 45), Mode::Train, &|sess, xv| e.forward(sess, xv)))
        }},
        GradCase { name: "VU nearest with highway", tol: 1e-4, run: || {
            let vu = Vu { prefix: "vu".into(), c_in: 5, k: 3, mode: VuMode::Nearest };
            let mut store = ParamStore::new();
            vu.init(&mut store, &mut rng(46)).unwrap();
            let hw = t(s(2, 2, 3, 3), 47);
            worst(&module_errors(&store, &t(s(2, 3, 3, 3), 48), Mode::Train, &|sess, xv| {
                let h = sess.input(hw.clone());
                vu.forward(sess, xv, Some(h))
            }))
        }},
        GradCase { name: "VU deconv", tol: 1e-4, run: || {
            let vu = Vu { prefix: "vu".into(), c_in: 3, k: 2, mode: VuMode::Deconv };
            let mut store = ParamStore::new();
            vu.init(&mut store, &mut rng(49)).unwrap();
            worst(&module_errors(&store, &t(s(2, 3, 3, 2), 53), Mode::Train, &|sess, xv| vu.forward(sess, xv, None)))
        }},
        GradCase { name: "focal loss", tol: 1e-5, run: || loss_error(LossKind::Focal) },
        GradCase { name: "cross-entropy loss", tol: 1e-5, run: || loss_error(LossKind::Ce) },
        GradCase { name: "micro model k=4 scales=2 8x8", tol: 1e-3, run: micro_model_error },
    ]
}
