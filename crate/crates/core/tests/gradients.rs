//! Backward rules against central finite differences at 64-bit.

mod common;

use common::{block_cases, engine_cases, GradCase};

fn run_named(cases: Vec<GradCase>, name: &str) {
    let case = cases.into_iter().find(|c| c.name == name).expect("case exists");
    let err = (case.run)();
    assert!(err < case.tol, "{}: relative error {err:e} above {:e}", case.name, case.tol);
}

macro_rules! grad_tests {
    ($cases:ident: $($test:ident => $name:literal),* $(,)?) => {
        $(
            #[test]
            fn $test() {
                run_named($cases(), $name);
            }
        )*
    };
}

grad_tests! { engine_cases:
    conv_bias => "conv2d 3x3 pad 1 with bias",
    conv_stride2 => "conv2d 3x3 stride 2",
    conv_pointwise => "conv2d 1x1",
    deconv => "deconv 2x2 stride 2",
    long_conv_cols => "long conv collapsing columns",
    long_conv_rows => "long conv collapsing rows",
    slice_outer => "slice outer product",
    permute => "permute",
    concat => "concat channels",
    bn_train => "batch norm (batch statistics)",
    bn_eval => "batch norm (running statistics)",
    swish => "swish",
    sigmoid => "sigmoid",
    relu => "relu",
    softmax => "channel softmax",
    crop => "crop",
    upsample => "nearest upsample 2x",
    add => "add",
    mul => "mul",
    add_scalar => "add scalar",
    scale => "scale",
    sum => "sum",
}

grad_tests! { block_cases:
    gam => "GAM (h,w,c)=(5,7,4)",
    bottleneck => "bottleneck",
    ess3 => "ESS-3",
    vu_nearest => "VU nearest with highway",
    vu_deconv => "VU deconv",
    focal => "focal loss",
    ce => "cross-entropy loss",
    micro_model => "micro model k=4 scales=2 8x8",
}

#[test]
fn every_case_has_a_test() {
    assert_eq!(engine_cases().len(), 22);
    assert_eq!(block_cases().len(), 8);
}
