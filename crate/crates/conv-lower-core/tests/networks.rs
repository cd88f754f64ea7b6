//! Network-scale integration tests: deep nets built from random shallow
//! sources are certified against those sources at realistic grid sizes.

use conv_lower_core::construct::{
    build_classic, build_mgnet, build_preact_resnet, build_resnet, last_block_branch,
    last_skip_leak, read_position,
};
use conv_lower_core::harness::{
    certify_equivalence, certify_input, classic_schedule_count, count_params, pad_label,
    CertifyConfig, Verdict,
};
use conv_lower_core::net::{DeepNet, ShallowNet};
use conv_lower_core::rng;
use conv_lower_core::{Kernel4, PaddingMode};

fn random_shallow(seed: u64, hidden: usize, d: usize) -> ShallowNet {
    rng::shallow_uniform(seed, hidden, d, 1.0)
}

fn certify_against(net: &DeepNet, shallow: &ShallowNet, d: usize, samples: usize, seed: u64) {
    let cfg = CertifyConfig {
        channels: 1,
        d,
        box_radius: shallow.box_radius,
        samples,
        seed,
        tolerance: 1e-8,
        pads: vec![pad_label(net.pad)],
    };
    let candidate = |x: &conv_lower_core::Tensor3| net.forward(x);
    let reference = |x: &conv_lower_core::Tensor3| shallow.eval_tensor(x);
    let monitor =
        |x: &conv_lower_core::Tensor3| net.forward_traced(x).map(|t| t.min_certified_preact);
    let report = certify_equivalence(&candidate, &reference, Some(&monitor), &cfg).unwrap();
    assert_eq!(
        report.verdict,
        Verdict::Pass,
        "rel err {} with {} violations under {:?}",
        report.max_rel_err,
        report.linearity_violations,
        report.pads
    );
}

#[test]
fn classic_reproduces_shallow_on_7x7_grids() {
    let d = 7;
    let shallow = random_shallow(1001, 6, d);
    for pad in [PaddingMode::Constant(0.0), PaddingMode::Periodic] {
        let net = build_classic(&shallow, d, pad).unwrap();
        assert_eq!(net.depth(), d / 2);
        assert_eq!(net.width_schedule(), vec![1, 9, 25, 6]);
        certify_against(&net, &shallow, d, 40, 90_001);
    }
}

#[test]
fn classic_parameter_count_matches_schedule_and_bound() {
    for (d, hidden) in [(7, 6), (8, 10)] {
        let shallow = random_shallow(1100 + d as u64, hidden, d);
        let net = build_classic(&shallow, d, PaddingMode::Periodic).unwrap();
        let count = count_params(&net, d, hidden);
        assert_eq!(count.deep_count, classic_schedule_count(d, hidden));
        assert!(count.within_bound, "{} exceeds {}", count.deep_count, count.bound);
    }
}

#[test]
fn residual_architectures_reproduce_shallow_on_8x8_grids() {
    let d = 8;
    let shallow = random_shallow(2001, 3, d);
    let pad = PaddingMode::Constant(0.0);

    let resnet = build_resnet(&shallow, d, pad, None).unwrap();
    assert_eq!(resnet.depth(), d / 4);
    assert_eq!(resnet.output_channels(), 3);
    certify_against(&resnet, &shallow, d, 25, 90_002);

    let preact = build_preact_resnet(&shallow, d, pad, None).unwrap();
    assert_eq!(preact.output_channels(), 3 + 2);
    certify_against(&preact, &shallow, d, 25, 90_003);

    let mgnet = build_mgnet(&shallow, d, pad, None).unwrap();
    certify_against(&mgnet, &shallow, d, 25, 90_004);

    // The injection form is the pre-activation net rearranged, so the two
    // agree bit for bit, not merely within tolerance.
    let cfg = CertifyConfig {
        channels: 1,
        d,
        box_radius: 1.0,
        samples: 5,
        seed: 90_005,
        tolerance: 0.0,
        pads: vec![],
    };
    for i in 0..cfg.samples + 3 {
        let x = certify_input(&cfg, i);
        let a = preact.forward(&x).unwrap();
        let b = mgnet.forward(&x).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn preact_auxiliary_channels_cancel_the_skip_leak() {
    let d = 8;
    let hidden = 3;
    let shallow = random_shallow(2100, hidden, d);
    let net = build_preact_resnet(&shallow, d, PaddingMode::Periodic, None).unwrap();
    certify_against(&net, &shallow, d, 25, 90_006);

    // The two auxiliary channels' difference at the read pixel equals the
    // affine leak that the final skip would otherwise add to the output.
    let r = read_position(d);
    for i in 0..5u64 {
        let x = rng::tensor_in_box(rng::derive(424_242, i), 1, d, 1.0);
        let branch = last_block_branch(&net, &x).unwrap();
        let aux = branch.at(hidden, r, r) - branch.at(hidden + 1, r, r);
        let leak = last_skip_leak(&net, &x).unwrap();
        assert!((aux - leak).abs() <= 1e-9, "aux {aux} vs leak {leak}");
    }
}

#[test]
fn resnet_accepts_arbitrary_skip_projections() {
    let d = 8;
    let shallow = random_shallow(2200, 3, d);
    let pad = PaddingMode::Periodic;

    // Channel widths for d = 8: 1 -> 25 -> 3.
    let zero = vec![Kernel4::zeros(1, 25, 0), Kernel4::zeros(25, 3, 0)];
    let net = build_resnet(&shallow, d, pad, Some(zero)).unwrap();
    certify_against(&net, &shallow, d, 20, 90_007);

    let random = vec![
        rng::kernel_uniform(rng::derive(2200, 7), 1, 25, 0, 1.0),
        rng::kernel_uniform(rng::derive(2200, 8), 25, 3, 0, 1.0),
    ];
    let net = build_resnet(&shallow, d, pad, Some(random)).unwrap();
    certify_against(&net, &shallow, d, 20, 90_008);
}
