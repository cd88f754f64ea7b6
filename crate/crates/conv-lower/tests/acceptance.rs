//! Acceptance suite: one test per release criterion, each printing a
//! single pass/fail line (visible with `--nocapture`, and automatically on
//! failure). Tolerances are pinned here, not configurable.

use std::time::{Duration, Instant};

use conv_lower::json::{
    to_canonical_json, AuditJson, CountJson, PlanJson, ProbeJson, ReportJson,
};
use conv_lower::runner::certify_parallel;
use conv_lower_core::construct::{
    build_classic, build_mgnet, build_preact_resnet, build_resnet, identity_skip, last_block_branch,
    last_skip_leak, lift_shallow, read_position, residual_widths,
};
use conv_lower_core::decompose::{index_sets_up_to, lower_kernel, Pattern};
use conv_lower_core::harness::{
    audit_plan, certify_equivalence, count_params, negative_padding_probe, param_bound,
    shallow_param_count, CertifyConfig, EquivalenceReport, Verdict,
};
use conv_lower_core::net::{DeepNet, ShallowNet};
use conv_lower_core::{conv2d, rng, Kernel4, PaddingMode, Tensor3};

/// Certifies a deep net against its shallow source: `samples` random draws
/// plus the three box-corner probes, relative tolerance, pre-activation
/// monitoring.
fn certify(net: &DeepNet, shallow: &ShallowNet, d: usize, samples: usize, seed: u64, tol: f64) -> EquivalenceReport {
    let cfg = CertifyConfig {
        channels: 1,
        d,
        box_radius: shallow.box_radius,
        samples,
        seed,
        tolerance: tol,
        pads: vec![conv_lower_core::harness::pad_label(net.pad)],
    };
    let candidate = |x: &Tensor3| net.forward(x);
    let reference = |x: &Tensor3| shallow.eval_tensor(x);
    let monitor = |x: &Tensor3| net.forward_traced(x).map(|t| t.min_certified_preact);
    certify_parallel(&candidate, &reference, Some(&monitor), &cfg).unwrap()
}

#[test]
fn criterion_1_kernel_lowering_exactness() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for k in [2usize, 3, 4, 5] {
        for d in [k + 1, k + 3, 16] {
            for (p, pad) in [
                PaddingMode::Constant(0.0),
                PaddingMode::Constant(0.7),
                PaddingMode::Periodic,
            ]
            .into_iter()
            .enumerate()
            {
                for m in [1usize, 3] {
                    let stream = rng::derive(0xC1, (((k * 37 + d) * 5 + p) * 7 + m) as u64);
                    let kernel = rng::kernel_uniform(rng::derive(stream, 1), 1, m, k, 1.0);
                    let plan = lower_kernel(&kernel, d, pad).unwrap();
                    for i in 0..20u64 {
                        let x = rng::tensor_in_box(rng::derive(stream, 2 + i), 1, d, 1.0);
                        let got = plan.apply(&x, pad).unwrap();
                        let want = conv2d(&kernel, &x, pad).unwrap();
                        worst = worst.max(got.sub(&want).unwrap().max_abs());
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = worst <= 1e-12 && elapsed < Duration::from_secs(30);
    println!(
        "criterion 1 (kernel lowering exactness): {}  max_abs_err={worst:.3e} elapsed={elapsed:.2?}",
        verdict(ok)
    );
    assert!(ok, "max_abs_err={worst:.3e} elapsed={elapsed:?}");
}

#[test]
fn criterion_2_channel_count_law() {
    // Index-set law and census recursion, exact integer arithmetic.
    let levels = index_sets_up_to(6);
    let mut prev = (0usize, 0usize); // (corners, boundaries) at n - 1
    let mut ok = true;
    for (idx, level) in levels.iter().enumerate() {
        let n = idx + 1;
        ok &= level.len() == (2 * n + 1) * (2 * n + 1);
        let corners = level.iter().filter(|s| s.pattern == Pattern::Corner).count();
        let bounds = level.iter().filter(|s| s.pattern == Pattern::Boundary).count();
        let fulls = level.iter().filter(|s| s.pattern == Pattern::Full).count();
        ok &= (corners, bounds, fulls) == (4 * n * n, 4 * n, 1);
        ok &= corners == prev.0 + 2 * prev.1 + 4;
        ok &= bounds == prev.1 + 4;
        prev = (corners, bounds);
    }

    // Every generated plan realizes the law: stage n emits exactly
    // (2n+1)^2 channels, each a verified one-hot (checked by the audit).
    for k in 2..=5usize {
        let kernel = rng::kernel_uniform(rng::derive(0xC2, k as u64), 1, 2, k, 1.0);
        let plan = lower_kernel(&kernel, k + 2, PaddingMode::Periodic).unwrap();
        let audit = audit_plan(&plan).unwrap();
        for (idx, stage) in plan.stages.iter().enumerate() {
            let n = idx + 1;
            ok &= stage.out_channels() == (2 * n + 1) * (2 * n + 1);
        }
        for (idx, &(c, b, f)) in audit.census.iter().enumerate() {
            let n = idx + 1;
            ok &= (c, b, f) == (4 * n * n, 4 * n, 1);
        }
    }
    println!("criterion 2 (channel-count law): {}", verdict(ok));
    assert!(ok);
}

#[test]
fn criterion_3_shallow_big_kernel_identity() {
    let mut worst: f64 = 0.0;
    let mut identical = true;
    for d in [7usize, 8] {
        let shallow = rng::shallow_uniform(rng::derive(0xC3, d as u64), 10, d, 1.0);
        let nets: Vec<DeepNet> = [
            PaddingMode::Constant(0.0),
            PaddingMode::Constant(-3.5),
            PaddingMode::Periodic,
        ]
        .into_iter()
        .map(|pad| lift_shallow(&shallow, d, pad).unwrap())
        .collect();
        for i in 0..200u64 {
            let x = rng::tensor_in_box(rng::derive(0xC3_00 + d as u64, i), 1, d, 1.0);
            let want = shallow.eval_tensor(&x).unwrap();
            let outs: Vec<f64> = nets.iter().map(|n| n.forward(&x).unwrap()).collect();
            worst = worst.max((outs[0] - want).abs() / (1.0 + want.abs()));
            identical &= outs[0].to_bits() == outs[1].to_bits();
            identical &= outs[0].to_bits() == outs[2].to_bits();
        }
    }
    let ok = worst <= 1e-10 && identical;
    println!(
        "criterion 3 (shallow-to-big-kernel identity): {}  max_rel_err={worst:.3e} pad_invariant={identical}",
        verdict(ok)
    );
    assert!(ok, "max_rel_err={worst:.3e} pad_invariant={identical}");
}

#[test]
fn criterion_4_deep_cnn_identity() {
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for d in [7usize, 8] {
        for n in [5usize, 10] {
            let shallow =
                rng::shallow_uniform(rng::derive(0xC4, (d * 100 + n) as u64), n, d, 1.0);
            for pad in [PaddingMode::Constant(0.0), PaddingMode::Periodic] {
                let net = build_classic(&shallow, d, pad).unwrap();
                let k = d / 2;
                ok &= net.depth() == k;
                let widths = net.width_schedule();
                for (l, &w) in widths.iter().take(k).enumerate() {
                    ok &= w == (2 * l + 1) * (2 * l + 1);
                }
                ok &= widths[k] == n;
                let report =
                    certify(&net, &shallow, d, 200, rng::derive(0xC4_01, (d * 100 + n) as u64), 1e-8);
                ok &= report.verdict == Verdict::Pass && report.linearity_violations == 0;
                worst = worst.max(report.max_rel_err);
            }
        }
    }
    println!(
        "criterion 4 (deep CNN identity): {}  max_rel_err={worst:.3e}",
        verdict(ok)
    );
    assert!(ok, "max_rel_err={worst:.3e}");
}

#[derive(Clone, Copy)]
enum SkipKind {
    Zero,
    Identity,
    Random,
}

fn make_skips(kind: SkipKind, d: usize, c_last: usize, seed: u64) -> Vec<Kernel4> {
    let (_, widths, _) = residual_widths(d, c_last).unwrap();
    widths
        .windows(2)
        .enumerate()
        .map(|(l, w)| match kind {
            SkipKind::Zero => Kernel4::zeros(w[0], w[1], 0),
            SkipKind::Identity => identity_skip(w[0], w[1]),
            SkipKind::Random => {
                rng::kernel_uniform(rng::derive(seed, l as u64), w[0], w[1], 0, 1.0)
            }
        })
        .collect()
}

#[test]
fn criterion_5_residual_identities() {
    let d = 8usize;
    let r = read_position(d);
    let mut ok = true;
    let mut worst: f64 = 0.0;
    let mut worst_aux: f64 = 0.0;
    for n in [3usize, 4] {
        let shallow = rng::shallow_uniform(rng::derive(0xC5, n as u64), n, d, 1.0);
        for (kind_id, kind) in
            [SkipKind::Zero, SkipKind::Identity, SkipKind::Random].into_iter().enumerate()
        {
            let tag = (n * 10 + kind_id) as u64;

            let skips = make_skips(kind, d, n, rng::derive(0xC5_01, tag));
            let resnet = build_resnet(&shallow, d, PaddingMode::Constant(0.0), Some(skips)).unwrap();
            let report = certify(&resnet, &shallow, d, 200, rng::derive(0xC5_02, tag), 1e-8);
            ok &= report.verdict == Verdict::Pass;
            worst = worst.max(report.max_rel_err);

            let skips = make_skips(kind, d, n + 2, rng::derive(0xC5_03, tag));
            let preact =
                build_preact_resnet(&shallow, d, PaddingMode::Constant(0.0), Some(skips.clone()))
                    .unwrap();
            ok &= preact.output_channels() == n + 2;
            let report = certify(&preact, &shallow, d, 200, rng::derive(0xC5_04, tag), 1e-8);
            ok &= report.verdict == Verdict::Pass;
            worst = worst.max(report.max_rel_err);

            // Auxiliary-channel identity: aux+ - aux- reproduces the final
            // skip's affine leak at the read pixel.
            for i in 0..10u64 {
                let x = rng::tensor_in_box(rng::derive(0xC5_05, tag * 100 + i), 1, d, 1.0);
                let branch = last_block_branch(&preact, &x).unwrap();
                let aux = branch.at(n, r, r) - branch.at(n + 1, r, r);
                let leak = last_skip_leak(&preact, &x).unwrap();
                worst_aux = worst_aux.max((aux - leak).abs());
            }
            ok &= worst_aux <= 1e-9;

            let mgnet =
                build_mgnet(&shallow, d, PaddingMode::Constant(0.0), Some(skips)).unwrap();
            let report = certify(&mgnet, &shallow, d, 200, rng::derive(0xC5_06, tag), 1e-8);
            ok &= report.verdict == Verdict::Pass;
            worst = worst.max(report.max_rel_err);

            // The injection net is the pre-activation net rearranged:
            // outputs agree bit for bit.
            for i in 0..5u64 {
                let x = rng::tensor_in_box(rng::derive(0xC5_07, tag * 100 + i), 1, d, 1.0);
                ok &= preact.forward(&x).unwrap().to_bits() == mgnet.forward(&x).unwrap().to_bits();
            }
        }
    }
    println!(
        "criterion 5 (residual identities): {}  max_rel_err={worst:.3e} max_aux_err={worst_aux:.3e}",
        verdict(ok)
    );
    assert!(ok, "max_rel_err={worst:.3e} max_aux_err={worst_aux:.3e}");
}

#[test]
fn criterion_6_parameter_accounting() {
    let mut ok = true;
    // Classic nets from criterion 4's (d, N) grid.
    for d in [7usize, 8] {
        for n in [5usize, 10] {
            let shallow = rng::shallow_uniform(rng::derive(0xC6, (d * 100 + n) as u64), n, d, 1.0);
            let net = build_classic(&shallow, d, PaddingMode::Periodic).unwrap();
            let count = count_params(&net, d, n);
            ok &= count.shallow_count == (n * (d * d + 2)) as u64;
            ok &= count.shallow_count == shallow_param_count(n, d);
            ok &= count.deep_count <= count.bound;
            ok &= count.bound == param_bound(d, n);
        }
    }
    // Residual nets from criterion 5's grid.
    let d = 8usize;
    for n in [3usize, 4] {
        let shallow = rng::shallow_uniform(rng::derive(0xC6_01, n as u64), n, d, 1.0);
        let nets = [
            build_resnet(&shallow, d, PaddingMode::Periodic, None).unwrap(),
            build_preact_resnet(&shallow, d, PaddingMode::Periodic, None).unwrap(),
            build_mgnet(&shallow, d, PaddingMode::Periodic, None).unwrap(),
        ];
        for net in &nets {
            let count = count_params(net, d, n);
            ok &= count.shallow_count == (n * (d * d + 2)) as u64;
            ok &= count.deep_count <= count.bound;
        }
    }
    println!("criterion 6 (parameter accounting): {}", verdict(ok));
    assert!(ok);
}

#[test]
fn criterion_7_negative_padding_control() {
    let kernel = rng::kernel_uniform(rng::derive(0xC7, 1), 1, 1, 2, 1.0);
    let probe = negative_padding_probe(&kernel, 6, rng::derive(0xC7, 2), 20).unwrap();
    let ok = probe.border_max_err > 1e-6
        && probe.periodic_max_err <= 1e-12
        && probe.interior_max_err <= 1e-12
        && probe.rejects_reflect;
    println!(
        "criterion 7 (negative padding control): {}  border_err={:.3e} interior_err={:.3e} periodic_err={:.3e}",
        verdict(ok),
        probe.border_max_err,
        probe.interior_max_err,
        probe.periodic_max_err
    );
    assert!(ok, "{probe:?}");
}

#[test]
fn criterion_8_byte_identical_reports() {
    let mut ok = true;

    // Equivalence report: serial, parallel, and a rerun all serialize to
    // the same bytes.
    let d = 6usize;
    let shallow = rng::shallow_uniform(rng::derive(0xC8, 1), 4, d, 1.0);
    let net = build_classic(&shallow, d, PaddingMode::Periodic).unwrap();
    let cfg = CertifyConfig {
        channels: 1,
        d,
        box_radius: 1.0,
        samples: 50,
        seed: rng::derive(0xC8, 2),
        tolerance: 1e-8,
        pads: vec!["periodic".to_string()],
    };
    let candidate = |x: &Tensor3| net.forward(x);
    let reference = |x: &Tensor3| shallow.eval_tensor(x);
    let monitor = |x: &Tensor3| net.forward_traced(x).map(|t| t.min_certified_preact);
    let serial = certify_equivalence(&candidate, &reference, Some(&monitor), &cfg).unwrap();
    let parallel = certify_parallel(&candidate, &reference, Some(&monitor), &cfg).unwrap();
    let rerun = certify_parallel(&candidate, &reference, Some(&monitor), &cfg).unwrap();
    let bytes = to_canonical_json(&ReportJson::from_report(&serial));
    ok &= bytes == to_canonical_json(&ReportJson::from_report(&parallel));
    ok &= bytes == to_canonical_json(&ReportJson::from_report(&rerun));

    // Plan and audit artifacts.
    let kernel = rng::kernel_uniform(rng::derive(0xC8, 3), 1, 2, 3, 1.0);
    let plan_a = lower_kernel(&kernel, 8, PaddingMode::Periodic).unwrap();
    let plan_b = lower_kernel(&kernel, 8, PaddingMode::Periodic).unwrap();
    ok &= to_canonical_json(&PlanJson::from_plan(&plan_a))
        == to_canonical_json(&PlanJson::from_plan(&plan_b));
    ok &= to_canonical_json(&AuditJson::from_audit(&audit_plan(&plan_a).unwrap()))
        == to_canonical_json(&AuditJson::from_audit(&audit_plan(&plan_b).unwrap()));

    // Probe and count artifacts.
    let probe_kernel = rng::kernel_uniform(rng::derive(0xC8, 4), 1, 1, 2, 1.0);
    let probe_a = negative_padding_probe(&probe_kernel, 6, 5, 20).unwrap();
    let probe_b = negative_padding_probe(&probe_kernel, 6, 5, 20).unwrap();
    ok &= to_canonical_json(&ProbeJson::from_probe(&probe_a))
        == to_canonical_json(&ProbeJson::from_probe(&probe_b));
    let count_a = count_params(&net, d, 4);
    let count_b = count_params(&net, d, 4);
    ok &= to_canonical_json(&CountJson::from_count(&count_a))
        == to_canonical_json(&CountJson::from_count(&count_b));

    println!("criterion 8 (byte-identical reports): {}", verdict(ok));
    assert!(ok);
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}
