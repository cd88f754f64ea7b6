//! Self-contained verification harness.
//!
//! Nothing here shares arithmetic with the code it checks:
//! [`oracle_conv`] is an independently written convolution used to vet
//! [`crate::tensor::conv2d`], [`certify_equivalence`] samples two evaluators
//! on a seeded input set and renders a machine-checkable verdict,
//! [`audit_plan`] re-derives every structural invariant of a lowered plan,
//! [`count_params`] does the parameter accounting, and
//! [`negative_padding_probe`] demonstrates — with a reflection convolution
//! implemented only here — that the lowering identity genuinely fails under
//! unsupported padding instead of quietly holding.
//!
//! Reports are pure functions of their inputs and seeds: rerunning a
//! certification reproduces the same report byte for byte.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::decompose::{pattern_of, LoweredPlan, Pattern};
use crate::error::{Error, Result};
use crate::net::{Architecture, DeepNet, Layer};
use crate::rng;
use crate::tensor::{conv2d, Kernel4, PaddingMode, Tensor3};

/// Certified pre-activations below this threshold count as linearity
/// violations: the construction promises them nonnegative on the box.
pub const PREACT_TOLERANCE: f64 = 1e-12;

/// A scalar evaluator over input tensors — the shape of everything the
/// harness certifies.
pub type EvalFn<'a> = dyn Fn(&Tensor3) -> Result<f64> + 'a;

// =========================================================================
// Independent convolution oracle
// =========================================================================

/// Reference convolution, written independently of `conv2d` but with the
/// same fixed accumulation order (input channel, then row, then column
/// offset), so agreement is exact to the last bit, not merely close.
pub fn oracle_conv(kernel: &Kernel4, x: &Tensor3, pad: PaddingMode) -> Result<Tensor3> {
    if let PaddingMode::Reflect = pad {
        return Err(Error::UnsupportedPadding);
    }
    if kernel.in_channels() != x.channels() {
        return Err(Error::ChannelMismatch { expected: kernel.in_channels(), got: x.channels() });
    }
    let d = x.size() as i64;
    let k = kernel.half_width() as i64;
    let mut out = Tensor3::zeros(kernel.out_channels(), x.size());
    for q in 0..kernel.out_channels() {
        for m in 0..d {
            for n in 0..d {
                let mut total = 0.0;
                for p in 0..kernel.in_channels() {
                    for s in -k..=k {
                        for t in -k..=k {
                            let row = m + s;
                            let col = n + t;
                            let value = match pad {
                                PaddingMode::Periodic => {
                                    x.at(p, (((row % d) + d) % d) as usize, (((col % d) + d) % d) as usize)
                                }
                                PaddingMode::Constant(a) => {
                                    if row < 0 || row >= d || col < 0 || col >= d {
                                        a
                                    } else {
                                        x.at(p, row as usize, col as usize)
                                    }
                                }
                                PaddingMode::Reflect => unreachable!("rejected above"),
                            };
                            total += kernel.at(p, q, s, t) * value;
                        }
                    }
                }
                out.set(q, m as usize, n as usize, total);
            }
        }
    }
    Ok(out)
}

/// Mirror an index into [0, d): reflection about the edges without
/// repeating the edge sample.
fn mirror(mut idx: i64, d: i64) -> usize {
    loop {
        if idx < 0 {
            idx = -idx;
        } else if idx >= d {
            idx = 2 * (d - 1) - idx;
        } else {
            return idx as usize;
        }
    }
}

/// Reflection-padded convolution. Deliberately private: it exists only so
/// the padding probe can show the lowering identity breaks under it.
fn reflect_conv(kernel: &Kernel4, x: &Tensor3) -> Result<Tensor3> {
    if kernel.in_channels() != x.channels() {
        return Err(Error::ChannelMismatch { expected: kernel.in_channels(), got: x.channels() });
    }
    let d = x.size() as i64;
    let k = kernel.half_width() as i64;
    let mut out = Tensor3::zeros(kernel.out_channels(), x.size());
    for q in 0..kernel.out_channels() {
        for m in 0..d {
            for n in 0..d {
                let mut total = 0.0;
                for p in 0..kernel.in_channels() {
                    for s in -k..=k {
                        for t in -k..=k {
                            total += kernel.at(p, q, s, t) * x.at(p, mirror(m + s, d), mirror(n + t, d));
                        }
                    }
                }
                out.set(q, m as usize, n as usize, total);
            }
        }
    }
    Ok(out)
}

// =========================================================================
// Equivalence certification
// =========================================================================

/// Outcome of a certification run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        }
    }
}

/// Stable human/machine label for a padding mode, used in reports.
pub fn pad_label(pad: PaddingMode) -> String {
    match pad {
        PaddingMode::Constant(a) => format!("constant({a})"),
        PaddingMode::Periodic => String::from("periodic"),
        PaddingMode::Reflect => String::from("reflect"),
    }
}

/// Sampling plan for [`certify_equivalence`].
#[derive(Debug, Clone, PartialEq)]
pub struct CertifyConfig {
    /// Input channels of the sampled tensors.
    pub channels: usize,
    /// Grid side length.
    pub d: usize,
    /// Sup-norm radius of the input box.
    pub box_radius: f64,
    /// Random samples to draw (three box-corner probes are always added).
    pub samples: usize,
    pub seed: u64,
    /// Verdict threshold on the relative error |f - g| / (1 + |g|).
    pub tolerance: f64,
    /// Labels of the padding modes the evaluators close over (metadata).
    pub pads: Vec<String>,
}

/// Everything a certification run measures. Deterministic in the config:
/// no wall-clock, no environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    /// Inputs evaluated: the requested samples plus three corner probes.
    pub samples: usize,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    /// Samples on which a certified pre-activation fell below
    /// -[`PREACT_TOLERANCE`] (only counted when a monitor is supplied).
    pub linearity_violations: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub pads: Vec<String>,
    pub verdict: Verdict,
}

/// Samples `candidate` against `reference` on the seeded box sample set
/// (uniform draws plus the +radius, -radius and zero corners) and passes
/// iff the worst relative error stays within tolerance and no certified
/// pre-activation goes negative.
///
/// `monitor`, when given, reports the candidate's smallest certified
/// pre-activation per input. Evaluator errors abort the run.
pub fn certify_equivalence(
    candidate: &EvalFn<'_>,
    reference: &EvalFn<'_>,
    monitor: Option<&EvalFn<'_>>,
    cfg: &CertifyConfig,
) -> Result<EquivalenceReport> {
    let total = cfg.samples + 3;
    let mut max_abs: f64 = 0.0;
    let mut max_rel: f64 = 0.0;
    let mut violations = 0usize;
    for i in 0..total {
        let x = certify_input(cfg, i);
        let (abs, rel) = sample_errors(candidate, reference, &x)?;
        max_abs = max_abs.max(abs);
        max_rel = max_rel.max(rel);
        if let Some(mon) = monitor {
            if mon(&x)? < -PREACT_TOLERANCE {
                violations += 1;
            }
        }
    }
    let verdict = if max_rel <= cfg.tolerance && violations == 0 { Verdict::Pass } else { Verdict::Fail };
    Ok(EquivalenceReport {
        samples: total,
        max_abs_err: max_abs,
        max_rel_err: max_rel,
        linearity_violations: violations,
        tolerance: cfg.tolerance,
        seed: cfg.seed,
        pads: cfg.pads.clone(),
        verdict,
    })
}

/// The i-th certification input: deterministic in (config, i). Exposed so
/// parallel drivers can evaluate the same sample set in any order.
pub fn certify_input(cfg: &CertifyConfig, i: usize) -> Tensor3 {
    if i < cfg.samples {
        rng::tensor_in_box(rng::derive(cfg.seed, i as u64), cfg.channels, cfg.d, cfg.box_radius)
    } else {
        match i - cfg.samples {
            0 => Tensor3::filled(cfg.channels, cfg.d, cfg.box_radius),
            1 => Tensor3::filled(cfg.channels, cfg.d, -cfg.box_radius),
            _ => Tensor3::zeros(cfg.channels, cfg.d),
        }
    }
}

/// Absolute and relative error of one sample; non-finite values count as
/// infinite error so they can never pass.
pub fn sample_errors(
    candidate: &EvalFn<'_>,
    reference: &EvalFn<'_>,
    x: &Tensor3,
) -> Result<(f64, f64)> {
    let a = candidate(x)?;
    let b = reference(x)?;
    let abs = (a - b).abs();
    if !abs.is_finite() {
        return Ok((f64::INFINITY, f64::INFINITY));
    }
    Ok((abs, abs / (1.0 + b.abs())))
}

// =========================================================================
// Plan audit
// =========================================================================

/// Structural summary of a lowered plan that passed audit.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanAudit {
    pub k: usize,
    /// Channel widths through the cascade, input to output.
    pub widths: Vec<usize>,
    /// Per stage: (corner, boundary, full) sequence counts.
    pub census: Vec<(usize, usize, usize)>,
}

fn audit_err(msg: String) -> Error {
    Error::AuditFailure(msg)
}

/// Re-derives every structural invariant of a lowered plan; any breach is
/// an [`Error::AuditFailure`] naming the stage and channel.
///
/// Checked: stage count and widths follow the odd-square law; every stage
/// output channel is a one-hot 3x3 shift wired to its sequence's prefix
/// channel; index sets are sorted, prefix-closed, of the right cardinality
/// and pattern census; terminal rows only populate the taps their
/// sequence's pattern allows.
pub fn audit_plan(plan: &LoweredPlan) -> Result<PlanAudit> {
    let k_eff = plan.k.max(1);
    if plan.stages.len() != k_eff - 1 {
        return Err(audit_err(format!(
            "expected {} shift stages for half-width {}, found {}",
            k_eff - 1,
            plan.k,
            plan.stages.len()
        )));
    }
    if plan.index_sets.len() != plan.stages.len() {
        return Err(audit_err(format!(
            "{} index sets for {} stages",
            plan.index_sets.len(),
            plan.stages.len()
        )));
    }

    let mut census = Vec::with_capacity(plan.index_sets.len());
    for (idx, level) in plan.index_sets.iter().enumerate() {
        let n = idx + 1;
        let expected = (2 * n + 1) * (2 * n + 1);
        if level.len() != expected {
            return Err(audit_err(format!("stage {n} carries {} sequences, expected {expected}", level.len())));
        }
        let mut counts = (0usize, 0usize, 0usize);
        for (q, seq) in level.iter().enumerate() {
            if seq.moves.len() != n {
                return Err(audit_err(format!("stage {n} channel {q} sequence has wrong length")));
            }
            if q > 0 && level[q - 1].moves >= seq.moves {
                return Err(audit_err(format!("stage {n} sequences not in sorted order at channel {q}")));
            }
            if pattern_of(&seq.moves) != seq.pattern {
                return Err(audit_err(format!("stage {n} channel {q} pattern tag does not match its moves")));
            }
            if idx > 0 {
                let prefix = &seq.moves[..n - 1];
                if !plan.index_sets[idx - 1].iter().any(|s| s.moves == prefix) {
                    return Err(audit_err(format!("stage {n} channel {q} prefix missing from stage {}", n - 1)));
                }
            }
            match seq.pattern {
                Pattern::Corner => counts.0 += 1,
                Pattern::Boundary => counts.1 += 1,
                Pattern::Full => counts.2 += 1,
            }
        }
        if counts != (4 * n * n, 4 * n, 1) {
            return Err(audit_err(format!(
                "stage {n} census {counts:?}, expected ({}, {}, 1)",
                4 * n * n,
                4 * n
            )));
        }
        census.push(counts);
    }

    for (idx, stage) in plan.stages.iter().enumerate() {
        let n = idx + 1;
        if stage.half_width() != 1 {
            return Err(audit_err(format!("stage {n} is not a 3x3 kernel")));
        }
        let expect_in = if n == 1 { 1 } else { (2 * n - 1) * (2 * n - 1) };
        let expect_out = (2 * n + 1) * (2 * n + 1);
        if stage.in_channels() != expect_in || stage.out_channels() != expect_out {
            return Err(audit_err(format!(
                "stage {n} maps {} -> {} channels, expected {expect_in} -> {expect_out}",
                stage.in_channels(),
                stage.out_channels()
            )));
        }
        let level = &plan.index_sets[idx];
        for (q, seq) in level.iter().enumerate() {
            let (mi, mj) = *seq.moves.last().expect("nonempty");
            let prefix = &seq.moves[..seq.moves.len() - 1];
            let want_p = if prefix.is_empty() {
                0
            } else {
                plan.index_sets[idx - 1]
                    .iter()
                    .position(|s| s.moves == prefix)
                    .expect("prefix closure checked above")
            };
            let mut nonzero = 0usize;
            for p in 0..stage.in_channels() {
                for s in -1..=1i64 {
                    for t in -1..=1i64 {
                        let v = stage.at(p, q, s, t);
                        if v != 0.0 {
                            nonzero += 1;
                            if v != 1.0 || p != want_p || s != mi as i64 || t != mj as i64 {
                                return Err(audit_err(format!(
                                    "stage {n} channel {q}: tap ({p}, {s}, {t}) = {v}, expected 1 at ({want_p}, {mi}, {mj})"
                                )));
                            }
                        }
                    }
                }
            }
            if nonzero != 1 {
                return Err(audit_err(format!("stage {n} channel {q} has {nonzero} taps, expected exactly 1")));
            }
        }
    }

    let expect_terminal_in = if k_eff == 1 { 1 } else { (2 * k_eff - 1) * (2 * k_eff - 1) };
    if plan.terminal.half_width() != 1 {
        return Err(audit_err(String::from("terminal projection is not a 3x3 kernel")));
    }
    if plan.terminal.in_channels() != expect_terminal_in {
        return Err(audit_err(format!(
            "terminal reads {} channels, expected {expect_terminal_in}",
            plan.terminal.in_channels()
        )));
    }
    if let Some(last) = plan.index_sets.last() {
        // Terminal rows may populate only the taps their sequence allows:
        // committed axes pin the offset to their sign.
        for (p, seq) in last.iter().enumerate() {
            let (si, sj) = {
                let i = seq.moves.iter().map(|m| m.0).find(|&v| v != 0).unwrap_or(0);
                let j = seq.moves.iter().map(|m| m.1).find(|&v| v != 0).unwrap_or(0);
                (i as i64, j as i64)
            };
            for m in 0..plan.terminal.out_channels() {
                for s in -1..=1i64 {
                    for t in -1..=1i64 {
                        let allowed = (si == 0 || s == si) && (sj == 0 || t == sj);
                        if !allowed && plan.terminal.at(p, m, s, t) != 0.0 {
                            return Err(audit_err(format!(
                                "terminal row {p} channel {m} populates forbidden tap ({s}, {t})"
                            )));
                        }
                    }
                }
            }
        }
    }

    Ok(PlanAudit { k: plan.k, widths: plan.stage_widths(), census })
}

// =========================================================================
// Parameter accounting
// =========================================================================

/// One labeled term of the parameter tally.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub label: String,
    pub count: u64,
}

/// Parameter tallies for a deep net against its shallow source.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCount {
    /// Parameters of the shallow source net: hidden * (d^2 + 2).
    pub shallow_count: u64,
    /// Parameters of the deep net (sum of `per_layer`).
    pub deep_count: u64,
    /// The guarantee 2(d^5 + hidden * d^2) the classic schedule satisfies.
    pub bound: u64,
    pub within_bound: bool,
    pub per_layer: Vec<LayerParams>,
}

/// Parameter count of the shallow source: weights, bias and output
/// coefficient per hidden unit.
pub fn shallow_param_count(hidden: usize, d: usize) -> u64 {
    (hidden * (d * d + 2)) as u64
}

/// Closed-form parameter count of the classic lowered schedule on a d x d
/// grid: dense shift stages with bias, the terminal projection counted one
/// slot per channel pair plus bias, and the readout.
pub fn classic_schedule_count(d: usize, hidden: usize) -> u64 {
    let k = (d / 2).max(1);
    let mut total: u64 = 0;
    for l in 1..k {
        let cin = ((2 * l - 1) * (2 * l - 1)) as u64;
        let cout = ((2 * l + 1) * (2 * l + 1)) as u64;
        total += 9 * cin * cout + cout;
    }
    let terminal_in = ((2 * k - 1) * (2 * k - 1)) as u64;
    total += hidden as u64 * (terminal_in + 1);
    total += (hidden * d * d) as u64;
    total
}

/// The polynomial budget the classic schedule is guaranteed to respect.
pub fn param_bound(d: usize, hidden: usize) -> u64 {
    let d = d as u64;
    let h = hidden as u64;
    2 * (d * d * d * d * d + h * d * d)
}

/// Tallies a deep net's parameters layer by layer.
///
/// Plain hidden layers count every tap plus bias; the terminal projection
/// of a classic net is counted one slot per channel pair plus bias (its
/// 3x3 blocks are sparse carriers of single routed taps), which makes the
/// classic schedule's total match [`classic_schedule_count`]. Residual
/// blocks count all their pieces densely.
pub fn count_params(net: &DeepNet, d: usize, hidden: usize) -> ParamCount {
    let mut per_layer = Vec::new();
    let last = net.layers.len().saturating_sub(1);
    for (idx, layer) in net.layers.iter().enumerate() {
        let count = match layer {
            Layer::Conv(c) => {
                let cin = c.kernel.in_channels() as u64;
                let cout = c.kernel.out_channels() as u64;
                if idx == last {
                    cin * cout + cout
                } else {
                    9 * cin * cout + cout
                }
            }
            Layer::Block(b) => {
                let cin = b.inner.in_channels() as u64;
                let mid = b.inner.out_channels() as u64;
                let cout = b.outer.out_channels() as u64;
                let mut total = 9 * cin * mid + mid + 9 * mid * cout + cout + cin * cout;
                if b.inject.is_some() {
                    total += 9 * mid;
                }
                total
            }
        };
        let kind = match layer {
            Layer::Conv(_) if idx == last && net.arch == Architecture::Classic => "terminal",
            Layer::Conv(_) => "conv",
            Layer::Block(_) => "block",
        };
        per_layer.push(LayerParams { label: format!("{kind}{}", idx + 1), count });
    }
    per_layer.push(LayerParams { label: String::from("readout"), count: net.readout.len() as u64 });
    let deep_count = per_layer.iter().map(|l| l.count).sum();
    let bound = param_bound(d, hidden);
    ParamCount {
        shallow_count: shallow_param_count(hidden, d),
        deep_count,
        bound,
        within_bound: deep_count <= bound,
        per_layer,
    }
}

// =========================================================================
// Negative padding probe
// =========================================================================

/// Evidence that the lowering identity is padding-sensitive.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddingProbeReport {
    pub d: usize,
    pub k: usize,
    /// Inputs evaluated.
    pub samples: usize,
    pub seed: u64,
    /// Worst |cascade - direct| under reflection padding on pixels within
    /// k of the boundary; a genuine, non-vanishing discrepancy.
    pub border_max_err: f64,
    /// Same on interior pixels, whose receptive fields never leave the
    /// grid: these still agree.
    pub interior_max_err: f64,
    /// Control: worst cascade error under periodic padding, where the
    /// identity holds.
    pub periodic_max_err: f64,
    /// Whether the reference convolution rejected reflect padding.
    pub rejects_reflect: bool,
}

impl PaddingProbeReport {
    /// The probe "passes" when it demonstrates what it set out to show:
    /// a real border discrepancy under reflection, agreement everywhere
    /// the identity is claimed, and rejection of the unsupported mode.
    pub fn confirms_sensitivity(&self) -> bool {
        self.border_max_err > 1e-6
            && self.interior_max_err <= 1e-12
            && self.periodic_max_err <= 1e-12
            && self.rejects_reflect
    }
}

/// Runs the lowered cascade and the direct convolution under reflection
/// padding (implemented privately here) and measures where they part ways.
///
/// Requires half-width k >= 2 so the cascade is nontrivial. The cascade's
/// intermediate maps read reflected values the wide kernel never sees, so
/// border outputs must differ; interior pixels have fully in-grid receptive
/// fields and must agree.
pub fn negative_padding_probe(
    kernel: &Kernel4,
    d: usize,
    seed: u64,
    samples: usize,
) -> Result<PaddingProbeReport> {
    if kernel.half_width() < 2 {
        return Err(Error::InvalidKernel(String::from(
            "padding probe needs a kernel of half-width at least 2",
        )));
    }
    let plan = crate::decompose::lower_kernel(kernel, d, PaddingMode::Periodic)?;
    let k = kernel.half_width();

    let rejects_reflect =
        matches!(conv2d(kernel, &Tensor3::zeros(1, d), PaddingMode::Reflect), Err(Error::UnsupportedPadding));

    let mut border_max: f64 = 0.0;
    let mut interior_max: f64 = 0.0;
    let mut periodic_max: f64 = 0.0;
    for i in 0..samples {
        let x = rng::tensor_in_box(rng::derive(seed, i as u64), 1, d, 1.0);

        let direct = reflect_conv(kernel, &x)?;
        let mut f = x.clone();
        for stage in &plan.stages {
            f = reflect_conv(stage, &f)?;
        }
        let cascade = reflect_conv(&plan.terminal, &f)?;
        for q in 0..direct.channels() {
            for m in 0..d {
                for n in 0..d {
                    let err = (cascade.at(q, m, n) - direct.at(q, m, n)).abs();
                    let edge_dist = m.min(n).min(d - 1 - m).min(d - 1 - n);
                    if edge_dist < k {
                        border_max = border_max.max(err);
                    } else {
                        interior_max = interior_max.max(err);
                    }
                }
            }
        }

        let control = plan.apply(&x, PaddingMode::Periodic)?;
        let expect = conv2d(kernel, &x, PaddingMode::Periodic)?;
        periodic_max = periodic_max.max(control.sub(&expect)?.max_abs());
    }

    Ok(PaddingProbeReport {
        d,
        k,
        samples,
        seed,
        border_max_err: border_max,
        interior_max_err: interior_max,
        periodic_max_err: periodic_max,
        rejects_reflect,
    })
}

// =========================================================================
// Tests
// =========================================================================
