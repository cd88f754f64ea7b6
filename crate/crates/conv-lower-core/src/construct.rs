//! Building deep CNNs that reproduce a shallow ReLU net exactly.
//!
//! The pipeline: [`lift_shallow`] rewrites a one-hidden-layer net as a
//! single wide-kernel convolution layer whose value at one interior read
//! pixel equals the shallow net's hidden pre-activations. [`lower_to_deep`]
//! then replaces the wide kernel by its 3x3 cascade (see
//! [`crate::decompose`]) and picks hidden biases large enough — via the
//! sound interval bounds of [`crate::bounds`] — that every inserted ReLU
//! stays linear on the input box, so the deep net's output is exactly the
//! shallow net's on that box. [`build_resnet`], [`build_preact_resnet`] and
//! [`build_mgnet`] do the same through residual blocks, two cascade layers
//! per block, with arbitrary 1x1 skip kernels.
//!
//! Constant contributions that the inserted biases and padding leak into the
//! last layer are not tracked symbolically: the construction is affine on
//! the box, so the leak is a constant tensor, recovered numerically at one
//! probe point and cross-checked at a second (failing loudly rather than
//! certifying a wrong net). Pre-activation residual nets leak the last skip
//! connection past every ReLU; that leak is an affine functional of the raw
//! input, so it is measured the same way and cancelled through two extra
//! output channels carrying its positive and negative parts.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::bounds::{conv_interval, input_box};
use crate::decompose::lower_kernel;
use crate::error::{Error, Result};
use crate::net::{
    block_branch_preact, block_inner_preact, layer_step, Architecture, BlockLayer, ConvLayer,
    DeepNet, Layer, ShallowNet,
};
use crate::rng;
use crate::tensor::{conv2d, relu, vectorize, Kernel4, PaddingMode, Tensor3};

/// Relative inflation applied to every bound-derived bias; any bias at least
/// as large as the true supremum works, so exactness never depends on this.
const BIAS_INFLATE: f64 = 1.0 + 1e-9;

/// Tolerance for the two-point cross-check of recovered affine offsets.
const CROSS_CHECK_TOL: f64 = 1e-9;

/// Fixed seed for the second probe point of the cross-check.
const CROSS_CHECK_SEED: u64 = 0x7A3D_E1F2_0C4B_9A58;

/// 0-based row (= column) of the read pixel on a d x d grid.
///
/// The read pixel's receptive field under the lifted kernel covers the whole
/// grid without ever crossing the boundary, which is what makes the lifted
/// layer's value there padding-independent.
pub fn read_position(d: usize) -> usize {
    d / 2
}

fn reject_reflect(pad: PaddingMode) -> Result<()> {
    if let PaddingMode::Reflect = pad {
        return Err(Error::UnsupportedPadding);
    }
    Ok(())
}

/// Rewrites a shallow net as one wide-kernel convolution layer.
///
/// The kernel has half-width floor(d/2); tap (s, t) of output channel n is
/// the shallow weight for pixel (r+s, r+t) with r the read position, and
/// offsets reaching outside the grid (even d only) carry zero. The layer
/// bias is the shallow bias, and the readout places each output coefficient
/// at its channel's read pixel. The resulting net equals the shallow net
/// everywhere, for every supported padding.
pub fn lift_shallow(shallow: &ShallowNet, d: usize, pad: PaddingMode) -> Result<DeepNet> {
    reject_reflect(pad)?;
    if d < 3 {
        return Err(Error::DomainTooSmall { d });
    }
    if shallow.input_dim != d * d {
        return Err(Error::DimensionMismatch { expected: d * d, got: shallow.input_dim });
    }
    let n_hidden = shallow.hidden;
    let k = d / 2;
    let r = read_position(d);
    let mut kernel = Kernel4::zeros(1, n_hidden, k);
    let kk = k as i64;
    for n in 0..n_hidden {
        for s in -kk..=kk {
            for t in -kk..=kk {
                let row = r as i64 + s;
                let col = r as i64 + t;
                if row >= 0 && row < d as i64 && col >= 0 && col < d as i64 {
                    let w = shallow.weights[n * shallow.input_dim + (row as usize) * d + col as usize];
                    kernel.set(0, n, s, t, w);
                }
            }
        }
    }
    let mut readout = vec![0.0; n_hidden * d * d];
    for n in 0..n_hidden {
        readout[n * d * d + r * d + r] = shallow.coeff[n];
    }
    Ok(DeepNet {
        arch: Architecture::Classic,
        pad,
        layers: vec![Layer::Conv(ConvLayer { kernel, bias: shallow.bias.clone() })],
        readout,
    })
}

fn inflate(magnitudes: Vec<f64>) -> Vec<f64> {
    magnitudes.into_iter().map(|m| m * BIAS_INFLATE).collect()
}

fn run_prefix(arch: Architecture, layers: &[Layer], x: &Tensor3, pad: PaddingMode) -> Result<Tensor3> {
    let mut f = x.clone();
    for layer in layers {
        f = layer_step(arch, layer, &f, x, pad)?.f_next;
    }
    Ok(f)
}

/// Recovers the constant tensor `preact(x) - reference * x` (constant on the
/// input box because the construction is affine there), cross-checking at a
/// second probe point and failing if the two disagree.
fn recover_affine_offset<F>(
    preact: F,
    reference: &Kernel4,
    d: usize,
    pad: PaddingMode,
    radius: f64,
) -> Result<Tensor3>
where
    F: Fn(&Tensor3) -> Result<Tensor3>,
{
    let zero = Tensor3::zeros(1, d);
    let b0 = preact(&zero)?.sub(&conv2d(reference, &zero, pad)?)?;
    let x1 = rng::tensor_in_box(CROSS_CHECK_SEED, 1, d, radius);
    let b1 = preact(&x1)?.sub(&conv2d(reference, &x1, pad)?)?;
    let max_dev = b0.sub(&b1)?.max_abs();
    if max_dev > CROSS_CHECK_TOL {
        return Err(Error::SoundnessFailure { max_dev });
    }
    Ok(b0)
}

fn single_wide_layer(big: &DeepNet) -> Result<&ConvLayer> {
    if big.arch != Architecture::Classic || big.layers.len() != 1 {
        return Err(Error::ShapeMismatch(String::from(
            "expected a single-layer classic network as lowering input",
        )));
    }
    match &big.layers[0] {
        Layer::Conv(c) if c.kernel.in_channels() == 1 => Ok(c),
        Layer::Conv(_) => Err(Error::ShapeMismatch(String::from(
            "lowering input must have a single input channel",
        ))),
        Layer::Block(_) => Err(Error::ShapeMismatch(String::from(
            "lowering input must be a plain convolution layer",
        ))),
    }
}

/// Lowers a single wide-kernel layer net to a deep chain of 3x3 layers that
/// computes the same function on the sup-norm box of the given radius.
///
/// Depth is the kernel half-width (floor(d/2) for lifted nets), hidden
/// widths follow the (2l+1)^2 law, hidden biases come from sound interval
/// bounds so every hidden ReLU is certified linear on the box, and the last
/// layer's bias absorbs the constant the hidden biases and padding leak
/// into it (recovered and cross-checked numerically).
pub fn lower_to_deep(big: &DeepNet, d: usize, box_radius: f64) -> Result<DeepNet> {
    reject_reflect(big.pad)?;
    if d < 3 {
        return Err(Error::DomainTooSmall { d });
    }
    if !(box_radius > 0.0 && box_radius.is_finite()) {
        return Err(Error::InvalidDimension(String::from(
            "input box radius must be positive and finite",
        )));
    }
    let wide = single_wide_layer(big)?;
    let n_out = wide.kernel.out_channels();
    if big.readout.len() != n_out * d * d {
        return Err(Error::ShapeMismatch(format!(
            "readout length {} does not match {n_out} channels on a {d}x{d} grid",
            big.readout.len()
        )));
    }
    let pad = big.pad;
    let plan = lower_kernel(&wide.kernel, d, pad)?;

    let mut layers: Vec<Layer> = Vec::with_capacity(plan.stages.len() + 1);
    let mut f_bounds = input_box(1, box_radius);
    for stage in &plan.stages {
        let iv = conv_interval(stage, &f_bounds, pad)?;
        let bias = inflate(iv.magnitude());
        f_bounds = iv.add_bias(&bias)?.relu();
        layers.push(Layer::Conv(ConvLayer { kernel: stage.clone(), bias }));
    }

    let terminal = plan.terminal.clone();
    let offset = recover_affine_offset(
        |x| {
            let f = run_prefix(Architecture::Classic, &layers, x, pad)?;
            conv2d(&terminal, &f, pad)
        },
        &wide.kernel,
        d,
        pad,
        box_radius,
    )?;
    let r = read_position(d);
    let bias: Vec<f64> = (0..n_out).map(|n| wide.bias[n] - offset.at(n, r, r)).collect();
    layers.push(Layer::Conv(ConvLayer { kernel: terminal, bias }));

    Ok(DeepNet { arch: Architecture::Classic, pad, layers, readout: big.readout.clone() })
}

/// Lift + lower in one step: the classic deep CNN reproducing `shallow` on
/// its own certified box.
pub fn build_classic(shallow: &ShallowNet, d: usize, pad: PaddingMode) -> Result<DeepNet> {
    let big = lift_shallow(shallow, d, pad)?;
    lower_to_deep(&big, d, shallow.box_radius)
}

/// Block count and channel widths of the residual constructions on a d x d
/// grid with `c_last` output channels: returns (blocks L, feature widths
/// c_0..c_L, expanded widths C_1..C_L).
pub fn residual_widths(d: usize, c_last: usize) -> Result<(usize, Vec<usize>, Vec<usize>)> {
    if d < 4 || !d.is_multiple_of(4) {
        return Err(Error::InvalidDimension(format!(
            "residual constructions need d divisible by 4, got d = {d}"
        )));
    }
    let blocks = d / 4;
    let mut widths = vec![1];
    for l in 1..blocks {
        widths.push((4 * l + 1) * (4 * l + 1));
    }
    widths.push(c_last);
    let expanded = (1..=blocks).map(|l| 2 * (4 * l - 1) * (4 * l - 1)).collect();
    Ok((blocks, widths, expanded))
}

/// 1x1 kernel with ones on the channel diagonal (up to the shorter side).
pub fn identity_skip(in_channels: usize, out_channels: usize) -> Kernel4 {
    let mut k = Kernel4::zeros(in_channels, out_channels, 0);
    for c in 0..in_channels.min(out_channels) {
        k.set(c, c, 0, 0, 1.0);
    }
    k
}

/// A = [top; identity; zeros]: stacks the cascade kernel over a channel
/// identity into an expanded block, zero-filling the rest.
fn stack_feed(top: &Kernel4, expanded: usize) -> Kernel4 {
    let cin = top.in_channels();
    let w = top.out_channels();
    debug_assert!(w + cin <= expanded);
    let mut out = Kernel4::zeros(cin, expanded, 1);
    for p in 0..cin {
        for q in 0..w {
            for s in -1..=1 {
                for t in -1..=1 {
                    out.set(p, q, s, t, top.at(p, q, s, t));
                }
            }
        }
        out.set(p, w + p, 0, 0, 1.0);
    }
    out
}

/// B = [left; -skip; zeros] over the expanded input channels: the cascade
/// kernel reads the stacked features, the (negated, center-embedded) skip
/// reads the identity copy, and the zero-fill channels stay unread.
fn concat_project(left: &Kernel4, skip: Option<&Kernel4>, expanded: usize) -> Kernel4 {
    let w = left.in_channels();
    let cout = left.out_channels();
    let mut out = Kernel4::zeros(expanded, cout, 1);
    for p in 0..w {
        for q in 0..cout {
            for s in -1..=1 {
                for t in -1..=1 {
                    out.set(p, q, s, t, left.at(p, q, s, t));
                }
            }
        }
    }
    if let Some(skip) = skip {
        debug_assert_eq!(skip.out_channels(), cout);
        debug_assert!(w + skip.in_channels() <= expanded);
        for p in 0..skip.in_channels() {
            for q in 0..cout {
                out.set(w + p, q, 0, 0, -skip.at(p, q, 0, 0));
            }
        }
    }
    out
}

fn validate_skips(skips: &[Kernel4], widths: &[usize]) -> Result<()> {
    let blocks = widths.len() - 1;
    if skips.len() != blocks {
        return Err(Error::ShapeMismatch(format!(
            "expected {blocks} skip kernels, got {}",
            skips.len()
        )));
    }
    for (l, skip) in skips.iter().enumerate() {
        if skip.half_width() != 0 {
            return Err(Error::ShapeMismatch(format!(
                "skip kernel {} must be 1x1, has half-width {}",
                l + 1,
                skip.half_width()
            )));
        }
        if skip.in_channels() != widths[l] || skip.out_channels() != widths[l + 1] {
            return Err(Error::ShapeMismatch(format!(
                "skip kernel {} must map {} -> {} channels, maps {} -> {}",
                l + 1,
                widths[l],
                widths[l + 1],
                skip.in_channels(),
                skip.out_channels()
            )));
        }
    }
    Ok(())
}

/// Shared scaffolding of the residual builders: the lowered cascade
/// kernels (two per block), validated skip kernels, and expanded widths.
struct ResidualParts {
    blocks: usize,
    expanded: Vec<usize>,
    cascade: Vec<Kernel4>,
    skips: Vec<Kernel4>,
    big_kernel: Kernel4,
}

fn residual_parts(
    shallow: &ShallowNet,
    d: usize,
    pad: PaddingMode,
    skips: Option<Vec<Kernel4>>,
    c_last: usize,
) -> Result<ResidualParts> {
    let (blocks, widths, expanded) = residual_widths(d, c_last)?;
    let big = lift_shallow(shallow, d, pad)?;
    let wide = single_wide_layer(&big)?;
    let plan = lower_kernel(&wide.kernel, d, pad)?;
    let mut cascade = plan.stages;
    cascade.push(plan.terminal);
    debug_assert_eq!(cascade.len(), 2 * blocks);
    let skips = match skips {
        Some(list) => {
            validate_skips(&list, &widths)?;
            list
        }
        None => (0..blocks).map(|l| identity_skip(widths[l], widths[l + 1])).collect(),
    };
    Ok(ResidualParts { blocks, expanded, cascade, skips, big_kernel: wide.kernel.clone() })
}

/// Residual CNN reproducing `shallow` exactly on its certified box.
///
/// Needs d divisible by 4. Each of the d/4 blocks hosts two cascade layers:
/// the inner kernel stacks the odd cascade layer over an identity copy of
/// the block input, and the outer kernel pairs the even cascade layer with
/// the negated skip, so the skip connection cancels and the block computes
/// the cascade exactly. Skips default to channel identities; any 1x1
/// kernels of the right shapes work, zero and random included.
pub fn build_resnet(
    shallow: &ShallowNet,
    d: usize,
    pad: PaddingMode,
    skips: Option<Vec<Kernel4>>,
) -> Result<DeepNet> {
    reject_reflect(pad)?;
    let parts = residual_parts(shallow, d, pad, skips, shallow.hidden)?;
    let radius = shallow.box_radius;
    let r = read_position(d);

    let mut layers: Vec<Layer> = Vec::with_capacity(parts.blocks);
    let mut f_bounds = input_box(1, radius);
    for l in 1..=parts.blocks {
        let inner = stack_feed(&parts.cascade[2 * l - 2], parts.expanded[l - 1]);
        let inner_iv = conv_interval(&inner, &f_bounds, pad)?;
        let inner_bias = inflate(inner_iv.magnitude());
        let post_iv = inner_iv.add_bias(&inner_bias)?.relu();

        let skip = parts.skips[l - 1].clone();
        let outer = concat_project(&parts.cascade[2 * l - 1], Some(&skip), parts.expanded[l - 1]);
        let mid_iv = conv_interval(&outer, &post_iv, pad)?;
        let skip_iv = conv_interval(&skip, &f_bounds, pad)?;
        let pre_iv = skip_iv.add(&mid_iv)?;

        if l < parts.blocks {
            let outer_bias = inflate(pre_iv.magnitude());
            f_bounds = pre_iv.add_bias(&outer_bias)?.relu();
            layers.push(Layer::Block(BlockLayer {
                inner,
                inner_bias,
                outer,
                outer_bias,
                skip,
                inject: None,
            }));
        } else {
            // Last block: the bias must turn the pre-activation into the
            // shallow net's, so it comes from the recovered constant leak.
            let probe_block = BlockLayer {
                inner: inner.clone(),
                inner_bias: inner_bias.clone(),
                outer: outer.clone(),
                outer_bias: vec![0.0; shallow.hidden],
                skip: skip.clone(),
                inject: None,
            };
            let offset = recover_affine_offset(
                |x| {
                    let f = run_prefix(Architecture::ResNet, &layers, x, pad)?;
                    let t = relu(&block_inner_preact(&probe_block, &f, x, pad)?);
                    conv2d(&probe_block.skip, &f, pad)?.add(&conv2d(&probe_block.outer, &t, pad)?)
                },
                &parts.big_kernel,
                d,
                pad,
                radius,
            )?;
            let outer_bias: Vec<f64> =
                (0..shallow.hidden).map(|n| shallow.bias[n] - offset.at(n, r, r)).collect();
            layers.push(Layer::Block(BlockLayer {
                inner,
                inner_bias,
                outer,
                outer_bias,
                skip,
                inject: None,
            }));
        }
    }

    let mut readout = vec![0.0; shallow.hidden * d * d];
    for n in 0..shallow.hidden {
        readout[n * d * d + r * d + r] = shallow.coeff[n];
    }
    Ok(DeepNet { arch: Architecture::ResNet, pad, layers, readout })
}

/// Pre-activation residual CNN reproducing `shallow` exactly on its box.
///
/// The last skip connection bypasses every ReLU, so its contribution to the
/// readout — an affine functional of the input on the box — survives into
/// the output. The builder measures that functional by probing the built
/// prefix, then extends the target net with two hidden units computing its
/// positive and negative parts; the last block carries the extended
/// cascade (output width `hidden + 2`) and the readout subtracts the leak
/// through the two extra channels.
pub fn build_preact_resnet(
    shallow: &ShallowNet,
    d: usize,
    pad: PaddingMode,
    skips: Option<Vec<Kernel4>>,
) -> Result<DeepNet> {
    reject_reflect(pad)?;
    let n_hidden = shallow.hidden;
    let c_last = n_hidden + 2;
    let parts = residual_parts(shallow, d, pad, skips, c_last)?;
    let radius = shallow.box_radius;
    let r = read_position(d);

    // Final readout: output coefficients at each channel's read pixel, then
    // -1 / +1 on the two leak channels (relu(x) - relu(-x) == x).
    let mut readout = vec![0.0; c_last * d * d];
    for n in 0..n_hidden {
        readout[n * d * d + r * d + r] = shallow.coeff[n];
    }
    readout[n_hidden * d * d + r * d + r] = -1.0;
    readout[(n_hidden + 1) * d * d + r * d + r] = 1.0;

    let mut layers: Vec<Layer> = Vec::with_capacity(parts.blocks);
    let mut f_bounds = input_box(1, radius);
    for l in 1..parts.blocks {
        let inner = stack_feed(&parts.cascade[2 * l - 2], parts.expanded[l - 1]);
        let inner_iv = conv_interval(&inner, &f_bounds, pad)?;
        let inner_bias = inflate(inner_iv.magnitude());
        let post_iv = inner_iv.add_bias(&inner_bias)?.relu();

        let skip = parts.skips[l - 1].clone();
        let outer = concat_project(&parts.cascade[2 * l - 1], Some(&skip), parts.expanded[l - 1]);
        let branch_iv = conv_interval(&outer, &post_iv, pad)?;
        let outer_bias = inflate(branch_iv.magnitude());
        let skip_iv = conv_interval(&skip, &f_bounds, pad)?;
        f_bounds = skip_iv.add(&branch_iv.add_bias(&outer_bias)?.relu())?;

        layers.push(Layer::Block(BlockLayer { inner, inner_bias, outer, outer_bias, skip, inject: None }));
    }

    // Measure the leak l(x) = readout . vec(skip_L * f^(L-1)(x)), affine on
    // the box: constant at 0, one slope per pixel.
    let last = parts.blocks;
    let skip_last = parts.skips[last - 1].clone();
    let leak = |x: &Tensor3| -> Result<f64> {
        let f = run_prefix(Architecture::PreAct, &layers, x, pad)?;
        let v = vectorize(&conv2d(&skip_last, &f, pad)?);
        Ok(readout.iter().zip(&v).map(|(a, b)| a * b).sum())
    };
    let leak_const = leak(&Tensor3::zeros(1, d))?;
    let mut slopes = vec![0.0; d * d];
    for i in 0..d * d {
        let mut probe = vec![0.0; d * d];
        probe[i] = radius;
        let x = Tensor3::new(1, d, d, probe)?;
        slopes[i] = (leak(&x)? - leak_const) / radius;
    }

    // Extended target: two extra hidden units carrying +/- the leak.
    let mut ext_weights = shallow.weights.clone();
    ext_weights.extend(slopes.iter().copied());
    ext_weights.extend(slopes.iter().map(|s| -s));
    let mut ext_bias = shallow.bias.clone();
    ext_bias.push(leak_const);
    ext_bias.push(-leak_const);
    let mut ext_coeff = shallow.coeff.clone();
    ext_coeff.push(-1.0);
    ext_coeff.push(1.0);
    let extended =
        ShallowNet::new(c_last, d * d, ext_weights, ext_bias.clone(), ext_coeff, radius)?;
    let ext_big = lift_shallow(&extended, d, pad)?;
    let ext_wide = single_wide_layer(&ext_big)?;
    let ext_plan = lower_kernel(&ext_wide.kernel, d, pad)?;

    // Last block: extended cascade terminal, no skip inside the branch.
    let inner = stack_feed(&parts.cascade[2 * last - 2], parts.expanded[last - 1]);
    let inner_iv = conv_interval(&inner, &f_bounds, pad)?;
    let inner_bias = inflate(inner_iv.magnitude());
    let outer = concat_project(&ext_plan.terminal, None, parts.expanded[last - 1]);
    let probe_block = BlockLayer {
        inner: inner.clone(),
        inner_bias: inner_bias.clone(),
        outer: outer.clone(),
        outer_bias: vec![0.0; c_last],
        skip: skip_last.clone(),
        inject: None,
    };
    let offset = recover_affine_offset(
        |x| {
            let f = run_prefix(Architecture::PreAct, &layers, x, pad)?;
            let t = relu(&block_inner_preact(&probe_block, &f, x, pad)?);
            conv2d(&probe_block.outer, &t, pad)
        },
        &ext_wide.kernel,
        d,
        pad,
        radius,
    )?;
    let outer_bias: Vec<f64> = (0..c_last).map(|j| ext_bias[j] - offset.at(j, r, r)).collect();
    layers.push(Layer::Block(BlockLayer {
        inner,
        inner_bias,
        outer,
        outer_bias,
        skip: skip_last,
        inject: None,
    }));

    Ok(DeepNet { arch: Architecture::PreAct, pad, layers, readout })
}

/// Injection-style CNN reproducing `shallow` exactly on its box.
///
/// Identical to the pre-activation construction except each block stores a
/// zero input-injection kernel and its inner kernel with the sign flipped;
/// the forward pass evaluates `inject * x - inner * f`, which reproduces the
/// pre-activation net bit for bit (fixed accumulation order, exact
/// negation).
pub fn build_mgnet(
    shallow: &ShallowNet,
    d: usize,
    pad: PaddingMode,
    skips: Option<Vec<Kernel4>>,
) -> Result<DeepNet> {
    let mut net = build_preact_resnet(shallow, d, pad, skips)?;
    net.arch = Architecture::MgNet;
    for layer in &mut net.layers {
        if let Layer::Block(block) = layer {
            block.inject = Some(Kernel4::zeros(1, block.inner.out_channels(), 1));
            block.inner = block.inner.negated();
        }
    }
    Ok(net)
}

/// Embeds a d x d input into a larger d_new x d_new grid (centered, floor
/// offsets), zero-filling the new border.
pub fn embed_input(x: &Tensor3, d_new: usize) -> Result<Tensor3> {
    let d = x.size();
    if d_new < d {
        return Err(Error::InvalidDimension(format!("cannot embed {d}x{d} into {d_new}x{d_new}")));
    }
    let o = (d_new - d) / 2;
    let mut out = Tensor3::zeros(x.channels(), d_new);
    for c in 0..x.channels() {
        for m in 0..d {
            for n in 0..d {
                out.set(c, m + o, n + o, x.at(c, m, n));
            }
        }
    }
    Ok(out)
}

/// Rewrites a shallow net on d x d inputs as one on d_new x d_new inputs
/// that reads only the embedded center: composing with [`embed_input`]
/// reproduces the original net exactly. Lets nets whose grid size misses an
/// architecture requirement (say, divisibility by 4) use a padded grid.
pub fn embed_shallow(shallow: &ShallowNet, d: usize, d_new: usize) -> Result<ShallowNet> {
    if shallow.input_dim != d * d {
        return Err(Error::DimensionMismatch { expected: d * d, got: shallow.input_dim });
    }
    if d_new < d {
        return Err(Error::InvalidDimension(format!("cannot embed {d}x{d} into {d_new}x{d_new}")));
    }
    let o = (d_new - d) / 2;
    let mut weights = vec![0.0; shallow.hidden * d_new * d_new];
    for n in 0..shallow.hidden {
        for m in 0..d {
            for col in 0..d {
                weights[n * d_new * d_new + (m + o) * d_new + (col + o)] =
                    shallow.weights[n * d * d + m * d + col];
            }
        }
    }
    ShallowNet::new(
        shallow.hidden,
        d_new * d_new,
        weights,
        shallow.bias.clone(),
        shallow.coeff.clone(),
        shallow.box_radius,
    )
}

/// Convenience used by tests and the harness: the branch tensor (after its
/// ReLU) of the last block of a pre-activation-style net, which carries the
/// leak channels the readout cancels.
pub fn last_block_branch(net: &DeepNet, x: &Tensor3) -> Result<Tensor3> {
    let Some(Layer::Block(block)) = net.layers.last() else {
        return Err(Error::ShapeMismatch(String::from("network does not end in a residual block")));
    };
    let f = run_prefix(net.arch, &net.layers[..net.layers.len() - 1], x, net.pad)?;
    Ok(relu(&block_branch_preact(block, &f, x, net.pad)?))
}

/// The last skip connection's contribution to the readout of a
/// pre-activation-style net: `readout . vec(skip_L * f^(L-1)(x))`.
pub fn last_skip_leak(net: &DeepNet, x: &Tensor3) -> Result<f64> {
    let Some(Layer::Block(block)) = net.layers.last() else {
        return Err(Error::ShapeMismatch(String::from("network does not end in a residual block")));
    };
    let f = run_prefix(net.arch, &net.layers[..net.layers.len() - 1], x, net.pad)?;
    let v = vectorize(&conv2d(&block.skip, &f, net.pad)?);
    Ok(net.readout.iter().zip(&v).map(|(a, b)| a * b).sum())
}

// =========================================================================
// Tests
// =========================================================================
