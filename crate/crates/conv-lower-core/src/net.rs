//! Network containers and forward evaluation.
//!
//! Two network forms live here:
//!
//! * [`ShallowNet`] — a one-hidden-layer ReLU net on vectorized inputs,
//!   the object every deep construction must reproduce exactly;
//! * [`DeepNet`] — a CNN in one of four shapes ([`Architecture`]): a classic
//!   chain of convolution layers, a residual net, a pre-activation residual
//!   net, or an injection-style net whose blocks also see the raw input.
//!
//! Residual blocks keep their pieces by role: `inner` expands features and
//! is followed by ReLU, `outer` projects back down, `skip` is the 1x1
//! bypass, and `inject` (when present) taps the network input. The exact
//! wiring per architecture is documented on [`DeepNet::forward_traced`].
//!
//! Forward evaluation sticks to the fixed accumulation order of
//! [`crate::tensor::conv2d`] end to end, so repeated runs are bit-identical.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{add_bias, conv2d, relu, vectorize, Kernel4, PaddingMode, Tensor3};

/// The four network shapes a [`DeepNet`] can take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    /// Plain chain: convolution, bias, ReLU, repeat.
    Classic,
    /// Residual blocks with the skip inside the final ReLU.
    ResNet,
    /// Pre-activation residual blocks: the skip bypasses every ReLU.
    PreAct,
    /// Pre-activation blocks that additionally inject the raw input into
    /// each block (stored with the inner kernel's sign flipped).
    MgNet,
}

impl Architecture {
    /// Stable lowercase name used in file formats and reports.
    pub fn name(&self) -> &'static str {
        match self {
            Architecture::Classic => "classic",
            Architecture::ResNet => "resnet",
            Architecture::PreAct => "preact",
            Architecture::MgNet => "mgnet",
        }
    }

    pub fn parse(name: &str) -> Option<Architecture> {
        match name {
            "classic" => Some(Architecture::Classic),
            "resnet" => Some(Architecture::ResNet),
            "preact" => Some(Architecture::PreAct),
            "mgnet" => Some(Architecture::MgNet),
            _ => None,
        }
    }
}

/// One plain convolution layer: kernel, then per-channel bias, then ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub kernel: Kernel4,
    pub bias: Vec<f64>,
}

/// One residual block; see [`DeepNet::forward_traced`] for the wiring.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockLayer {
    /// Expanding 3x3 convolution, followed by ReLU.
    pub inner: Kernel4,
    pub inner_bias: Vec<f64>,
    /// Projecting 3x3 convolution applied to the ReLU output.
    pub outer: Kernel4,
    pub outer_bias: Vec<f64>,
    /// 1x1 bypass from the block input.
    pub skip: Kernel4,
    /// Input-injection kernel; present only in injection-style nets.
    pub inject: Option<Kernel4>,
}

/// A network layer: either a plain convolution or a residual block.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(ConvLayer),
    Block(BlockLayer),
}

impl Layer {
    /// Channels this layer consumes.
    pub fn in_channels(&self) -> usize {
        match self {
            Layer::Conv(c) => c.kernel.in_channels(),
            Layer::Block(b) => b.inner.in_channels(),
        }
    }

    /// Channels this layer produces.
    pub fn out_channels(&self) -> usize {
        match self {
            Layer::Conv(c) => c.kernel.out_channels(),
            Layer::Block(b) => b.outer.out_channels(),
        }
    }
}

/// A one-hidden-layer ReLU network on vectorized d x d inputs:
/// `sum_n coeff[n] * relu(weights[n] . v + bias[n])`, certified on the
/// sup-norm box of radius `box_radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShallowNet {
    pub hidden: usize,
    pub input_dim: usize,
    /// `hidden` x `input_dim`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub coeff: Vec<f64>,
    pub box_radius: f64,
}

impl ShallowNet {
    pub fn new(
        hidden: usize,
        input_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        coeff: Vec<f64>,
        box_radius: f64,
    ) -> Result<Self> {
        if weights.len() != hidden * input_dim {
            return Err(Error::DataLength { expected: hidden * input_dim, got: weights.len() });
        }
        if bias.len() != hidden {
            return Err(Error::DataLength { expected: hidden, got: bias.len() });
        }
        if coeff.len() != hidden {
            return Err(Error::DataLength { expected: hidden, got: coeff.len() });
        }
        if !(box_radius > 0.0 && box_radius.is_finite()) {
            return Err(Error::InvalidDimension(String::from(
                "input box radius must be positive and finite",
            )));
        }
        Ok(ShallowNet { hidden, input_dim, weights, bias, coeff, box_radius })
    }

    /// Side length of the grid the inputs vectorize, if `input_dim` is a
    /// perfect square.
    pub fn grid_size(&self) -> Result<usize> {
        let d = self.input_dim.isqrt();
        if d * d == self.input_dim {
            Ok(d)
        } else {
            Err(Error::DimensionMismatch { expected: self.input_dim, got: d * d })
        }
    }

    /// Evaluates the network on a flat input vector.
    pub fn eval(&self, v: &[f64]) -> Result<f64> {
        if v.len() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, got: v.len() });
        }
        let mut out = 0.0;
        for n in 0..self.hidden {
            let row = &self.weights[n * self.input_dim..(n + 1) * self.input_dim];
            let mut pre = 0.0;
            for (w, x) in row.iter().zip(v) {
                pre += w * x;
            }
            pre += self.bias[n];
            out += self.coeff[n] * pre.max(0.0);
        }
        Ok(out)
    }

    /// Evaluates the network on a single-channel grid input.
    pub fn eval_tensor(&self, x: &Tensor3) -> Result<f64> {
        if x.channels() != 1 {
            return Err(Error::ChannelMismatch { expected: 1, got: x.channels() });
        }
        self.eval(&vectorize(x))
    }
}

/// Output of [`DeepNet::forward_traced`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trace {
    pub output: f64,
    /// Smallest pre-activation among those the construction certifies to be
    /// nonnegative on the input box (+inf when nothing is certified). The
    /// final nonlinearity of each architecture is genuine and excluded.
    pub min_certified_preact: f64,
}

/// A deep CNN with a linear readout over the vectorized last feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepNet {
    pub arch: Architecture,
    pub pad: PaddingMode,
    pub layers: Vec<Layer>,
    pub readout: Vec<f64>,
}

/// What one layer produced: the next feature map plus the pre-activation
/// tensors feeding each ReLU in the layer.
pub(crate) struct StepOut {
    pub f_next: Tensor3,
    pub inner_preact: Option<Tensor3>,
    pub outer_preact: Tensor3,
}

/// Pre-activation of a block's inner ReLU. For injection-style blocks this
/// is `inject * x - (-inner) * f + bias` evaluated as written, which agrees
/// bit for bit with `inner * f + bias` when `inject` is zero and `inner`
/// carries the flipped sign.
pub(crate) fn block_inner_preact(
    block: &BlockLayer,
    f: &Tensor3,
    x_input: &Tensor3,
    pad: PaddingMode,
) -> Result<Tensor3> {
    let conv = conv2d(&block.inner, f, pad)?;
    match &block.inject {
        None => add_bias(&conv, &block.inner_bias),
        Some(theta) => {
            let inj = conv2d(theta, x_input, pad)?;
            if block.inner_bias.len() != conv.channels() {
                return Err(Error::ChannelMismatch {
                    expected: conv.channels(),
                    got: block.inner_bias.len(),
                });
            }
            let d = conv.size();
            let mut out = Tensor3::zeros(conv.channels(), d);
            for q in 0..conv.channels() {
                for m in 0..d {
                    for n in 0..d {
                        let v = (inj.at(q, m, n) - conv.at(q, m, n)) + block.inner_bias[q];
                        out.set(q, m, n, v);
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Branch pre-activation of a pre-activation-style block:
/// `outer * relu(inner preact) + outer_bias`.
pub(crate) fn block_branch_preact(
    block: &BlockLayer,
    f: &Tensor3,
    x_input: &Tensor3,
    pad: PaddingMode,
) -> Result<Tensor3> {
    let t = relu(&block_inner_preact(block, f, x_input, pad)?);
    add_bias(&conv2d(&block.outer, &t, pad)?, &block.outer_bias)
}

fn step_conv(layer: &ConvLayer, f: &Tensor3, pad: PaddingMode) -> Result<StepOut> {
    let pre = add_bias(&conv2d(&layer.kernel, f, pad)?, &layer.bias)?;
    Ok(StepOut { f_next: relu(&pre), inner_preact: None, outer_preact: pre })
}

fn step_block(
    arch: Architecture,
    block: &BlockLayer,
    f: &Tensor3,
    x_input: &Tensor3,
    pad: PaddingMode,
) -> Result<StepOut> {
    let inner_pre = block_inner_preact(block, f, x_input, pad)?;
    let t = relu(&inner_pre);
    let skip_out = conv2d(&block.skip, f, pad)?;
    match arch {
        Architecture::ResNet => {
            // skip + projection inside the final ReLU.
            let mid = conv2d(&block.outer, &t, pad)?;
            let pre = add_bias(&skip_out.add(&mid)?, &block.outer_bias)?;
            Ok(StepOut { f_next: relu(&pre), inner_preact: Some(inner_pre), outer_preact: pre })
        }
        Architecture::PreAct | Architecture::MgNet => {
            // skip bypasses both ReLUs.
            let branch_pre = add_bias(&conv2d(&block.outer, &t, pad)?, &block.outer_bias)?;
            let f_next = skip_out.add(&relu(&branch_pre))?;
            Ok(StepOut { f_next, inner_preact: Some(inner_pre), outer_preact: branch_pre })
        }
        Architecture::Classic => Err(Error::ShapeMismatch(String::from(
            "classic networks cannot contain residual blocks",
        ))),
    }
}

/// Applies one layer. `x_input` is the raw network input, which
/// injection-style blocks read alongside the running features.
pub(crate) fn layer_step(
    arch: Architecture,
    layer: &Layer,
    f: &Tensor3,
    x_input: &Tensor3,
    pad: PaddingMode,
) -> Result<StepOut> {
    match (arch, layer) {
        (Architecture::Classic, Layer::Conv(c)) => step_conv(c, f, pad),
        (Architecture::Classic, Layer::Block(_)) => Err(Error::ShapeMismatch(String::from(
            "classic networks cannot contain residual blocks",
        ))),
        (_, Layer::Conv(_)) => Err(Error::ShapeMismatch(String::from(
            "residual networks cannot contain plain convolution layers",
        ))),
        (_, Layer::Block(b)) => step_block(arch, b, f, x_input, pad),
    }
}

impl DeepNet {
    /// Number of layers (blocks count as one).
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Channel widths through the net: input channels, then each layer's
    /// output channels.
    pub fn width_schedule(&self) -> Vec<usize> {
        let mut widths = Vec::with_capacity(self.layers.len() + 1);
        widths.push(self.input_channels());
        for layer in &self.layers {
            widths.push(layer.out_channels());
        }
        widths
    }

    pub fn input_channels(&self) -> usize {
        self.layers.first().map_or(0, Layer::in_channels)
    }

    pub fn output_channels(&self) -> usize {
        self.layers.last().map_or(0, Layer::out_channels)
    }

    fn check_input(&self, x: &Tensor3) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::ShapeMismatch(String::from("network has no layers")));
        }
        if x.channels() != self.input_channels() {
            return Err(Error::ChannelMismatch {
                expected: self.input_channels(),
                got: x.channels(),
            });
        }
        let d = x.size();
        let expected = self.output_channels() * d * d;
        if self.readout.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "readout length {} does not match {} output channels on a {d}x{d} grid (need {expected})",
                self.readout.len(),
                self.output_channels(),
            )));
        }
        Ok(())
    }

    /// Features after the first `upto` layers (`upto = 0` returns the input).
    pub fn hidden_features(&self, x: &Tensor3, upto: usize) -> Result<Tensor3> {
        self.check_input(x)?;
        let mut f = x.clone();
        for layer in self.layers.iter().take(upto) {
            f = layer_step(self.arch, layer, &f, x, self.pad)?.f_next;
        }
        Ok(f)
    }

    /// Scalar forward pass.
    pub fn forward(&self, x: &Tensor3) -> Result<f64> {
        Ok(self.forward_traced(x)?.output)
    }

    /// Forward pass that also reports the smallest certified pre-activation.
    ///
    /// Layer wiring per architecture, writing s for ReLU:
    ///
    /// * classic: `f <- s(kernel * f + bias)`
    /// * resnet:  `f <- s(skip * f + outer * s(inner * f + a) + b)`
    /// * preact:  `f <- skip * f + s(outer * s(inner * f + a) + b)`
    /// * mgnet:   `f <- skip * f + s(outer * s(inject * x - inner' * f + a) + b)`
    ///   where `inner'` is stored sign-flipped so this equals the preact form.
    ///
    /// Certified pre-activations are every inner ReLU input and every
    /// non-final outer ReLU input; the final layer's outer ReLU is the
    /// network's genuine nonlinearity.
    pub fn forward_traced(&self, x: &Tensor3) -> Result<Trace> {
        self.check_input(x)?;
        let mut f = x.clone();
        let mut min_preact = f64::INFINITY;
        let last = self.layers.len() - 1;
        for (idx, layer) in self.layers.iter().enumerate() {
            let step = layer_step(self.arch, layer, &f, x, self.pad)?;
            if let Some(inner) = &step.inner_preact {
                min_preact = min_preact.min(tensor_min(inner));
            }
            if idx != last {
                min_preact = min_preact.min(tensor_min(&step.outer_preact));
            }
            f = step.f_next;
        }
        let v = vectorize(&f);
        let mut output = 0.0;
        for (a, fv) in self.readout.iter().zip(&v) {
            output += a * fv;
        }
        Ok(Trace { output, min_certified_preact: min_preact })
    }
}

fn tensor_min(x: &Tensor3) -> f64 {
    x.data().iter().fold(f64::INFINITY, |acc, v| acc.min(*v))
}

// =========================================================================
// Tests
// =========================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn shallow_net_evaluates_by_hand() {
        // One unit: relu(1*x1 + 2*x4 - 1) scaled by 3.
        let net = ShallowNet::new(
            1,
            4,
            vec![1.0, 0.0, 0.0, 2.0],
            vec![-1.0],
            vec![3.0],
            1.0,
        )
        .unwrap();
        assert_eq!(net.eval(&[1.0, 9.0, 9.0, 0.5]).unwrap(), 3.0);
        // Pre-activation negative: output 0.
        assert_eq!(net.eval(&[0.0, 9.0, 9.0, 0.0]).unwrap(), 0.0);
        assert_eq!(net.grid_size().unwrap(), 2);
        assert!(net.eval(&[1.0]).is_err());
    }

    #[test]
    fn shallow_net_rejects_bad_shapes() {
        assert!(ShallowNet::new(2, 4, vec![0.0; 7], vec![0.0; 2], vec![0.0; 2], 1.0).is_err());
        assert!(ShallowNet::new(2, 4, vec![0.0; 8], vec![0.0; 1], vec![0.0; 2], 1.0).is_err());
        assert!(ShallowNet::new(2, 4, vec![0.0; 8], vec![0.0; 2], vec![0.0; 2], 0.0).is_err());
    }

    fn single_layer_net(kernel: Kernel4, bias: Vec<f64>, readout: Vec<f64>) -> DeepNet {
        DeepNet {
            arch: Architecture::Classic,
            pad: PaddingMode::Constant(0.0),
            layers: alloc::vec![Layer::Conv(ConvLayer { kernel, bias })],
            readout,
        }
    }

    #[test]
    fn classic_forward_matches_hand_computation() {
        // 1x1 kernel w=2, bias -1, readout picks pixel (0,0):
        // output = relu(2*x00 - 1).
        let kernel = Kernel4::new(1, 1, 0, alloc::vec![2.0]).unwrap();
        let mut readout = alloc::vec![0.0; 4];
        readout[0] = 1.0;
        let net = single_layer_net(kernel, alloc::vec![-1.0], readout);
        let x = Tensor3::new(1, 2, 2, alloc::vec![3.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!(net.forward(&x).unwrap(), 5.0);

        // Single-layer nets certify nothing: the only ReLU is genuine.
        let trace = net.forward_traced(&x).unwrap();
        assert_eq!(trace.min_certified_preact, f64::INFINITY);
    }

    #[test]
    fn forward_validates_shapes() {
        let kernel = Kernel4::zeros(1, 1, 0);
        let net = single_layer_net(kernel, alloc::vec![0.0], alloc::vec![0.0; 3]);
        let x = Tensor3::zeros(1, 2);
        assert!(matches!(net.forward(&x), Err(Error::ShapeMismatch(_))));
        let x2 = Tensor3::zeros(2, 2);
        assert!(matches!(net.forward(&x2), Err(Error::ChannelMismatch { .. })));
    }

    #[test]
    fn arch_and_layer_kinds_must_agree() {
        let block = BlockLayer {
            inner: Kernel4::zeros(1, 1, 1),
            inner_bias: alloc::vec![0.0],
            outer: Kernel4::zeros(1, 1, 1),
            outer_bias: alloc::vec![0.0],
            skip: Kernel4::zeros(1, 1, 0),
            inject: None,
        };
        let net = DeepNet {
            arch: Architecture::Classic,
            pad: PaddingMode::Periodic,
            layers: alloc::vec![Layer::Block(block)],
            readout: alloc::vec![0.0; 4],
        };
        let x = Tensor3::zeros(1, 2);
        assert!(matches!(net.forward(&x), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn resnet_block_with_zero_projection_reduces_to_skip() {
        // B = 0: f1 = relu(skip * x + b); readout sums channel.
        let mut skip = Kernel4::zeros(1, 1, 0);
        skip.set(0, 0, 0, 0, 1.0);
        let block = BlockLayer {
            inner: Kernel4::zeros(1, 4, 1),
            inner_bias: alloc::vec![0.0; 4],
            outer: Kernel4::zeros(4, 1, 1),
            outer_bias: alloc::vec![0.5],
            skip,
            inject: None,
        };
        let net = DeepNet {
            arch: Architecture::ResNet,
            pad: PaddingMode::Periodic,
            layers: alloc::vec![Layer::Block(block)],
            readout: alloc::vec![1.0; 4],
        };
        let x = Tensor3::new(1, 2, 2, alloc::vec![1.0, -2.0, 3.0, -4.0]).unwrap();
        // relu(x + 0.5) summed: 1.5 + 0 + 3.5 + 0 = 5.0.
        assert_eq!(net.forward(&x).unwrap(), 5.0);
    }

    #[test]
    fn preact_block_with_zero_branch_is_pure_skip() {
        let mut skip = Kernel4::zeros(1, 1, 0);
        skip.set(0, 0, 0, 0, 2.0);
        let block = BlockLayer {
            inner: Kernel4::zeros(1, 3, 1),
            inner_bias: alloc::vec![0.0; 3],
            outer: Kernel4::zeros(3, 1, 1),
            outer_bias: alloc::vec![0.0],
            skip,
            inject: None,
        };
        let net = DeepNet {
            arch: Architecture::PreAct,
            pad: PaddingMode::Constant(0.0),
            layers: alloc::vec![Layer::Block(block)],
            readout: alloc::vec![1.0, 0.0, 0.0, 0.0],
        };
        let x = Tensor3::new(1, 2, 2, alloc::vec![-1.5, 0.0, 0.0, 0.0]).unwrap();
        // Skip doubles the input and bypasses the ReLU entirely.
        assert_eq!(net.forward(&x).unwrap(), -3.0);
    }

    #[test]
    fn mgnet_inner_preact_matches_preact_form_bitwise() {
        // inject = 0 and inner sign-flipped must reproduce the preact
        // block's inner pre-activation exactly, bit for bit.
        let d = 5;
        let inner = rng::kernel_uniform(77, 3, 6, 1, 1.0);
        let bias: Vec<f64> = (0..6).map(|i| rng::box_at(78, i, 2.0)).collect();
        let base = BlockLayer {
            inner: inner.clone(),
            inner_bias: bias.clone(),
            outer: Kernel4::zeros(6, 3, 1),
            outer_bias: alloc::vec![0.0; 3],
            skip: Kernel4::zeros(3, 3, 0),
            inject: None,
        };
        let flipped = BlockLayer {
            inner: inner.negated(),
            inject: Some(Kernel4::zeros(1, 6, 1)),
            ..base.clone()
        };
        let f = rng::tensor_in_box(79, 3, d, 1.0);
        let x = rng::tensor_in_box(80, 1, d, 1.0);
        for pad in [PaddingMode::Constant(0.3), PaddingMode::Periodic] {
            let a = block_inner_preact(&base, &f, &x, pad).unwrap();
            let b = block_inner_preact(&flipped, &f, &x, pad).unwrap();
            assert_eq!(a.data(), b.data(), "bitwise mismatch under {pad:?}");
        }
    }
}
