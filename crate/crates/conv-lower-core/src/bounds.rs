//! Sound per-channel interval bounds through network layers.
//!
//! The constructions in [`crate::construct`] add bias constants large enough
//! to keep every certified ReLU in its linear region on the input box. The
//! biases come from the intervals computed here: each channel carries one
//! [lo, hi] range valid for every pixel of that channel, convolution maps
//! intervals by tap sign, and constant padding widens each read to the hull
//! of the channel range and the padding value (border pixels read both).
//!
//! Interval ends are evaluated in floating point, so after accumulating, a
//! channel's range is widened outward by a relative margin of 1e-12 — orders
//! of magnitude beyond the accumulated rounding of these short sums. Bounds
//! are over-approximations by design; nothing downstream needs them tight.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::net::{Architecture, DeepNet, Layer};
use crate::tensor::{Kernel4, PaddingMode};

/// Relative outward widening applied to every convolved interval.
const WIDEN: f64 = 1e-12;

/// One [lo, hi] interval per channel, uniform over the channel's pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ChannelBounds {
    pub fn channels(&self) -> usize {
        self.lo.len()
    }

    /// Per-channel magnitude max(|lo|, |hi|).
    pub fn magnitude(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| l.abs().max(h.abs())).collect()
    }

    /// Shifts each channel's interval by its bias.
    pub fn add_bias(&self, bias: &[f64]) -> Result<ChannelBounds> {
        if bias.len() != self.channels() {
            return Err(Error::ChannelMismatch { expected: self.channels(), got: bias.len() });
        }
        Ok(ChannelBounds {
            lo: self.lo.iter().zip(bias).map(|(l, b)| l + b).collect(),
            hi: self.hi.iter().zip(bias).map(|(h, b)| h + b).collect(),
        })
    }

    /// Interval image under ReLU.
    pub fn relu(&self) -> ChannelBounds {
        ChannelBounds {
            lo: self.lo.iter().map(|l| l.max(0.0)).collect(),
            hi: self.hi.iter().map(|h| h.max(0.0)).collect(),
        }
    }

    /// Channelwise interval sum; channel counts must agree.
    pub fn add(&self, other: &ChannelBounds) -> Result<ChannelBounds> {
        if self.channels() != other.channels() {
            return Err(Error::ChannelMismatch { expected: self.channels(), got: other.channels() });
        }
        Ok(ChannelBounds {
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| a + b).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| a + b).collect(),
        })
    }
}

/// Bounds for an input box: every channel in [-radius, radius].
pub fn input_box(channels: usize, radius: f64) -> ChannelBounds {
    ChannelBounds { lo: alloc::vec![-radius; channels], hi: alloc::vec![radius; channels] }
}

/// Sound per-channel output interval of a convolution (bias not included).
///
/// Under constant padding a kernel with spatial extent reads the padding
/// value on border pixels, so each read is bounded by the hull of the
/// channel interval and the constant. Periodic padding and 1x1 kernels only
/// ever read in-grid values.
pub fn conv_interval(kernel: &Kernel4, input: &ChannelBounds, pad: PaddingMode) -> Result<ChannelBounds> {
    if let PaddingMode::Reflect = pad {
        return Err(Error::UnsupportedPadding);
    }
    if kernel.in_channels() != input.channels() {
        return Err(Error::ChannelMismatch { expected: kernel.in_channels(), got: input.channels() });
    }
    let k = kernel.half_width() as i64;
    let hull_with = match pad {
        PaddingMode::Constant(a) if kernel.half_width() > 0 => Some(a),
        _ => None,
    };
    let mut lo = alloc::vec![0.0; kernel.out_channels()];
    let mut hi = alloc::vec![0.0; kernel.out_channels()];
    for q in 0..kernel.out_channels() {
        let mut acc_lo = 0.0;
        let mut acc_hi = 0.0;
        for p in 0..kernel.in_channels() {
            let (mut read_lo, mut read_hi) = (input.lo[p], input.hi[p]);
            if let Some(a) = hull_with {
                read_lo = read_lo.min(a);
                read_hi = read_hi.max(a);
            }
            for s in -k..=k {
                for t in -k..=k {
                    let w = kernel.at(p, q, s, t);
                    if w >= 0.0 {
                        acc_lo += w * read_lo;
                        acc_hi += w * read_hi;
                    } else {
                        acc_lo += w * read_hi;
                        acc_hi += w * read_lo;
                    }
                }
            }
        }
        // Outward widening absorbs the rounding of the accumulation above.
        let margin = WIDEN * acc_lo.abs().max(acc_hi.abs());
        lo[q] = acc_lo - margin;
        hi[q] = acc_hi + margin;
    }
    Ok(ChannelBounds { lo, hi })
}

/// Pre-activation bounds of one layer, in the same roles as the forward
/// pass: `inner` feeds the block's inner ReLU (absent for plain layers),
/// `outer` feeds the outer/only ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerBounds {
    pub inner: Option<ChannelBounds>,
    pub outer: ChannelBounds,
}

/// Sound pre-activation bounds for every layer of a network over the
/// sup-norm input box of the given radius.
///
/// Every quantity a forward pass feeds to a ReLU is covered: for residual
/// nets the `outer` entry bounds the skip-inclusive pre-activation
/// (resnet) or the branch pre-activation (preact/mgnet), matching what
/// [`crate::net::DeepNet::forward_traced`] monitors.
pub fn propagate_bounds(net: &DeepNet, radius: f64) -> Result<Vec<LayerBounds>> {
    let x_bounds = input_box(net.input_channels(), radius);
    let mut f_bounds = x_bounds.clone();
    let mut out = Vec::with_capacity(net.layers.len());
    for layer in &net.layers {
        match layer {
            Layer::Conv(c) => {
                let pre = conv_interval(&c.kernel, &f_bounds, net.pad)?.add_bias(&c.bias)?;
                f_bounds = pre.relu();
                out.push(LayerBounds { inner: None, outer: pre });
            }
            Layer::Block(b) => {
                let mut inner_pre = conv_interval(&b.inner, &f_bounds, net.pad)?;
                if let Some(theta) = &b.inject {
                    // Injection blocks add inject * x - stored_inner * f;
                    // the stored inner kernel already carries the sign flip,
                    // so its interval enters negated.
                    let inj = conv_interval(theta, &x_bounds, net.pad)?;
                    let negated = ChannelBounds {
                        lo: inner_pre.hi.iter().map(|v| -v).collect(),
                        hi: inner_pre.lo.iter().map(|v| -v).collect(),
                    };
                    inner_pre = inj.add(&negated)?;
                }
                let inner_pre = inner_pre.add_bias(&b.inner_bias)?;
                let t = inner_pre.relu();
                let mid = conv_interval(&b.outer, &t, net.pad)?;
                let skip = conv_interval(&b.skip, &f_bounds, net.pad)?;
                match net.arch {
                    Architecture::ResNet => {
                        let pre = skip.add(&mid)?.add_bias(&b.outer_bias)?;
                        f_bounds = pre.relu();
                        out.push(LayerBounds { inner: Some(inner_pre), outer: pre });
                    }
                    _ => {
                        let branch = mid.add_bias(&b.outer_bias)?;
                        f_bounds = skip.add(&branch.relu())?;
                        out.push(LayerBounds { inner: Some(inner_pre), outer: branch });
                    }
                }
            }
        }
    }
    Ok(out)
}

// =========================================================================
// Tests
// =========================================================================
