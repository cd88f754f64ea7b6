//! Dense tensors and the reference convolution.
//!
//! Conventions, fixed once here and relied on everywhere else:
//!
//! * A feature map [`Tensor3`] is channels x d x d, stored flat in
//!   channel-major, row-major order. Spatial grids are always square.
//! * A kernel [`Kernel4`] is in_channels x out_channels x (2k+1) x (2k+1)
//!   with spatial taps addressed by signed offsets s, t in -k..=k around the
//!   center. k = 0 (1x1) is legal.
//! * [`conv2d`] is stride-one correlation (no kernel flip): output pixel
//!   (m, n) of channel q accumulates weight[p][q][s][t] * input[p][m+s][n+t].
//!   Output spatial size always equals input spatial size; out-of-range reads
//!   are resolved by the [`PaddingMode`].
//! * Accumulation order is fixed — input channel outermost, then row offset,
//!   then column offset — and never reassociated or fused, so results are
//!   reproducible bit for bit across runs and platforms.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// How reads outside the grid are resolved.
///
/// Only constant and periodic padding are implemented: they are the two modes
/// under which the lowering identities in [`crate::decompose`] hold exactly.
/// `Reflect` is representable so that callers asking for it get a clean
/// [`Error::UnsupportedPadding`] instead of silently wrong numbers; the
/// verification harness demonstrates why it must be rejected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PaddingMode {
    /// Every out-of-range read yields the fixed value `a`.
    Constant(f64),
    /// Indices wrap around modulo the grid size.
    Periodic,
    /// Mirror padding; recognized but rejected by [`conv2d`].
    Reflect,
}

/// A stack of square feature maps: `channels` maps of size `d` x `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    channels: usize,
    d: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    /// Builds a tensor from flat channel-major, row-major data.
    ///
    /// Rejects rectangular shapes and data of the wrong length.
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height != width {
            return Err(Error::NotSquare { height, width });
        }
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(Error::DataLength { expected, got: data.len() });
        }
        Ok(Tensor3 { channels, d: height, data })
    }

    /// All-zero tensor of the given shape.
    pub fn zeros(channels: usize, d: usize) -> Self {
        Tensor3 { channels, d, data: vec![0.0; channels * d * d] }
    }

    /// Tensor with every entry equal to `value`.
    pub fn filled(channels: usize, d: usize, value: f64) -> Self {
        Tensor3 { channels, d, data: vec![value; channels * d * d] }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Spatial side length.
    pub fn size(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn at(&self, c: usize, m: usize, n: usize) -> f64 {
        self.data[(c * self.d + m) * self.d + n]
    }

    #[inline]
    pub fn set(&mut self, c: usize, m: usize, n: usize, value: f64) {
        self.data[(c * self.d + m) * self.d + n] = value;
    }

    /// Flat view in channel-major, row-major order.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Entrywise sum; shapes must agree.
    pub fn add(&self, other: &Tensor3) -> Result<Tensor3> {
        self.zip_with(other, |a, b| a + b)
    }

    /// Entrywise difference; shapes must agree.
    pub fn sub(&self, other: &Tensor3) -> Result<Tensor3> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Entrywise scaling by a constant.
    pub fn scale(&self, factor: f64) -> Tensor3 {
        let data = self.data.iter().map(|v| factor * v).collect();
        Tensor3 { channels: self.channels, d: self.d, data }
    }

    /// Largest absolute entry (0 for an empty tensor).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()))
    }

    fn zip_with(&self, other: &Tensor3, f: impl Fn(f64, f64) -> f64) -> Result<Tensor3> {
        if self.channels != other.channels || self.d != other.d {
            return Err(Error::ShapeMismatch(alloc::format!(
                "tensor {}x{}x{} vs {}x{}x{}",
                self.channels, self.d, self.d, other.channels, other.d, other.d
            )));
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| f(*a, *b))
            .collect();
        Ok(Tensor3 { channels: self.channels, d: self.d, data })
    }
}

/// A convolution kernel: `in_channels` x `out_channels` 3D stack of square
/// taps with half-width `k` (spatial size 2k+1).
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel4 {
    in_channels: usize,
    out_channels: usize,
    k: usize,
    data: Vec<f64>,
}

impl Kernel4 {
    /// Builds a kernel from flat data ordered in-channel, out-channel, row
    /// offset, column offset (offsets from -k to k).
    pub fn new(in_channels: usize, out_channels: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        let side = 2 * k + 1;
        let expected = in_channels * out_channels * side * side;
        if data.len() != expected {
            return Err(Error::DataLength { expected, got: data.len() });
        }
        Ok(Kernel4 { in_channels, out_channels, k, data })
    }

    /// All-zero kernel of the given shape.
    pub fn zeros(in_channels: usize, out_channels: usize, k: usize) -> Self {
        let side = 2 * k + 1;
        Kernel4 { in_channels, out_channels, k, data: vec![0.0; in_channels * out_channels * side * side] }
    }

    /// Single-channel kernel from one square tap matrix (row-major, side 2k+1).
    pub fn from_single(k: usize, taps: Vec<f64>) -> Result<Self> {
        Kernel4::new(1, 1, k, taps)
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    /// Spatial half-width; taps run over offsets -k..=k.
    pub fn half_width(&self) -> usize {
        self.k
    }

    /// Spatial side length 2k+1.
    pub fn spatial_size(&self) -> usize {
        2 * self.k + 1
    }

    #[inline]
    fn offset(&self, p: usize, q: usize, s: i64, t: i64) -> usize {
        let side = 2 * self.k + 1;
        let si = (s + self.k as i64) as usize;
        let ti = (t + self.k as i64) as usize;
        ((p * self.out_channels + q) * side + si) * side + ti
    }

    /// Tap at signed spatial offsets `s`, `t` in -k..=k.
    #[inline]
    pub fn at(&self, p: usize, q: usize, s: i64, t: i64) -> f64 {
        self.data[self.offset(p, q, s, t)]
    }

    #[inline]
    pub fn set(&mut self, p: usize, q: usize, s: i64, t: i64, value: f64) {
        let idx = self.offset(p, q, s, t);
        self.data[idx] = value;
    }

    /// Flat view in (in-channel, out-channel, row, column) order.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// The single-input, single-output slice feeding output channel `q`.
    pub fn extract_output(&self, q: usize) -> Result<Kernel4> {
        if self.in_channels != 1 {
            return Err(Error::InvalidKernel(String::from(
                "extract_output requires a single-input-channel kernel",
            )));
        }
        if q >= self.out_channels {
            return Err(Error::InvalidKernel(alloc::format!(
                "output channel {q} out of range (kernel has {})",
                self.out_channels
            )));
        }
        let mut out = Kernel4::zeros(1, 1, self.k);
        let kk = self.k as i64;
        for s in -kk..=kk {
            for t in -kk..=kk {
                out.set(0, 0, s, t, self.at(0, q, s, t));
            }
        }
        Ok(out)
    }

    /// Re-embeds the taps centered inside a larger spatial footprint.
    ///
    /// The added taps are zero, so the widened kernel computes the same
    /// convolution (zero weights contribute nothing, padding included).
    pub fn widen_to(&self, k_new: usize) -> Result<Kernel4> {
        if k_new < self.k {
            return Err(Error::InvalidKernel(alloc::format!(
                "cannot widen half-width {} down to {k_new}",
                self.k
            )));
        }
        let mut out = Kernel4::zeros(self.in_channels, self.out_channels, k_new);
        let kk = self.k as i64;
        for p in 0..self.in_channels {
            for q in 0..self.out_channels {
                for s in -kk..=kk {
                    for t in -kk..=kk {
                        out.set(p, q, s, t, self.at(p, q, s, t));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Kernel with every tap negated.
    pub fn negated(&self) -> Kernel4 {
        let data = self.data.iter().map(|v| -v).collect();
        Kernel4 { in_channels: self.in_channels, out_channels: self.out_channels, k: self.k, data }
    }
}

/// Resolves a possibly out-of-range coordinate under the given padding.
///
/// Returns `Some(index)` for an in-grid read, `None` when the read is
/// answered by the constant instead.
#[inline]
fn resolve(idx: i64, d: usize, pad: PaddingMode) -> Option<usize> {
    if idx >= 0 && (idx as usize) < d {
        return Some(idx as usize);
    }
    match pad {
        PaddingMode::Constant(_) => None,
        PaddingMode::Periodic => Some(idx.rem_euclid(d as i64) as usize),
        // conv2d rejects Reflect before reads happen.
        PaddingMode::Reflect => None,
    }
}

/// Stride-one correlation of `x` with `kernel` under `pad`.
///
/// Output shape is `kernel.out_channels()` x d x d with d = `x.size()`;
/// spatial size is preserved exactly. Fails with
/// [`Error::ChannelMismatch`] if `x` does not have the kernel's input
/// channel count and [`Error::UnsupportedPadding`] for reflect padding.
pub fn conv2d(kernel: &Kernel4, x: &Tensor3, pad: PaddingMode) -> Result<Tensor3> {
    if let PaddingMode::Reflect = pad {
        return Err(Error::UnsupportedPadding);
    }
    if kernel.in_channels() != x.channels() {
        return Err(Error::ChannelMismatch { expected: kernel.in_channels(), got: x.channels() });
    }
    let d = x.size();
    let k = kernel.half_width() as i64;
    let pad_value = match pad {
        PaddingMode::Constant(a) => a,
        _ => 0.0,
    };
    let mut out = Tensor3::zeros(kernel.out_channels(), d);
    for q in 0..kernel.out_channels() {
        for m in 0..d {
            for n in 0..d {
                let mut acc = 0.0;
                for p in 0..kernel.in_channels() {
                    for s in -k..=k {
                        for t in -k..=k {
                            let w = kernel.at(p, q, s, t);
                            let row = resolve(m as i64 + s, d, pad);
                            let col = resolve(n as i64 + t, d, pad);
                            let v = match (row, col) {
                                (Some(r), Some(c)) => x.at(p, r, c),
                                _ => pad_value,
                            };
                            acc += w * v;
                        }
                    }
                }
                out.set(q, m, n, acc);
            }
        }
    }
    Ok(out)
}

/// Entrywise max(0, x).
pub fn relu(x: &Tensor3) -> Tensor3 {
    let data = x.data().iter().map(|v| v.max(0.0)).collect();
    Tensor3 { channels: x.channels(), d: x.size(), data }
}

/// Adds a per-channel bias, broadcasting each `bias[q]` over channel q's
/// whole d x d grid. Fails if the bias length is not the channel count.
pub fn add_bias(x: &Tensor3, bias: &[f64]) -> Result<Tensor3> {
    if bias.len() != x.channels() {
        return Err(Error::ChannelMismatch { expected: x.channels(), got: bias.len() });
    }
    let mut out = x.clone();
    let area = x.size() * x.size();
    for (chunk, b) in out.data.chunks_mut(area).zip(bias) {
        for v in chunk {
            *v += b;
        }
    }
    Ok(out)
}

/// Flattens to a vector in channel-major, row-major order: entry
/// (c-1)d^2 + (row-1)d + col in 1-based terms — exactly the storage order.
pub fn vectorize(x: &Tensor3) -> Vec<f64> {
    x.data().to_vec()
}

// =========================================================================
// Tests
// =========================================================================

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor_3x3() -> Tensor3 {
        // 1..9 laid out row-major.
        Tensor3::new(1, 3, 3, (1..=9).map(f64::from).collect()).unwrap()
    }

    /// One-hot 3x3 kernel with a 1 at signed offset (i, j).
    fn shift(i: i64, j: i64) -> Kernel4 {
        let mut k = Kernel4::zeros(1, 1, 1);
        k.set(0, 0, i, j, 1.0);
        k
    }

    #[test]
    fn constructors_reject_bad_shapes() {
        assert_eq!(
            Tensor3::new(1, 2, 3, vec![0.0; 6]).unwrap_err(),
            Error::NotSquare { height: 2, width: 3 }
        );
        assert_eq!(
            Tensor3::new(2, 2, 2, vec![0.0; 7]).unwrap_err(),
            Error::DataLength { expected: 8, got: 7 }
        );
        assert_eq!(
            Kernel4::new(1, 2, 1, vec![0.0; 17]).unwrap_err(),
            Error::DataLength { expected: 18, got: 17 }
        );
    }

    #[test]
    fn delta_kernel_is_identity_under_both_paddings() {
        let x = tensor_3x3();
        let delta = shift(0, 0);
        for pad in [PaddingMode::Constant(0.0), PaddingMode::Constant(2.5), PaddingMode::Periodic] {
            assert_eq!(conv2d(&delta, &x, pad).unwrap(), x);
        }
    }

    #[test]
    fn shift_kernel_periodic_wraps_columns() {
        // A 1 at offset (0, 1) reads the pixel one column to the right,
        // wrapping around the grid edge.
        let x = tensor_3x3();
        let out = conv2d(&shift(0, 1), &x, PaddingMode::Periodic).unwrap();
        let expected = [2.0, 3.0, 1.0, 5.0, 6.0, 4.0, 8.0, 9.0, 7.0];
        assert_eq!(out.data(), &expected);
    }

    #[test]
    fn shift_kernel_constant_fills_boundary() {
        let x = tensor_3x3();
        let out = conv2d(&shift(0, 1), &x, PaddingMode::Constant(0.0)).unwrap();
        let expected = [2.0, 3.0, 0.0, 5.0, 6.0, 0.0, 8.0, 9.0, 0.0];
        assert_eq!(out.data(), &expected);

        let out = conv2d(&shift(0, 1), &x, PaddingMode::Constant(-1.5)).unwrap();
        let expected = [2.0, 3.0, -1.5, 5.0, 6.0, -1.5, 8.0, 9.0, -1.5];
        assert_eq!(out.data(), &expected);
    }

    #[test]
    fn conv_preserves_spatial_size_and_maps_channels() {
        let x = Tensor3::zeros(3, 5);
        let k = Kernel4::zeros(3, 7, 2);
        let out = conv2d(&k, &x, PaddingMode::Periodic).unwrap();
        assert_eq!(out.channels(), 7);
        assert_eq!(out.size(), 5);
    }

    #[test]
    fn conv_rejects_channel_mismatch_and_reflect() {
        let x = Tensor3::zeros(2, 4);
        let k = Kernel4::zeros(3, 1, 1);
        assert_eq!(
            conv2d(&k, &x, PaddingMode::Periodic).unwrap_err(),
            Error::ChannelMismatch { expected: 3, got: 2 }
        );
        let k2 = Kernel4::zeros(2, 1, 1);
        assert_eq!(
            conv2d(&k2, &x, PaddingMode::Reflect).unwrap_err(),
            Error::UnsupportedPadding
        );
    }

    #[test]
    fn hand_computed_multichannel_conv() {
        // Two input channels, one output, 1x1 weights 2 and -1:
        // out = 2*ch0 - ch1 pixelwise.
        let x = Tensor3::new(2, 2, 2, vec![1.0, 2.0, 3.0, 4.0, 10.0, 20.0, 30.0, 40.0]).unwrap();
        let k = Kernel4::new(2, 1, 0, vec![2.0, -1.0]).unwrap();
        let out = conv2d(&k, &x, PaddingMode::Constant(0.0)).unwrap();
        assert_eq!(out.data(), &[-8.0, -16.0, -24.0, -32.0]);
    }

    #[test]
    fn relu_split_identities() {
        let x = Tensor3::new(1, 2, 2, vec![-2.0, 0.0, 3.5, -0.25]).unwrap();
        let neg = x.scale(-1.0);
        let plus = relu(&x);
        let minus = relu(&neg);
        for i in 0..4 {
            let v = x.data()[i];
            // relu(x) - relu(-x) == x and relu(x) + relu(-x) == |x|.
            assert_eq!(plus.data()[i] - minus.data()[i], v);
            assert_eq!(plus.data()[i] + minus.data()[i], v.abs());
        }
    }

    #[test]
    fn add_bias_broadcasts_per_channel() {
        let x = Tensor3::new(2, 2, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let out = add_bias(&x, &[10.0, -1.0]).unwrap();
        assert_eq!(out.data(), &[11.0, 12.0, 13.0, 14.0, 4.0, 5.0, 6.0, 7.0]);
        assert!(add_bias(&x, &[1.0]).is_err());
    }

    #[test]
    fn vectorize_is_channel_major_row_major() {
        let x = Tensor3::new(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(vectorize(&x), vec![1.0, 2.0, 3.0, 4.0]);
        let y = Tensor3::new(2, 1, 1, vec![5.0, 7.0]).unwrap();
        assert_eq!(vectorize(&y), vec![5.0, 7.0]);
    }

    #[test]
    fn widen_to_preserves_convolution() {
        let k = Kernel4::from_single(1, (1..=9).map(f64::from).collect()).unwrap();
        let wide = k.widen_to(3).unwrap();
        let x = tensor_3x3();
        for pad in [PaddingMode::Constant(0.7), PaddingMode::Periodic] {
            let a = conv2d(&k, &x, pad).unwrap();
            let b = conv2d(&wide, &x, pad).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn extract_output_slices_one_channel() {
        let mut k = Kernel4::zeros(1, 3, 2);
        k.set(0, 1, -2, 2, 4.5);
        let slice = k.extract_output(1).unwrap();
        assert_eq!(slice.at(0, 0, -2, 2), 4.5);
        assert_eq!(slice.out_channels(), 1);
        assert!(k.extract_output(3).is_err());
    }
}
