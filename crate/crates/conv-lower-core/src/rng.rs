//! Seeded, counter-based random sampling.
//!
//! Everything random in this crate is a pure function of (seed, counter), so
//! reports are reproducible byte for byte regardless of evaluation order or
//! parallelism. The generator is the SplitMix64 finalizer applied to
//! `seed + (counter + 1) * 0x9E3779B97F4A7C15` (the 64-bit golden ratio):
//! draw `i` of a stream equals the (i+1)-th output of a classic SplitMix64
//! sequence started at `seed`. Uniform doubles take the top 53 bits.

use alloc::vec::Vec;

use crate::net::ShallowNet;
use crate::tensor::{Kernel4, Tensor3};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The `counter`-th 64-bit draw of the stream identified by `seed`.
#[inline]
pub fn at(seed: u64, counter: u64) -> u64 {
    finalize(seed.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Uniform draw in [0, 1) with 53-bit resolution.
#[inline]
pub fn unit_at(seed: u64, counter: u64) -> f64 {
    (at(seed, counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw in [-radius, radius).
#[inline]
pub fn box_at(seed: u64, counter: u64, radius: f64) -> f64 {
    (2.0 * unit_at(seed, counter) - 1.0) * radius
}

/// Derives an independent sub-stream seed from a parent seed and a tag.
pub fn derive(seed: u64, tag: u64) -> u64 {
    at(seed, tag ^ 0xD1F3_5C2E_9A78_4B01)
}

/// Tensor with entries drawn uniformly from [-radius, radius).
///
/// Entry e (in storage order) uses counter e, so one tensor consumes
/// channels * d * d counters of its stream.
pub fn tensor_in_box(seed: u64, channels: usize, d: usize, radius: f64) -> Tensor3 {
    let len = channels * d * d;
    let data: Vec<f64> = (0..len).map(|e| box_at(seed, e as u64, radius)).collect();
    Tensor3::new(channels, d, d, data).expect("shape matches by construction")
}

/// Kernel with taps drawn uniformly from [-bound, bound).
pub fn kernel_uniform(seed: u64, in_channels: usize, out_channels: usize, k: usize, bound: f64) -> Kernel4 {
    let side = 2 * k + 1;
    let len = in_channels * out_channels * side * side;
    let data: Vec<f64> = (0..len).map(|e| box_at(seed, e as u64, bound)).collect();
    Kernel4::new(in_channels, out_channels, k, data).expect("shape matches by construction")
}

/// One-hidden-layer net on a d x d grid with weights in [-1, 1), biases in
/// [-0.5, 0.5) and output coefficients in [-1, 1), certified on the box of
/// the given radius. Requires `hidden >= 1` and `d >= 1`.
pub fn shallow_uniform(seed: u64, hidden: usize, d: usize, box_radius: f64) -> ShallowNet {
    let dim = d * d;
    let weights: Vec<f64> =
        (0..(hidden * dim) as u64).map(|e| box_at(derive(seed, 1), e, 1.0)).collect();
    let bias: Vec<f64> = (0..hidden as u64).map(|e| box_at(derive(seed, 2), e, 0.5)).collect();
    let coeff: Vec<f64> = (0..hidden as u64).map(|e| box_at(derive(seed, 3), e, 1.0)).collect();
    ShallowNet::new(hidden, dim, weights, bias, coeff, box_radius)
        .expect("shape matches by construction")
}
