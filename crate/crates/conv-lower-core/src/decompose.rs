//! Lowering a wide convolution kernel onto cascades of 3x3 layers.
//!
//! The driving identity: a (2k+1)x(2k+1) kernel K splits into nine
//! (2k-1)x(2k-1) blocks P_(i,j), one per one-pixel shift direction, such
//! that K * X == sum over (i,j) of P_(i,j) * S_(i,j) * X for every grid with
//! d > k, under both constant and periodic padding. S_(i,j) is the one-hot
//! 3x3 shift kernel. Applying the split recursively until every block is
//! 3x3 and regrouping the shift compositions by prefix yields
//! [`lower_kernel`]: a cascade of k-1 sparse multi-channel 3x3 shift stages
//! followed by one dense 3x3 projection, exactly equal to the original
//! convolution.
//!
//! Only shift sequences whose per-axis moves are "zeros, then a repeated
//! sign" survive the recursion; stage n uses exactly (2n+1)^2 of the 9^n
//! conceivable sequences, which is what keeps the cascade widths polynomial.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::error::{Error, Result};
use crate::tensor::{conv2d, Kernel4, PaddingMode, Tensor3};

/// The nine one-pixel shift directions in lexicographic order; this order
/// fixes channel numbering everywhere in the crate.
pub const SHIFT_OFFSETS: [(i32, i32); 9] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 0),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// The 3x3 one-hot kernel with a single 1 at offset (i, j).
///
/// Under periodic padding it shifts the grid: output(m, n) = input(m+i, n+j)
/// with wraparound. Offsets must lie in -1..=1.
pub fn shift_kernel(i: i32, j: i32) -> Kernel4 {
    assert!((-1..=1).contains(&i) && (-1..=1).contains(&j), "shift offsets must be in -1..=1");
    let mut k = Kernel4::zeros(1, 1, 1);
    k.set(0, 0, i as i64, j as i64, 1.0);
    k
}

/// Where a shift sequence has wandered: still free on both axes, pinned to
/// one grid edge, or pinned into a corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    Corner,
    Boundary,
    Full,
}

/// A shift sequence together with its block-support classification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSeq {
    pub moves: Vec<(i32, i32)>,
    pub pattern: Pattern,
}

/// Per-axis committed direction of a sequence: 0 while every move on that
/// axis has been 0, else the (constant) nonzero sign.
fn axis_state(moves: &[(i32, i32)]) -> (i32, i32) {
    let si = moves.iter().map(|m| m.0).find(|&v| v != 0).unwrap_or(0);
    let sj = moves.iter().map(|m| m.1).find(|&v| v != 0).unwrap_or(0);
    (si, sj)
}

/// Classifies a sequence by how many axes have committed to a direction.
pub fn pattern_of(moves: &[(i32, i32)]) -> Pattern {
    match axis_state(moves) {
        (0, 0) => Pattern::Full,
        (_, 0) | (0, _) => Pattern::Boundary,
        _ => Pattern::Corner,
    }
}

/// The moves a sequence may be extended by: a committed axis must repeat its
/// sign, a free axis may pick any of -1, 0, 1.
fn allowed_moves(state: (i32, i32)) -> Vec<(i32, i32)> {
    let choices = |s: i32| if s == 0 { vec![-1, 0, 1] } else { vec![s] };
    let mut out = Vec::new();
    for i in choices(state.0) {
        for j in choices(state.1) {
            out.push((i, j));
        }
    }
    out
}

/// All surviving shift sequences of each length 1..=n, sorted
/// lexicographically. `result[m-1]` is the channel numbering of stage m.
pub fn index_sets_up_to(n: usize) -> Vec<Vec<IndexSeq>> {
    let mut levels: Vec<Vec<IndexSeq>> = Vec::new();
    let mut current: Vec<Vec<(i32, i32)>> = vec![Vec::new()];
    for _ in 0..n {
        let mut next: Vec<Vec<(i32, i32)>> = Vec::new();
        for seq in &current {
            for mv in allowed_moves(axis_state(seq)) {
                let mut child = seq.clone();
                child.push(mv);
                next.push(child);
            }
        }
        next.sort();
        levels.push(
            next.iter()
                .map(|moves| IndexSeq { pattern: pattern_of(moves), moves: moves.clone() })
                .collect(),
        );
        current = next;
    }
    levels
}

/// The surviving shift sequences of length exactly `n` (cardinality (2n+1)^2).
pub fn build_index_set(n: usize) -> Vec<IndexSeq> {
    index_sets_up_to(n).pop().unwrap_or_default()
}

/// Extracts the (i, j) block of a single-channel kernel: the sub-kernel of
/// half-width k-1 that pairs with shift S_(i,j) in the one-step split.
///
/// Block support: direction -1 on an axis pins that axis to the kernel's
/// leading edge (offset -k), +1 to the trailing edge (+k), and 0 keeps the
/// interior offsets, which land unchanged in the smaller block.
fn child_block(kernel: &Kernel4, i: i32, j: i32) -> Kernel4 {
    let k = kernel.half_width() as i64;
    let kp = k - 1;
    let mut out = Kernel4::zeros(1, 1, kp as usize);
    let source = |dir: i32, u: i64| -> Option<i64> {
        match dir {
            -1 => (u == -kp).then_some(-k),
            0 => Some(u),
            1 => (u == kp).then_some(k),
            _ => unreachable!(),
        }
    };
    for u in -kp..=kp {
        for v in -kp..=kp {
            if let (Some(row), Some(col)) = (source(i, u), source(j, v)) {
                out.set(0, 0, u, v, kernel.at(0, 0, row, col));
            }
        }
    }
    out
}

/// Splits a single-channel kernel of half-width k >= 1 into its nine
/// one-step blocks, in [`SHIFT_OFFSETS`] order.
///
/// Every tap of the input appears in exactly one block: edge rows/columns go
/// to the blocks whose direction points at them, the interior to the (0, 0)
/// block. Summing the blocks back into their source positions reassembles
/// the kernel exactly.
pub fn split_k_tilde(kernel: &Kernel4) -> Result<[Kernel4; 9]> {
    if kernel.in_channels() != 1 || kernel.out_channels() != 1 {
        return Err(Error::InvalidKernel(String::from(
            "one-step split requires a single-input, single-output kernel",
        )));
    }
    if kernel.half_width() < 1 {
        return Err(Error::InvalidKernel(String::from("cannot split a 1x1 kernel")));
    }
    Ok(SHIFT_OFFSETS.map(|(i, j)| child_block(kernel, i, j)))
}

/// One term of a one-step decomposition: the block kernel paired with the
/// shift it rides on.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompTerm {
    pub offset: (i32, i32),
    pub shift: Kernel4,
    pub block: Kernel4,
}

/// The nine-term one-step decomposition of a wide kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct OnceDecomposition {
    pub terms: Vec<DecompTerm>,
}

impl OnceDecomposition {
    /// Evaluates sum of block * (shift * x) — the right-hand side of the
    /// split identity.
    pub fn apply(&self, x: &Tensor3, pad: PaddingMode) -> Result<Tensor3> {
        let mut acc = Tensor3::zeros(1, x.size());
        for term in &self.terms {
            let shifted = conv2d(&term.shift, x, pad)?;
            let mapped = conv2d(&term.block, &shifted, pad)?;
            acc = acc.add(&mapped)?;
        }
        Ok(acc)
    }
}

/// Splits a single-channel kernel one step, pairing each block with its
/// shift. The result does not depend on `pad`; the arguments are validated
/// so the identity it encodes actually holds (d > k, supported padding).
pub fn decompose_once(kernel: &Kernel4, d: usize, pad: PaddingMode) -> Result<OnceDecomposition> {
    if let PaddingMode::Reflect = pad {
        return Err(Error::UnsupportedPadding);
    }
    if d <= kernel.half_width() {
        return Err(Error::InvalidDimension(format!(
            "one-step split needs d > k, got d = {d}, k = {}",
            kernel.half_width()
        )));
    }
    let blocks = split_k_tilde(kernel)?;
    let terms = SHIFT_OFFSETS
        .iter()
        .zip(blocks)
        .map(|(&(i, j), block)| DecompTerm { offset: (i, j), shift: shift_kernel(i, j), block })
        .collect();
    Ok(OnceDecomposition { terms })
}

/// A wide convolution rewritten as a cascade of 3x3 layers.
///
/// `stages[n-1]` is the n-th shift stage, a sparse (2n-1)^2 -> (2n+1)^2
/// kernel whose blocks are one-hot shifts; `terminal` projects the
/// (2k-1)^2 sequence channels onto the original output channels. Applying
/// the stages in order and then the terminal reproduces the source
/// convolution exactly under the padding modes the plan was validated for.
#[derive(Debug, Clone, PartialEq)]
pub struct LoweredPlan {
    /// Half-width of the kernel this plan lowers.
    pub k: usize,
    pub stages: Vec<Kernel4>,
    pub terminal: Kernel4,
    /// Channel numbering of each stage's output: `index_sets[n-1]` lists the
    /// shift sequences carried by stage n, in channel order.
    pub index_sets: Vec<Vec<IndexSeq>>,
}

impl LoweredPlan {
    /// Runs the full cascade on an input.
    pub fn apply(&self, x: &Tensor3, pad: PaddingMode) -> Result<Tensor3> {
        let mut f = x.clone();
        for stage in &self.stages {
            f = conv2d(stage, &f, pad)?;
        }
        conv2d(&self.terminal, &f, pad)
    }

    /// Channel widths through the cascade, input first, output last.
    pub fn stage_widths(&self) -> Vec<usize> {
        let mut widths = vec![1];
        for stage in &self.stages {
            widths.push(stage.out_channels());
        }
        widths.push(self.terminal.out_channels());
        widths
    }
}

/// Builds stage n's kernel from the channel numberings of stages n-1 and n:
/// output channel q holds the one-hot shift of its sequence's last move,
/// wired to the input channel carrying its prefix.
fn build_stage(prev: &[IndexSeq], cur: &[IndexSeq]) -> Kernel4 {
    let mut stage = Kernel4::zeros(prev.len().max(1), cur.len(), 1);
    for (q, seq) in cur.iter().enumerate() {
        let (i, j) = *seq.moves.last().expect("stage sequences are nonempty");
        let prefix = &seq.moves[..seq.moves.len() - 1];
        let p = if prefix.is_empty() {
            0
        } else {
            prev.binary_search_by(|cand| cand.moves.as_slice().cmp(prefix))
                .expect("every prefix is carried by the previous stage")
        };
        stage.set(p, q, i as i64, j as i64, 1.0);
    }
    stage
}

/// Lowers a 1 -> M kernel of half-width k to an equivalent cascade of 3x3
/// layers on a d x d grid (requires d > k).
///
/// Kernels that are already 3x3 or smaller lower to a trivial plan with no
/// shift stages. The shift stages depend only on k, never on the tap
/// values; all tap values land in the terminal projection.
pub fn lower_kernel(kernel: &Kernel4, d: usize, pad: PaddingMode) -> Result<LoweredPlan> {
    if let PaddingMode::Reflect = pad {
        return Err(Error::UnsupportedPadding);
    }
    if kernel.in_channels() != 1 {
        return Err(Error::InvalidKernel(String::from(
            "lowering requires a single-input-channel kernel",
        )));
    }
    let k = kernel.half_width();
    if d <= k {
        return Err(Error::InvalidDimension(format!("lowering needs d > k, got d = {d}, k = {k}")));
    }
    let m_out = kernel.out_channels();
    if k <= 1 {
        return Ok(LoweredPlan {
            k,
            stages: Vec::new(),
            terminal: kernel.widen_to(1)?,
            index_sets: Vec::new(),
        });
    }

    let levels = index_sets_up_to(k - 1);
    let mut stages = Vec::with_capacity(k - 1);
    let empty: Vec<IndexSeq> = Vec::new();
    for n in 0..k - 1 {
        let prev = if n == 0 { &empty } else { &levels[n - 1] };
        stages.push(build_stage(prev, &levels[n]));
    }

    // Recursively split each output channel's taps, keeping one block per
    // surviving sequence. Blocks of dropped sequences are structurally zero.
    let final_level = &levels[k - 2];
    let mut terminal = Kernel4::zeros(final_level.len(), m_out, 1);
    for m in 0..m_out {
        let mut blocks: Vec<(Vec<(i32, i32)>, Kernel4)> =
            vec![(Vec::new(), kernel.extract_output(m)?)];
        for _ in 0..k - 1 {
            let mut next = Vec::with_capacity(blocks.len() * 4);
            for (seq, block) in &blocks {
                let children = split_k_tilde(block)?;
                let keep = allowed_moves(axis_state(seq));
                for (&(i, j), child) in SHIFT_OFFSETS.iter().zip(children) {
                    if keep.contains(&(i, j)) {
                        let mut extended = seq.clone();
                        extended.push((i, j));
                        next.push((extended, child));
                    } else {
                        debug_assert!(
                            child.data().iter().all(|&v| v == 0.0),
                            "dropped block must be structurally zero"
                        );
                    }
                }
            }
            blocks = next;
        }
        for (seq, block) in blocks {
            let p = final_level
                .binary_search_by(|cand| cand.moves.cmp(&seq))
                .expect("surviving sequences match the final index set");
            for s in -1..=1 {
                for t in -1..=1 {
                    terminal.set(p, m, s, t, block.at(0, 0, s, t));
                }
            }
        }
    }

    Ok(LoweredPlan { k, stages, terminal, index_sets: levels })
}

// =========================================================================
// Tests
// =========================================================================
