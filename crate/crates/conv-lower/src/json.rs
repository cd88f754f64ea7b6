//! On-disk JSON formats.
//!
//! One tensor format serves both activations and kernels: a `shape` array
//! (`[c, d, d]` or `[cin, cout, ks, ks]`) plus a flat row-major `data`
//! array. Networks, plans and reports are plain structures over it.
//!
//! Serialization is canonical — pretty-printed, two-space indent, keys in
//! declaration order, trailing newline — so equal values always produce
//! identical bytes, and parsing then re-serializing an artifact reproduces
//! it exactly.

use conv_lower_core::decompose::{pattern_of, IndexSeq, LoweredPlan};
use conv_lower_core::harness::{
    EquivalenceReport, PaddingProbeReport, ParamCount, PlanAudit, Verdict,
};
use conv_lower_core::net::{
    Architecture, BlockLayer, ConvLayer, DeepNet, Layer, ShallowNet,
};
use conv_lower_core::{Error, Kernel4, PaddingMode, Result, Tensor3};
use serde::{Deserialize, Serialize};

// =========================================================================
// Tensors and kernels
// =========================================================================

/// Shared tensor format: shape plus flat row-major data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorJson {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl TensorJson {
    pub fn from_tensor(t: &Tensor3) -> Self {
        TensorJson { shape: vec![t.channels(), t.size(), t.size()], data: t.data().to_vec() }
    }

    pub fn to_tensor(&self) -> Result<Tensor3> {
        if self.shape.len() != 3 {
            return Err(Error::ShapeMismatch(format!(
                "tensor shape must have 3 entries [c, d, d], found {}",
                self.shape.len()
            )));
        }
        Tensor3::new(self.shape[0], self.shape[1], self.shape[2], self.data.clone())
    }

    pub fn from_kernel(k: &Kernel4) -> Self {
        let side = k.spatial_size();
        TensorJson {
            shape: vec![k.in_channels(), k.out_channels(), side, side],
            data: k.data().to_vec(),
        }
    }

    pub fn to_kernel(&self) -> Result<Kernel4> {
        if self.shape.len() != 4 {
            return Err(Error::ShapeMismatch(format!(
                "kernel shape must have 4 entries [cin, cout, ks, ks], found {}",
                self.shape.len()
            )));
        }
        let side = self.shape[2];
        if self.shape[3] != side || side.is_multiple_of(2) || side == 0 {
            return Err(Error::ShapeMismatch(format!(
                "kernel spatial shape must be odd and square, found {} x {}",
                side, self.shape[3]
            )));
        }
        Kernel4::new(self.shape[0], self.shape[1], (side - 1) / 2, self.data.clone())
    }
}

// =========================================================================
// Padding
// =========================================================================

/// Padding mode, tagged by name: `{"mode": "constant", "a": 0.5}`,
/// `{"mode": "periodic"}` or `{"mode": "reflect"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum PadJson {
    Constant { a: f64 },
    Periodic,
    Reflect,
}

impl PadJson {
    pub fn from_pad(pad: PaddingMode) -> Self {
        match pad {
            PaddingMode::Constant(a) => PadJson::Constant { a },
            PaddingMode::Periodic => PadJson::Periodic,
            PaddingMode::Reflect => PadJson::Reflect,
        }
    }

    pub fn to_pad(&self) -> PaddingMode {
        match *self {
            PadJson::Constant { a } => PaddingMode::Constant(a),
            PadJson::Periodic => PaddingMode::Periodic,
            PadJson::Reflect => PaddingMode::Reflect,
        }
    }
}

/// Parses the `--pad` flag syntax: `periodic`, `reflect`, `constant`
/// (zero), or `constant:<value>`.
pub fn parse_pad_flag(text: &str) -> Result<PaddingMode> {
    match text {
        "periodic" => return Ok(PaddingMode::Periodic),
        "reflect" => return Ok(PaddingMode::Reflect),
        "constant" => return Ok(PaddingMode::Constant(0.0)),
        _ => {}
    }
    if let Some(raw) = text.strip_prefix("constant:") {
        return raw
            .parse::<f64>()
            .map(PaddingMode::Constant)
            .map_err(|_| Error::ShapeMismatch(format!("pad value '{raw}' is not a number")));
    }
    Err(Error::ShapeMismatch(format!(
        "unknown pad mode '{text}' (expected periodic, reflect, constant or constant:<value>)"
    )))
}

// =========================================================================
// Networks
// =========================================================================

/// One-hidden-layer source network; weights are stored as `hidden` rows of
/// length `input_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShallowJson {
    pub hidden: usize,
    pub input_dim: usize,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub coeff: Vec<f64>,
    pub box_radius: f64,
}

impl ShallowJson {
    pub fn from_net(net: &ShallowNet) -> Self {
        let weights = net
            .weights
            .chunks(net.input_dim)
            .map(|row| row.to_vec())
            .collect();
        ShallowJson {
            hidden: net.hidden,
            input_dim: net.input_dim,
            weights,
            bias: net.bias.clone(),
            coeff: net.coeff.clone(),
            box_radius: net.box_radius,
        }
    }

    pub fn to_net(&self) -> Result<ShallowNet> {
        if self.weights.len() != self.hidden {
            return Err(Error::ShapeMismatch(format!(
                "weights has {} rows, hidden is {}",
                self.weights.len(),
                self.hidden
            )));
        }
        let mut flat = Vec::with_capacity(self.hidden * self.input_dim);
        for (n, row) in self.weights.iter().enumerate() {
            if row.len() != self.input_dim {
                return Err(Error::ShapeMismatch(format!(
                    "weights row {n} has {} entries, input_dim is {}",
                    row.len(),
                    self.input_dim
                )));
            }
            flat.extend_from_slice(row);
        }
        ShallowNet::new(
            self.hidden,
            self.input_dim,
            flat,
            self.bias.clone(),
            self.coeff.clone(),
            self.box_radius,
        )
    }
}

/// One deep-net layer: a plain convolution or a residual block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LayerJson {
    Conv {
        kernel: TensorJson,
        bias: Vec<f64>,
    },
    Block {
        inner: TensorJson,
        inner_bias: Vec<f64>,
        outer: TensorJson,
        outer_bias: Vec<f64>,
        skip: TensorJson,
        #[serde(skip_serializing_if = "Option::is_none")]
        inject: Option<TensorJson>,
    },
}

/// Deep network: architecture tag, padding, layer stack, readout vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepJson {
    pub arch: String,
    pub pad: PadJson,
    pub layers: Vec<LayerJson>,
    pub readout: Vec<f64>,
}

impl DeepJson {
    pub fn from_net(net: &DeepNet) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|layer| match layer {
                Layer::Conv(c) => LayerJson::Conv {
                    kernel: TensorJson::from_kernel(&c.kernel),
                    bias: c.bias.clone(),
                },
                Layer::Block(b) => LayerJson::Block {
                    inner: TensorJson::from_kernel(&b.inner),
                    inner_bias: b.inner_bias.clone(),
                    outer: TensorJson::from_kernel(&b.outer),
                    outer_bias: b.outer_bias.clone(),
                    skip: TensorJson::from_kernel(&b.skip),
                    inject: b.inject.as_ref().map(TensorJson::from_kernel),
                },
            })
            .collect();
        DeepJson {
            arch: net.arch.name().to_string(),
            pad: PadJson::from_pad(net.pad),
            layers,
            readout: net.readout.clone(),
        }
    }

    pub fn to_net(&self) -> Result<DeepNet> {
        let arch = Architecture::parse(&self.arch).ok_or_else(|| {
            Error::ShapeMismatch(format!("unknown architecture '{}'", self.arch))
        })?;
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            layers.push(match layer {
                LayerJson::Conv { kernel, bias } => {
                    Layer::Conv(ConvLayer { kernel: kernel.to_kernel()?, bias: bias.clone() })
                }
                LayerJson::Block { inner, inner_bias, outer, outer_bias, skip, inject } => {
                    Layer::Block(BlockLayer {
                        inner: inner.to_kernel()?,
                        inner_bias: inner_bias.clone(),
                        outer: outer.to_kernel()?,
                        outer_bias: outer_bias.clone(),
                        skip: skip.to_kernel()?,
                        inject: inject.as_ref().map(TensorJson::to_kernel).transpose()?,
                    })
                }
            });
        }
        Ok(DeepNet { arch, pad: self.pad.to_pad(), layers, readout: self.readout.clone() })
    }
}

// =========================================================================
// Lowered plans
// =========================================================================

/// A lowered plan: stage kernels, terminal projection, and per-stage shift
/// sequences (patterns are recomputed on load).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanJson {
    pub k: usize,
    pub stages: Vec<TensorJson>,
    pub terminal: TensorJson,
    pub index_sets: Vec<Vec<Vec<[i32; 2]>>>,
}

impl PlanJson {
    pub fn from_plan(plan: &LoweredPlan) -> Self {
        let index_sets = plan
            .index_sets
            .iter()
            .map(|level| {
                level
                    .iter()
                    .map(|seq| seq.moves.iter().map(|&(i, j)| [i, j]).collect())
                    .collect()
            })
            .collect();
        PlanJson {
            k: plan.k,
            stages: plan.stages.iter().map(TensorJson::from_kernel).collect(),
            terminal: TensorJson::from_kernel(&plan.terminal),
            index_sets,
        }
    }

    pub fn to_plan(&self) -> Result<LoweredPlan> {
        let stages =
            self.stages.iter().map(TensorJson::to_kernel).collect::<Result<Vec<_>>>()?;
        let index_sets = self
            .index_sets
            .iter()
            .map(|level| {
                level
                    .iter()
                    .map(|moves| {
                        let moves: Vec<(i32, i32)> =
                            moves.iter().map(|&[i, j]| (i, j)).collect();
                        let pattern = pattern_of(&moves);
                        IndexSeq { moves, pattern }
                    })
                    .collect()
            })
            .collect();
        Ok(LoweredPlan { k: self.k, stages, terminal: self.terminal.to_kernel()?, index_sets })
    }
}

// =========================================================================
// Reports
// =========================================================================

/// Serialized equivalence certification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub samples: usize,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub linearity_violations: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub pads: Vec<String>,
    pub verdict: String,
}

impl ReportJson {
    pub fn from_report(report: &EquivalenceReport) -> Self {
        ReportJson {
            samples: report.samples,
            max_abs_err: report.max_abs_err,
            max_rel_err: report.max_rel_err,
            linearity_violations: report.linearity_violations,
            tolerance: report.tolerance,
            seed: report.seed,
            pads: report.pads.clone(),
            verdict: report.verdict.as_str().to_string(),
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass.as_str()
    }
}

/// Serialized structural audit of a lowered plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditJson {
    pub k: usize,
    pub widths: Vec<usize>,
    pub census: Vec<[usize; 3]>,
}

impl AuditJson {
    pub fn from_audit(audit: &PlanAudit) -> Self {
        AuditJson {
            k: audit.k,
            widths: audit.widths.clone(),
            census: audit.census.iter().map(|&(c, b, f)| [c, b, f]).collect(),
        }
    }
}

/// Serialized parameter tally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountJson {
    pub shallow_count: u64,
    pub deep_count: u64,
    pub bound: u64,
    pub within_bound: bool,
    pub per_layer: Vec<LayerCountJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCountJson {
    pub label: String,
    pub count: u64,
}

impl CountJson {
    pub fn from_count(count: &ParamCount) -> Self {
        CountJson {
            shallow_count: count.shallow_count,
            deep_count: count.deep_count,
            bound: count.bound,
            within_bound: count.within_bound,
            per_layer: count
                .per_layer
                .iter()
                .map(|l| LayerCountJson { label: l.label.clone(), count: l.count })
                .collect(),
        }
    }
}

/// Serialized padding-sensitivity probe report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeJson {
    pub d: usize,
    pub k: usize,
    pub samples: usize,
    pub seed: u64,
    pub border_max_err: f64,
    pub interior_max_err: f64,
    pub periodic_max_err: f64,
    pub rejects_reflect: bool,
    pub confirms_sensitivity: bool,
}

impl ProbeJson {
    pub fn from_probe(probe: &PaddingProbeReport) -> Self {
        ProbeJson {
            d: probe.d,
            k: probe.k,
            samples: probe.samples,
            seed: probe.seed,
            border_max_err: probe.border_max_err,
            interior_max_err: probe.interior_max_err,
            periodic_max_err: probe.periodic_max_err,
            rejects_reflect: probe.rejects_reflect,
            confirms_sensitivity: probe.confirms_sensitivity(),
        }
    }
}

// =========================================================================
// Canonical serialization
// =========================================================================

/// Renders any artifact in the canonical form: pretty-printed two-space
/// JSON with a trailing newline.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("artifact types serialize");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use conv_lower_core::construct::build_classic;
    use conv_lower_core::decompose::lower_kernel;
    use conv_lower_core::rng;

    #[test]
    fn tensor_round_trips_through_json_bytes() {
        let t = rng::tensor_in_box(3, 2, 4, 1.0);
        let text = to_canonical_json(&TensorJson::from_tensor(&t));
        let parsed: TensorJson = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed.to_tensor().unwrap(), t);
        assert_eq!(to_canonical_json(&parsed), text);
    }

    #[test]
    fn kernel_round_trips_and_validates_shape() {
        let k = rng::kernel_uniform(4, 2, 3, 2, 1.0);
        let dto = TensorJson::from_kernel(&k);
        assert_eq!(dto.to_kernel().unwrap(), k);

        let bad = TensorJson { shape: vec![1, 1, 4, 4], data: vec![0.0; 16] };
        assert!(matches!(bad.to_kernel(), Err(Error::ShapeMismatch(_))));
        let bad = TensorJson { shape: vec![1, 1, 3], data: vec![0.0; 9] };
        assert!(matches!(bad.to_kernel(), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn pad_flag_parses_all_forms() {
        assert_eq!(parse_pad_flag("periodic").unwrap(), PaddingMode::Periodic);
        assert_eq!(parse_pad_flag("reflect").unwrap(), PaddingMode::Reflect);
        assert_eq!(parse_pad_flag("constant").unwrap(), PaddingMode::Constant(0.0));
        assert_eq!(parse_pad_flag("constant:-1.5").unwrap(), PaddingMode::Constant(-1.5));
        assert!(parse_pad_flag("mirror").is_err());
        assert!(parse_pad_flag("constant:abc").is_err());
    }

    #[test]
    fn shallow_net_round_trips() {
        let net = rng::shallow_uniform(11, 3, 4, 1.5);
        let dto = ShallowJson::from_net(&net);
        let back = dto.to_net().unwrap();
        assert_eq!(back.weights, net.weights);
        assert_eq!(back.bias, net.bias);
        assert_eq!(back.coeff, net.coeff);

        let mut bad = dto.clone();
        bad.weights[1].pop();
        assert!(matches!(bad.to_net(), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn plan_round_trips_byte_identically() {
        let kernel = rng::kernel_uniform(21, 1, 2, 3, 1.0);
        let plan = lower_kernel(&kernel, 8, PaddingMode::Periodic).unwrap();
        let text = to_canonical_json(&PlanJson::from_plan(&plan));
        let parsed: PlanJson = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed.to_plan().unwrap(), plan);
        assert_eq!(to_canonical_json(&parsed), text);
    }

    #[test]
    fn deep_net_round_trips_byte_identically() {
        let shallow = rng::shallow_uniform(31, 2, 5, 1.0);
        let net = build_classic(&shallow, 5, PaddingMode::Constant(0.25)).unwrap();
        let text = to_canonical_json(&DeepJson::from_net(&net));
        let parsed: DeepJson = serde_json::from_str(&text).unwrap();
        let back = parsed.to_net().unwrap();
        assert_eq!(back, net);
        assert_eq!(to_canonical_json(&DeepJson::from_net(&back)), text);
    }

    #[test]
    fn deep_net_json_rejects_unknown_architecture() {
        let dto = DeepJson {
            arch: "dense".to_string(),
            pad: PadJson::Periodic,
            layers: vec![],
            readout: vec![],
        };
        assert!(matches!(dto.to_net(), Err(Error::ShapeMismatch(_))));
    }
}
