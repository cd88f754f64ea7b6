//! `conv-lower`: batch front door. Ingests JSON artifacts (kernels,
//! shallow nets, deep nets), runs lowering, construction, verification,
//! parameter accounting or the padding probe, writes JSON artifacts, and
//! prints a one-line summary per job. Exit codes: 0 pass, 1 fail,
//! 2 structural audit failure, 64 usage.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use conv_lower::json::{
    parse_pad_flag, AuditJson, CountJson, DeepJson, PlanJson, ProbeJson, ReportJson, ShallowJson,
    TensorJson,
};
use conv_lower::runner::{
    certify_parallel, exit_code, init_thread_pool, read_json, verdict_code, write_json, RunError,
    EXIT_FAIL, EXIT_PASS,
};
use conv_lower_core::construct::{build_classic, build_mgnet, build_preact_resnet, build_resnet};
use conv_lower_core::decompose::lower_kernel;
use conv_lower_core::harness::{
    audit_plan, certify_input, classic_schedule_count, count_params, negative_padding_probe,
    oracle_conv, pad_label, param_bound, shallow_param_count, CertifyConfig, EquivalenceReport,
    LayerParams, ParamCount, Verdict,
};
use conv_lower_core::net::{Architecture, DeepNet, ShallowNet};
use conv_lower_core::{rng, Kernel4, PaddingMode, Tensor3};

/// Sub-stream tags for generated inputs, outside the sample-index range so
/// generated artifacts never share a stream with certification samples.
const KERNEL_TAG: u64 = (1 << 40) + 1;
const SHALLOW_TAG: u64 = (1 << 40) + 2;

#[derive(Parser)]
#[command(
    name = "conv-lower",
    version,
    about = "Lower wide convolutions to exact 3x3 cascades and build deep ReLU nets \
             reproducing shallow ones, with certification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; a `--spec` file supplies defaults for
/// whatever is omitted, and flags win over spec fields.
#[derive(Args, Debug, Default)]
struct SharedArgs {
    /// JSON job spec supplying defaults for omitted flags.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Grid side length d.
    #[arg(long)]
    d: Option<usize>,
    /// Padding mode: periodic | constant | constant:<a> | reflect.
    #[arg(long)]
    pad: Option<String>,
    /// Master random seed; all randomness derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of random certification samples (corner probes are added).
    #[arg(long)]
    samples: Option<usize>,
    /// Relative-error tolerance for certification verdicts.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Input-box radius.
    #[arg(long)]
    m_omega: Option<f64>,
    /// Primary output artifact path (plan or network JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report artifact path (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Split a wide kernel into its exact 3x3 cascade and audit the plan.
    Decompose {
        #[command(flatten)]
        shared: SharedArgs,
        /// Wide-kernel JSON file; omitted = random 1->1 kernel from --k.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Half-width of the generated kernel when --input is omitted.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Decompose, audit, and certify the cascade against the wide
    /// convolution on random inputs.
    Lower {
        #[command(flatten)]
        shared: SharedArgs,
        /// Wide-kernel JSON file; omitted = random 1->1 kernel from --k.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Half-width of the generated kernel when --input is omitted.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Construct a deep net (classic | resnet | preact | mgnet) that
    /// reproduces a shallow source net, and certify it.
    Build {
        /// Architecture: classic | resnet | preact | mgnet.
        arch: String,
        #[command(flatten)]
        shared: SharedArgs,
        /// Shallow-net JSON file; omitted = random net from --N and --seed.
        #[arg(long)]
        shallow: Option<PathBuf>,
        /// Hidden units of the generated source when --shallow is omitted.
        #[arg(long = "N")]
        n: Option<usize>,
        /// Skip-projection kernels for residual nets: JSON array of
        /// [cin, cout, 1, 1] tensors, one per block.
        #[arg(long)]
        skips: Option<PathBuf>,
    },
    /// Certify a deep-net file against a shallow-net file.
    Verify {
        #[command(flatten)]
        shared: SharedArgs,
        /// Deep-net JSON file.
        #[arg(long)]
        net: Option<PathBuf>,
        /// Shallow-net JSON file.
        #[arg(long)]
        shallow: Option<PathBuf>,
    },
    /// Parameter accounting for (d, N), optionally against a deep-net file.
    Count {
        #[command(flatten)]
        shared: SharedArgs,
        /// Hidden units of the shallow source.
        #[arg(long = "N")]
        n: Option<usize>,
        /// Deep-net JSON file to tally instead of the closed-form schedule.
        #[arg(long)]
        net: Option<PathBuf>,
    },
    /// Demonstrate that the cascade identity fails under reflection
    /// padding while the periodic control holds.
    ProbePadding {
        #[command(flatten)]
        shared: SharedArgs,
        /// Wide-kernel JSON file; omitted = random 1->1 kernel from --k.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Half-width of the generated kernel when --input is omitted.
        #[arg(long)]
        k: Option<usize>,
    },
}

/// Spec-file counterpart of the flag set. Unknown fields are rejected so a
/// typo in a spec cannot silently fall back to a default.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct JobSpec {
    input: Option<PathBuf>,
    shallow: Option<PathBuf>,
    net: Option<PathBuf>,
    skips: Option<PathBuf>,
    out: Option<PathBuf>,
    report: Option<PathBuf>,
    d: Option<usize>,
    k: Option<usize>,
    #[serde(rename = "N")]
    n: Option<usize>,
    m_omega: Option<f64>,
    pad: Option<String>,
    seed: Option<u64>,
    samples: Option<usize>,
    tolerance: Option<f64>,
}

/// Fully resolved job settings: flags override spec fields, spec fields
/// override defaults.
struct Settings {
    d: Option<usize>,
    k: Option<usize>,
    n: Option<usize>,
    pad: PaddingMode,
    seed: u64,
    samples: usize,
    tolerance: Option<f64>,
    m_omega: f64,
    input: Option<PathBuf>,
    shallow: Option<PathBuf>,
    net: Option<PathBuf>,
    skips: Option<PathBuf>,
    out: Option<PathBuf>,
    report: Option<PathBuf>,
}

impl Settings {
    fn resolve(shared: SharedArgs) -> Result<Settings, RunError> {
        let spec: JobSpec = match &shared.spec {
            Some(path) => read_json(path)?,
            None => JobSpec::default(),
        };
        let pad_text =
            shared.pad.or(spec.pad).unwrap_or_else(|| "periodic".to_string());
        let pad = parse_pad_flag(&pad_text)?;
        let m_omega = shared.m_omega.or(spec.m_omega).unwrap_or(1.0);
        if !(m_omega > 0.0 && m_omega.is_finite()) {
            return Err(RunError::Usage(format!(
                "--m-omega must be positive and finite, got {m_omega}"
            )));
        }
        Ok(Settings {
            d: shared.d.or(spec.d),
            k: spec.k,
            n: spec.n,
            pad,
            seed: shared.seed.or(spec.seed).unwrap_or(0),
            samples: shared.samples.or(spec.samples).unwrap_or(100),
            tolerance: shared.tolerance.or(spec.tolerance),
            m_omega,
            input: spec.input,
            shallow: spec.shallow,
            net: spec.net,
            skips: spec.skips,
            out: shared.out.or(spec.out),
            report: shared.report.or(spec.report),
        })
    }

    fn need_d(&self) -> Result<usize, RunError> {
        self.d.ok_or_else(|| RunError::Usage("--d is required".to_string()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version are successful outputs; everything else is
            // a usage error under the CI contract.
            return if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{err}");
                ExitCode::from(EXIT_PASS as u8)
            } else {
                eprint!("{err}");
                ExitCode::from(64)
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}

fn run(cli: Cli) -> Result<i32, RunError> {
    init_thread_pool()?;
    match cli.command {
        Command::Decompose { shared, input, k } => cmd_decompose(shared, input, k, false),
        Command::Lower { shared, input, k } => cmd_decompose(shared, input, k, true),
        Command::Build { arch, shared, shallow, n, skips } => {
            cmd_build(&arch, shared, shallow, n, skips)
        }
        Command::Verify { shared, net, shallow } => cmd_verify(shared, net, shallow),
        Command::Count { shared, n, net } => cmd_count(shared, n, net),
        Command::ProbePadding { shared, input, k } => cmd_probe(shared, input, k),
    }
}

/// Loads the wide kernel from a file, or draws a random one from the job
/// seed when no file is given.
fn load_kernel(
    settings: &Settings,
    input: Option<PathBuf>,
    k_flag: Option<usize>,
) -> Result<Kernel4, RunError> {
    let input = input.or_else(|| settings.input.clone());
    match input {
        Some(path) => {
            let dto: TensorJson = read_json(&path)?;
            Ok(dto.to_kernel()?)
        }
        None => {
            let k = k_flag
                .or(settings.k)
                .ok_or_else(|| RunError::Usage("--input or --k is required".to_string()))?;
            Ok(rng::kernel_uniform(rng::derive(settings.seed, KERNEL_TAG), 1, 1, k, 1.0))
        }
    }
}

fn cmd_decompose(
    shared: SharedArgs,
    input: Option<PathBuf>,
    k_flag: Option<usize>,
    certify: bool,
) -> Result<i32, RunError> {
    let settings = Settings::resolve(shared)?;
    let d = settings.need_d()?;
    let kernel = load_kernel(&settings, input, k_flag)?;
    let plan = lower_kernel(&kernel, d, settings.pad)?;
    let audit = audit_plan(&plan)?;
    if let Some(path) = &settings.out {
        write_json(path, &PlanJson::from_plan(&plan))?;
    }

    if !certify {
        if let Some(path) = &settings.report {
            write_json(path, &AuditJson::from_audit(&audit))?;
        }
        println!(
            "decompose: k={} d={} pad={} widths={:?} audit=pass{}",
            plan.k,
            d,
            pad_label(settings.pad),
            audit.widths,
            artifact_note(&settings.out, &None),
        );
        return Ok(EXIT_PASS);
    }

    // Certify the cascade against the independent oracle on the sample box.
    let tolerance = settings.tolerance.unwrap_or(1e-12);
    let cfg = CertifyConfig {
        channels: 1,
        d,
        box_radius: settings.m_omega,
        samples: settings.samples,
        seed: settings.seed,
        tolerance,
        pads: vec![pad_label(settings.pad)],
    };
    let mut max_abs: f64 = 0.0;
    let mut max_rel: f64 = 0.0;
    for i in 0..cfg.samples + 3 {
        let x = certify_input(&cfg, i);
        let got = plan.apply(&x, settings.pad)?;
        let want = oracle_conv(&kernel, &x, settings.pad)?;
        for (a, b) in got.data().iter().zip(want.data()) {
            let abs = (a - b).abs();
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(abs / (1.0 + b.abs()));
        }
    }
    let verdict = if max_rel <= tolerance { Verdict::Pass } else { Verdict::Fail };
    let report = EquivalenceReport {
        samples: cfg.samples + 3,
        max_abs_err: max_abs,
        max_rel_err: max_rel,
        linearity_violations: 0,
        tolerance,
        seed: settings.seed,
        pads: cfg.pads.clone(),
        verdict,
    };
    if let Some(path) = &settings.report {
        write_json(path, &ReportJson::from_report(&report))?;
    }
    println!(
        "lower: k={} d={} pad={} widths={:?} audit=pass max_rel_err={:.3e} verdict={}{}",
        plan.k,
        d,
        pad_label(settings.pad),
        audit.widths,
        report.max_rel_err,
        report.verdict.as_str(),
        artifact_note(&settings.out, &settings.report),
    );
    Ok(verdict_code(report.verdict))
}

/// Loads the shallow source net from a file, or draws a random one from
/// the job seed; returns the net and the grid side it lives on.
fn load_shallow(
    settings: &Settings,
    shallow: Option<PathBuf>,
    n_flag: Option<usize>,
) -> Result<(ShallowNet, usize), RunError> {
    let shallow = shallow.or_else(|| settings.shallow.clone());
    match shallow {
        Some(path) => {
            let dto: ShallowJson = read_json(&path)?;
            let net = dto.to_net()?;
            let d = net.grid_size()?;
            if let Some(flag_d) = settings.d {
                if flag_d != d {
                    return Err(RunError::Usage(format!(
                        "--d {flag_d} does not match the shallow net's grid ({d})"
                    )));
                }
            }
            Ok((net, d))
        }
        None => {
            let d = settings.need_d()?;
            let n = n_flag
                .or(settings.n)
                .ok_or_else(|| RunError::Usage("--shallow or --N is required".to_string()))?;
            if n == 0 {
                return Err(RunError::Usage("--N must be at least 1".to_string()));
            }
            Ok((rng::shallow_uniform(rng::derive(settings.seed, SHALLOW_TAG), n, d, settings.m_omega), d))
        }
    }
}

/// Certifies `net` against its shallow source on the source's box, in
/// parallel, monitoring certified pre-activations.
fn certify_net(
    net: &DeepNet,
    shallow: &ShallowNet,
    d: usize,
    settings: &Settings,
) -> Result<EquivalenceReport, RunError> {
    let cfg = CertifyConfig {
        channels: 1,
        d,
        box_radius: shallow.box_radius,
        samples: settings.samples,
        seed: settings.seed,
        tolerance: settings.tolerance.unwrap_or(1e-8),
        pads: vec![pad_label(net.pad)],
    };
    let candidate = |x: &Tensor3| net.forward(x);
    let reference = |x: &Tensor3| shallow.eval_tensor(x);
    let monitor = |x: &Tensor3| net.forward_traced(x).map(|t| t.min_certified_preact);
    Ok(certify_parallel(&candidate, &reference, Some(&monitor), &cfg)?)
}

fn cmd_build(
    arch_name: &str,
    shared: SharedArgs,
    shallow: Option<PathBuf>,
    n_flag: Option<usize>,
    skips: Option<PathBuf>,
) -> Result<i32, RunError> {
    let settings = Settings::resolve(shared)?;
    let arch = Architecture::parse(arch_name).ok_or_else(|| {
        RunError::Usage(format!(
            "unknown architecture '{arch_name}' (expected classic, resnet, preact or mgnet)"
        ))
    })?;
    let (source, d) = load_shallow(&settings, shallow, n_flag)?;

    let skips = match skips.or_else(|| settings.skips.clone()) {
        Some(path) => {
            if arch == Architecture::Classic {
                return Err(RunError::Usage(
                    "--skips only applies to residual architectures".to_string(),
                ));
            }
            let dtos: Vec<TensorJson> = read_json(&path)?;
            Some(dtos.iter().map(TensorJson::to_kernel).collect::<conv_lower_core::Result<Vec<_>>>()?)
        }
        None => None,
    };

    let net = match arch {
        Architecture::Classic => build_classic(&source, d, settings.pad)?,
        Architecture::ResNet => build_resnet(&source, d, settings.pad, skips)?,
        Architecture::PreAct => build_preact_resnet(&source, d, settings.pad, skips)?,
        Architecture::MgNet => build_mgnet(&source, d, settings.pad, skips)?,
    };
    if let Some(path) = &settings.out {
        write_json(path, &DeepJson::from_net(&net))?;
    }

    let report = certify_net(&net, &source, d, &settings)?;
    if let Some(path) = &settings.report {
        write_json(path, &ReportJson::from_report(&report))?;
    }
    println!(
        "build {}: d={} N={} depth={} widths={:?} max_rel_err={:.3e} violations={} verdict={}{}",
        arch.name(),
        d,
        source.hidden,
        net.depth(),
        net.width_schedule(),
        report.max_rel_err,
        report.linearity_violations,
        report.verdict.as_str(),
        artifact_note(&settings.out, &settings.report),
    );
    Ok(verdict_code(report.verdict))
}

fn cmd_verify(
    shared: SharedArgs,
    net_path: Option<PathBuf>,
    shallow_path: Option<PathBuf>,
) -> Result<i32, RunError> {
    let settings = Settings::resolve(shared)?;
    let net_path = net_path
        .or_else(|| settings.net.clone())
        .ok_or_else(|| RunError::Usage("--net is required".to_string()))?;
    let dto: DeepJson = read_json(&net_path)?;
    let net = dto.to_net()?;
    let (source, d) = load_shallow(&settings, shallow_path, None)?;

    let report = certify_net(&net, &source, d, &settings)?;
    if let Some(path) = &settings.report {
        write_json(path, &ReportJson::from_report(&report))?;
    }
    println!(
        "verify: arch={} d={} samples={} max_rel_err={:.3e} violations={} verdict={}{}",
        net.arch.name(),
        d,
        report.samples,
        report.max_rel_err,
        report.linearity_violations,
        report.verdict.as_str(),
        artifact_note(&None, &settings.report),
    );
    Ok(verdict_code(report.verdict))
}

fn cmd_count(
    shared: SharedArgs,
    n_flag: Option<usize>,
    net_path: Option<PathBuf>,
) -> Result<i32, RunError> {
    let settings = Settings::resolve(shared)?;
    let d = settings.need_d()?;
    let n = n_flag
        .or(settings.n)
        .ok_or_else(|| RunError::Usage("--N is required".to_string()))?;

    let count = match net_path.or_else(|| settings.net.clone()) {
        Some(path) => {
            let dto: DeepJson = read_json(&path)?;
            count_params(&dto.to_net()?, d, n)
        }
        None => {
            // Closed-form classic schedule; no per-layer breakdown.
            let deep_count = classic_schedule_count(d, n);
            let bound = param_bound(d, n);
            ParamCount {
                shallow_count: shallow_param_count(n, d),
                deep_count,
                bound,
                within_bound: deep_count <= bound,
                per_layer: Vec::<LayerParams>::new(),
            }
        }
    };
    if let Some(path) = &settings.report {
        write_json(path, &CountJson::from_count(&count))?;
    }
    println!(
        "count: d={} N={} shallow={} deep={} bound={} within_bound={}{}",
        d,
        n,
        count.shallow_count,
        count.deep_count,
        count.bound,
        count.within_bound,
        artifact_note(&None, &settings.report),
    );
    Ok(if count.within_bound { EXIT_PASS } else { EXIT_FAIL })
}

fn cmd_probe(
    shared: SharedArgs,
    input: Option<PathBuf>,
    k_flag: Option<usize>,
) -> Result<i32, RunError> {
    let settings = Settings::resolve(shared)?;
    let d = settings.need_d()?;
    let kernel = load_kernel(&settings, input, k_flag)?;
    let probe = negative_padding_probe(&kernel, d, settings.seed, settings.samples)?;
    let confirmed = probe.confirms_sensitivity();
    if let Some(path) = &settings.report {
        write_json(path, &ProbeJson::from_probe(&probe))?;
    }
    println!(
        "probe-padding: d={} k={} border_err={:.3e} interior_err={:.3e} periodic_err={:.3e} \
         rejects_reflect={} confirmed={}{}",
        probe.d,
        probe.k,
        probe.border_max_err,
        probe.interior_max_err,
        probe.periodic_max_err,
        probe.rejects_reflect,
        confirmed,
        artifact_note(&None, &settings.report),
    );
    Ok(if confirmed { EXIT_PASS } else { EXIT_FAIL })
}

/// Suffix naming the artifacts a command wrote, for the one-line summary.
fn artifact_note(out: &Option<PathBuf>, report: &Option<PathBuf>) -> String {
    let mut parts = Vec::new();
    if let Some(path) = out {
        parts.push(format!("out={}", display_path(path)));
    }
    if let Some(path) = report {
        parts.push(format!("report={}", display_path(path)));
    }
    if parts.is_empty() {
        String::new()
    } else {
        format!(" [{}]", parts.join(" "))
    }
}

fn display_path(path: &Path) -> String {
    path.display().to_string()
}
