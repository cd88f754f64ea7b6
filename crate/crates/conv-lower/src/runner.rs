//! Job execution support: error-to-exit-code policy, thread-pool setup,
//! a parallel certification driver, and JSON file IO.
//!
//! Exit codes follow the CI contract: 0 when every verdict passes, 1 when
//! a certification fails (or a construction refuses to certify itself),
//! 2 when a structural audit fails, 64 for usage errors — unparseable
//! flags, malformed files, impossible shapes.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use conv_lower_core::harness::{
    certify_input, sample_errors, CertifyConfig, EquivalenceReport, Verdict, PREACT_TOLERANCE,
};
use conv_lower_core::{Error as CoreError, Result as CoreResult, Tensor3};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::json::to_canonical_json;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_AUDIT: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

// =========================================================================
// Errors and exit codes
// =========================================================================

/// Anything that can abort a job, with enough context to name the
/// offending file or field.
#[derive(Debug)]
pub enum RunError {
    /// Propagated library error.
    Core(CoreError),
    /// Filesystem failure on the given path.
    Io(PathBuf, std::io::Error),
    /// Malformed JSON in the given file.
    Parse(PathBuf, serde_json::Error),
    /// Bad or missing flag/spec field.
    Usage(String),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Core(e) => write!(f, "{e}"),
            RunError::Io(path, e) => write!(f, "{}: {e}", path.display()),
            RunError::Parse(path, e) => write!(f, "{}: {e}", path.display()),
            RunError::Usage(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<CoreError> for RunError {
    fn from(e: CoreError) -> Self {
        RunError::Core(e)
    }
}

/// Maps an aborting error to its exit code: structural audit failures get
/// their dedicated code, a construction that failed its own soundness
/// cross-check is a verification failure, and everything else — bad flags,
/// bad files, bad shapes — is a usage error.
pub fn exit_code(err: &RunError) -> i32 {
    match err {
        RunError::Core(CoreError::AuditFailure(_)) => EXIT_AUDIT,
        RunError::Core(CoreError::SoundnessFailure { .. }) => EXIT_FAIL,
        _ => EXIT_USAGE,
    }
}

/// Exit code for a completed run: 0 on pass, 1 on fail.
pub fn verdict_code(verdict: Verdict) -> i32 {
    match verdict {
        Verdict::Pass => EXIT_PASS,
        Verdict::Fail => EXIT_FAIL,
    }
}

// =========================================================================
// Thread pool
// =========================================================================

/// Environment variable capping harness parallelism; 0 or unset means one
/// worker per available core.
pub const THREADS_VAR: &str = "CONV_LOWER_THREADS";

/// Configures the global worker pool from [`THREADS_VAR`] and returns the
/// effective worker count. Safe to call more than once; later calls leave
/// the pool unchanged.
pub fn init_thread_pool() -> Result<usize, RunError> {
    let requested = match std::env::var(THREADS_VAR) {
        Ok(text) => text
            .trim()
            .parse::<usize>()
            .map_err(|_| RunError::Usage(format!("{THREADS_VAR}='{text}' is not a thread count")))?,
        Err(_) => 0,
    };
    if requested > 0 {
        // Ignore the error from a pool that is already running.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(requested).build_global();
    }
    Ok(rayon::current_num_threads())
}

// =========================================================================
// Parallel certification
// =========================================================================

/// A scalar evaluator that is safe to share across the worker pool.
pub type SyncEvalFn<'a> = dyn Fn(&Tensor3) -> CoreResult<f64> + Sync + 'a;

/// Parallel twin of `harness::certify_equivalence`: evaluates the same
/// seeded sample set across the worker pool and reduces in index order, so
/// the report is identical to the serial one regardless of scheduling.
pub fn certify_parallel(
    candidate: &SyncEvalFn<'_>,
    reference: &SyncEvalFn<'_>,
    monitor: Option<&SyncEvalFn<'_>>,
    cfg: &CertifyConfig,
) -> CoreResult<EquivalenceReport> {
    let total = cfg.samples + 3;
    let rows: CoreResult<Vec<(f64, f64, bool)>> = (0..total)
        .into_par_iter()
        .map(|i| {
            let x = certify_input(cfg, i);
            let (abs, rel) = sample_errors(candidate, reference, &x)?;
            let violated = match monitor {
                Some(mon) => mon(&x)? < -PREACT_TOLERANCE,
                None => false,
            };
            Ok((abs, rel, violated))
        })
        .collect();
    let mut max_abs: f64 = 0.0;
    let mut max_rel: f64 = 0.0;
    let mut violations = 0usize;
    for (abs, rel, violated) in rows? {
        max_abs = max_abs.max(abs);
        max_rel = max_rel.max(rel);
        violations += usize::from(violated);
    }
    let verdict =
        if max_rel <= cfg.tolerance && violations == 0 { Verdict::Pass } else { Verdict::Fail };
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

// =========================================================================
// File IO
// =========================================================================

/// Reads and parses one JSON artifact.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, RunError> {
    let text = fs::read_to_string(path).map_err(|e| RunError::Io(path.to_path_buf(), e))?;
    serde_json::from_str(&text).map_err(|e| RunError::Parse(path.to_path_buf(), e))
}

/// Writes one artifact in canonical JSON form.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let text = to_canonical_json(value);
    let mut file = fs::File::create(path).map_err(|e| RunError::Io(path.to_path_buf(), e))?;
    file.write_all(text.as_bytes()).map_err(|e| RunError::Io(path.to_path_buf(), e))
}
