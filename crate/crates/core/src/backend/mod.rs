// SPDX-License-Identifier: Apache-2.0

//! Evaluation backends: synthesis (timing + area) and equivalence checking.
//!
//! The built-in backend is a deterministic oracle over RTL-lite. The external
//! backend shells out to a user-supplied toolchain and only extracts numbers
//! from what the tools print; it never interprets reports beyond that.

pub mod external;
pub mod sec;
pub mod sta;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rtl::{RtlDesign, RtlError};
use crate::timing::TimingReport;

pub use external::{run_external, ExternalBackend, ExternalConfig, ExternalOutput, MetricRules};
pub use sec::{Counterexample, SecOutcome, SecSettings};

pub const BUILTIN_CLOCK_NS: f64 = 0.5;
pub const EXTERNAL_CLOCK_NS: f64 = 0.1;

/// Timing and area of one synthesized design. Slacks in ns, area in units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpaMetrics {
    pub wns: f64,
    pub tns: f64,
    pub area: f64,
}

impl PpaMetrics {
    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |msg: &str| Err(BackendError::InvalidMetrics(format!("{msg}: {self:?}")));
        if !(self.wns.is_finite() && self.tns.is_finite() && self.area.is_finite()) {
            return bad("non-finite value");
        }
        if self.tns > 0.0 {
            return bad("tns must be <= 0");
        }
        if self.wns <= 0.0 && self.tns > self.wns + 1e-9 {
            return bad("tns must not exceed wns");
        }
        if self.wns > 0.0 && self.tns != 0.0 {
            return bad("met timing implies tns = 0");
        }
        if self.area < 0.0 {
            return bad("area must be >= 0");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SecMode {
    Exhaustive,
    BoundedSampled,
    External,
    SkippedBaseline,
}

/// Everything the evaluation step reports for one design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub metrics: PpaMetrics,
    pub sec_pass: bool,
    pub sec_mode: SecMode,
    pub timing_report: TimingReport,
    pub backend_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Counterexample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Not persisted: trajectories must be byte-stable across runs.
    #[serde(skip)]
    pub wall_time: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Builtin,
    External,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(default)]
    pub kind: BackendKind,
    /// Defaults to 0.5 ns for the built-in backend and 0.1 ns for external flows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock_ns: Option<f64>,
    #[serde(default = "default_enum_bits")]
    pub sec_enumeration_bits: u32,
    #[serde(default = "default_samples")]
    pub sec_samples: u64,
    #[serde(default = "default_seed")]
    pub sec_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external: Option<ExternalConfig>,
}

fn default_enum_bits() -> u32 {
    sec::DEFAULT_ENUMERATION_BITS
}
fn default_samples() -> u64 {
    sec::DEFAULT_SAMPLES
}
fn default_seed() -> u64 {
    sec::DEFAULT_SEED
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Builtin,
            clock_ns: None,
            sec_enumeration_bits: default_enum_bits(),
            sec_samples: default_samples(),
            sec_seed: default_seed(),
            external: None,
        }
    }
}

impl BackendConfig {
    pub fn clock_period(&self) -> f64 {
        self.clock_ns.unwrap_or(match self.kind {
            BackendKind::Builtin => BUILTIN_CLOCK_NS,
            BackendKind::External => EXTERNAL_CLOCK_NS,
        })
    }

    pub fn sec_settings(&self) -> SecSettings {
        SecSettings {
            enumeration_bits: self.sec_enumeration_bits,
            samples: self.sec_samples,
            seed: self.sec_seed,
            ..SecSettings::default()
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let clock = self.clock_period();
        if !(clock > 0.0 && clock.is_finite()) {
            return Err(BackendError::Config(format!(
                "clock period must be positive, got {clock}"
            )));
        }
        if self.sec_enumeration_bits > 40 {
            return Err(BackendError::Config(
                "sec_enumeration_bits above 40 is not supported".into(),
            ));
        }
        match (self.kind, &self.external) {
            (BackendKind::External, None) => Err(BackendError::Config(
                "backend.kind is external but backend.external is missing".into(),
            )),
            (BackendKind::External, Some(ext)) => ext.validate(),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error(transparent)]
    Rtl(#[from] RtlError),
    #[error("port interface mismatch: {0}")]
    InterfaceMismatch(String),
    #[error("backend configuration error: {0}")]
    Config(String),
    #[error("external command exited with status {status}: {stderr_tail}")]
    ExternalFailure { status: i32, stderr_tail: String },
    #[error("external command timed out after {0} s")]
    Timeout(u64),
    #[error("metric extraction failed: {0}")]
    Extraction(String),
    #[error("missing report file `{0}`")]
    MissingReport(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("invalid metrics: {0}")]
    InvalidMetrics(String),
}

impl From<std::io::Error> for BackendError {
    fn from(e: std::io::Error) -> Self {
        BackendError::Io(e.to_string())
    }
}

/// An evaluation backend. Implementations are reentrant: concurrent calls
/// on distinct candidates are allowed.
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;

    fn clock_ns(&self) -> f64;

    fn synthesize(&self, design: &RtlDesign) -> Result<(PpaMetrics, TimingReport), BackendError>;

    fn check_equivalence(
        &self,
        golden: &RtlDesign,
        candidate: &RtlDesign,
    ) -> Result<SecOutcome, BackendError>;

    /// Synthesis plus SEC against `golden`; `None` evaluates a baseline.
    fn evaluate(
        &self,
        golden: Option<&RtlDesign>,
        design: &RtlDesign,
    ) -> Result<EvalResult, BackendError> {
        let started = Instant::now();
        let (metrics, timing_report) = self.synthesize(design)?;
        let sec = match golden {
            Some(g) => self.check_equivalence(g, design)?,
            None => SecOutcome {
                pass: true,
                mode: SecMode::SkippedBaseline,
                counterexample: None,
                note: None,
            },
        };
        Ok(EvalResult {
            metrics,
            sec_pass: sec.pass,
            sec_mode: sec.mode,
            timing_report,
            backend_id: self.id().to_string(),
            counterexample: sec.counterexample,
            note: sec.note,
            wall_time: started.elapsed().as_secs_f64(),
        })
    }
}

/// Deterministic synthesis-free oracle over RTL-lite.
#[derive(Clone, Debug)]
pub struct BuiltinBackend {
    pub clock_ns: f64,
    pub sec: SecSettings,
}

impl BuiltinBackend {
    pub fn new(clock_ns: f64) -> Self {
        BuiltinBackend {
            clock_ns,
            sec: SecSettings::default(),
        }
    }
}

impl Backend for BuiltinBackend {
    fn id(&self) -> &str {
        "builtin"
    }

    fn clock_ns(&self) -> f64 {
        self.clock_ns
    }

    fn synthesize(&self, design: &RtlDesign) -> Result<(PpaMetrics, TimingReport), BackendError> {
        if self.clock_ns.is_nan() || self.clock_ns <= 0.0 {
            return Err(BackendError::Config(format!(
                "clock period must be positive, got {}",
                self.clock_ns
            )));
        }
        Ok(sta::analyze(design, self.clock_ns))
    }

    fn check_equivalence(
        &self,
        golden: &RtlDesign,
        candidate: &RtlDesign,
    ) -> Result<SecOutcome, BackendError> {
        sec::check(golden, candidate, &self.sec)
    }
}

/// Builds the backend described by `config`.
pub fn from_config(config: &BackendConfig) -> Result<Box<dyn Backend>, BackendError> {
    config.validate()?;
    Ok(match config.kind {
        BackendKind::Builtin => Box::new(BuiltinBackend {
            clock_ns: config.clock_period(),
            sec: config.sec_settings(),
        }),
        BackendKind::External => Box::new(ExternalBackend::new(
            config.external.clone().expect("validated"),
            config.clock_period(),
        )),
    })
}

pub fn synthesize(
    design: &RtlDesign,
    config: &BackendConfig,
) -> Result<(PpaMetrics, TimingReport), BackendError> {
    from_config(config)?.synthesize(design)
}

pub fn check_equivalence(
    golden: &RtlDesign,
    candidate: &RtlDesign,
    config: &BackendConfig,
) -> Result<SecOutcome, BackendError> {
    from_config(config)?.check_equivalence(golden, candidate)
}
