// SPDX-License-Identifier: Apache-2.0

//! Adapter for external synthesis and equivalence toolchains.
//!
//! Commands are shell templates with `{design_dir}`, `{golden_dir}`, `{top}`,
//! `{clock_ns}` and `{work_dir}` placeholders. Each invocation runs in its own
//! temporary directory; the design is written there as `<top>.rtl`. Metrics
//! are pulled out of stdout (or a declared metrics file) with the configured
//! regexes and nothing else is read from the tool output.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use crate::rtl::RtlDesign;
use crate::timing::{TimingPath, TimingReport};

use super::{Backend, BackendError, PpaMetrics, SecMode, SecOutcome};

pub const DEFAULT_TIMEOUT_S: u64 = 3600;
const STDERR_TAIL: usize = 2000;

/// Regexes for the three metrics. The value is taken from the named group
/// `value` if present, otherwise from group 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricRules {
    pub wns: String,
    pub tns: String,
    pub area: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalConfig {
    pub synth_command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sec_command: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
    pub metrics: MetricRules,
    /// File (relative to the work dir) the metric regexes run on instead of stdout.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics_file: Option<String>,
    /// A timing report already in the canonical JSON schema.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing_report_file: Option<String>,
    /// Regex with named groups `startpoint`, `endpoint` and `slack`, applied
    /// line by line to the metrics text to build endpoint paths.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_pattern: Option<String>,
    /// SEC passes when this matches stdout; without it, exit status 0 passes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sec_pass_pattern: Option<String>,
    /// Extra files captured after each run; a missing one is an error.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub report_files: Vec<String>,
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_S
}

impl ExternalConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        let patterns = [
            Some(&self.metrics.wns),
            Some(&self.metrics.tns),
            Some(&self.metrics.area),
            self.path_pattern.as_ref(),
            self.sec_pass_pattern.as_ref(),
        ];
        for p in patterns.into_iter().flatten() {
            Regex::new(p).map_err(|e| BackendError::Config(format!("bad pattern `{p}`: {e}")))?;
        }
        if self.timeout_s == 0 {
            return Err(BackendError::Config("timeout_s must be positive".into()));
        }
        Ok(())
    }
}

/// Captured result of one external command.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExternalOutput {
    pub status: i32,
    pub stdout: String,
    pub stderr: String,
    /// Declared report files, keyed by their configured relative path.
    pub files: BTreeMap<String, String>,
}

/// Replaces `{key}` placeholders; any placeholder left over is an error.
pub fn substitute(template: &str, subs: &BTreeMap<String, String>) -> Result<String, BackendError> {
    let placeholder = Regex::new(r"\{([A-Za-z_][A-Za-z0-9_]*)\}").unwrap();
    let mut missing = Vec::new();
    let out = placeholder.replace_all(template, |c: &regex::Captures| match subs.get(&c[1]) {
        Some(v) => v.clone(),
        None => {
            missing.push(c[1].to_string());
            c[0].to_string()
        }
    });
    if !missing.is_empty() {
        return Err(BackendError::Config(format!(
            "unresolved placeholder(s) {} in `{template}`",
            missing
                .iter()
                .map(|m| format!("{{{m}}}"))
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    Ok(out.into_owned())
}

fn tail(s: &str, n: usize) -> String {
    let start = s.len().saturating_sub(n);
    let start = (start..=s.len())
        .find(|&i| s.is_char_boundary(i))
        .unwrap_or(s.len());
    s[start..].trim().to_string()
}

/// Runs a command in `work_dir` without judging its exit status.
fn run_raw(
    command: &str,
    work_dir: &Path,
    timeout_s: u64,
) -> Result<(i32, String, String), BackendError> {
    let out_path = work_dir.join(".stdout");
    let err_path = work_dir.join(".stderr");
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .current_dir(work_dir)
        .stdin(Stdio::null())
        .stdout(File::create(&out_path)?)
        .stderr(File::create(&err_path)?)
        .spawn()?;
    let status = match child.wait_timeout(Duration::from_secs(timeout_s))? {
        Some(s) => s,
        None => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(BackendError::Timeout(timeout_s));
        }
    };
    let stdout = String::from_utf8_lossy(&fs::read(&out_path)?).into_owned();
    let stderr = String::from_utf8_lossy(&fs::read(&err_path)?).into_owned();
    Ok((status.code().unwrap_or(-1), stdout, stderr))
}

/// Substitutes `template`, runs it through `sh -c` in `work_dir` and captures
/// stdout, stderr and the declared report files. A nonzero exit is an error
/// carrying the tail of stderr.
pub fn run_external(
    template: &str,
    substitutions: &BTreeMap<String, String>,
    work_dir: &Path,
    timeout_s: u64,
    report_files: &[String],
) -> Result<ExternalOutput, BackendError> {
    let command = substitute(template, substitutions)?;
    let (status, stdout, stderr) = run_raw(&command, work_dir, timeout_s)?;
    if status != 0 {
        return Err(BackendError::ExternalFailure {
            status,
            stderr_tail: tail(&stderr, STDERR_TAIL),
        });
    }
    let files = capture(work_dir, report_files)?;
    Ok(ExternalOutput {
        status,
        stdout,
        stderr,
        files,
    })
}

fn capture(
    work_dir: &Path,
    report_files: &[String],
) -> Result<BTreeMap<String, String>, BackendError> {
    report_files
        .iter()
        .map(|rel| {
            let text = fs::read_to_string(work_dir.join(rel))
                .map_err(|_| BackendError::MissingReport(rel.clone()))?;
            Ok((rel.clone(), text))
        })
        .collect()
}

fn extract(pattern: &str, text: &str, what: &str) -> Result<f64, BackendError> {
    let re = Regex::new(pattern).map_err(|e| BackendError::Config(e.to_string()))?;
    let caps = re.captures(text).ok_or_else(|| {
        BackendError::Extraction(format!("{what} pattern `{pattern}` did not match"))
    })?;
    let raw = caps.name("value").or_else(|| caps.get(1)).ok_or_else(|| {
        BackendError::Extraction(format!("{what} pattern `{pattern}` has no capture group"))
    })?;
    raw.as_str().trim().parse().map_err(|_| {
        BackendError::Extraction(format!("{what}: `{}` is not a number", raw.as_str()))
    })
}

/// Backend that drives an external toolchain through shell templates.
#[derive(Clone, Debug)]
pub struct ExternalBackend {
    pub config: ExternalConfig,
    pub clock_ns: f64,
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Result<Self, BackendError> {
        Ok(Workspace {
            dir: tempfile::Builder::new().prefix("rtlopt-ext-").tempdir()?,
        })
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn write_design(&self, sub: &str, design: &RtlDesign) -> Result<PathBuf, BackendError> {
        let dir = self.path().join(sub);
        fs::create_dir_all(&dir)?;
        fs::write(dir.join(design.file_label()), &design.source)?;
        Ok(dir)
    }
}

impl ExternalBackend {
    pub fn new(config: ExternalConfig, clock_ns: f64) -> Self {
        ExternalBackend { config, clock_ns }
    }

    fn substitutions(&self, ws: &Workspace, design: &RtlDesign) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("top".into(), design.name.clone());
        m.insert("clock_ns".into(), format!("{}", self.clock_ns));
        m.insert("work_dir".into(), ws.path().display().to_string());
        m
    }

    fn timing_report(
        &self,
        ws: &Workspace,
        text: &str,
        metrics: &PpaMetrics,
        top: &str,
    ) -> Result<TimingReport, BackendError> {
        if let Some(rel) = &self.config.timing_report_file {
            let raw = fs::read_to_string(ws.path().join(rel))
                .map_err(|_| BackendError::MissingReport(rel.clone()))?;
            let report: TimingReport = serde_json::from_str(&raw)
                .map_err(|e| BackendError::Extraction(format!("{rel}: {e}")))?;
            let report = TimingReport::new(report.clock_ns, report.endpoints);
            report
                .validate()
                .map_err(|e| BackendError::Extraction(format!("{rel}: {e}")))?;
            return Ok(report);
        }
        let mut paths = Vec::new();
        if let Some(p) = &self.config.path_pattern {
            let re = Regex::new(p).map_err(|e| BackendError::Config(e.to_string()))?;
            for c in re.captures_iter(text) {
                let get = |n: &str| {
                    c.name(n).map(|m| m.as_str().to_string()).ok_or_else(|| {
                        BackendError::Config(format!("path_pattern lacks group `{n}`"))
                    })
                };
                let slack = get("slack")?;
                paths.push(TimingPath {
                    startpoint: get("startpoint")?,
                    endpoint: get("endpoint")?,
                    slack_ns: slack.parse().map_err(|_| {
                        BackendError::Extraction(format!("slack `{slack}` is not a number"))
                    })?,
                    stages: vec![],
                });
            }
        }
        if paths.is_empty() {
            // No path detail available: one synthetic endpoint at WNS.
            paths.push(TimingPath {
                startpoint: top.to_string(),
                endpoint: top.to_string(),
                slack_ns: metrics.wns,
                stages: vec![],
            });
        }
        let mut seen = std::collections::BTreeSet::new();
        paths.retain(|p| seen.insert(p.endpoint.clone()));
        Ok(TimingReport::new(self.clock_ns, paths))
    }
}

impl Backend for ExternalBackend {
    fn id(&self) -> &str {
        "external"
    }

    fn clock_ns(&self) -> f64 {
        self.clock_ns
    }

    fn synthesize(&self, design: &RtlDesign) -> Result<(PpaMetrics, TimingReport), BackendError> {
        let ws = Workspace::new()?;
        let dir = ws.write_design("design", design)?;
        let mut subs = self.substitutions(&ws, design);
        subs.insert("design_dir".into(), dir.display().to_string());
        let out = run_external(
            &self.config.synth_command,
            &subs,
            ws.path(),
            self.config.timeout_s,
            &self.config.report_files,
        )?;
        let text = match &self.config.metrics_file {
            Some(rel) => fs::read_to_string(ws.path().join(rel))
                .map_err(|_| BackendError::MissingReport(rel.clone()))?,
            None => out.stdout.clone(),
        };
        let r = &self.config.metrics;
        let metrics = PpaMetrics {
            wns: extract(&r.wns, &text, "wns")?,
            tns: extract(&r.tns, &text, "tns")?,
            area: extract(&r.area, &text, "area")?,
        };
        metrics.validate()?;
        let report = self.timing_report(&ws, &text, &metrics, &design.name)?;
        Ok((metrics, report))
    }

    fn check_equivalence(
        &self,
        golden: &RtlDesign,
        candidate: &RtlDesign,
    ) -> Result<SecOutcome, BackendError> {
        super::sec::check_interface(golden, candidate)?;
        let Some(template) = &self.config.sec_command else {
            return Err(BackendError::Config(
                "backend.external.sec_command is not set".into(),
            ));
        };
        let ws = Workspace::new()?;
        let dir = ws.write_design("design", candidate)?;
        let gdir = ws.write_design("golden", golden)?;
        let mut subs = self.substitutions(&ws, candidate);
        subs.insert("design_dir".into(), dir.display().to_string());
        subs.insert("golden_dir".into(), gdir.display().to_string());
        let command = substitute(template, &subs)?;
        let (status, stdout, stderr) = match run_raw(&command, ws.path(), self.config.timeout_s) {
            Ok(r) => r,
            Err(BackendError::Timeout(s)) => {
                return Ok(SecOutcome {
                    pass: false,
                    mode: SecMode::External,
                    counterexample: None,
                    note: Some(format!("sec timed out after {s} s; counted as a failure")),
                })
            }
            Err(e) => return Err(e),
        };
        let pass = match &self.config.sec_pass_pattern {
            Some(p) => Regex::new(p)
                .map_err(|e| BackendError::Config(e.to_string()))?
                .is_match(&stdout),
            None => status == 0,
        };
        Ok(SecOutcome {
            pass,
            mode: SecMode::External,
            counterexample: None,
            note: (!pass).then(|| format!("exit {status}: {}", tail(&stderr, 500))),
        })
    }
}
