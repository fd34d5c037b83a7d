// SPDX-License-Identifier: Apache-2.0

//! The closed loop: analyze the current design, propose a group of
//! rewrites, evaluate them against the original, keep the best verified one
//! and distill what was learned.
//!
//! Equivalence is always checked against the original design, never the
//! intermediate parent, so errors cannot accumulate across iterations.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backend::{self, Backend, BackendError, EvalResult, PpaMetrics};
use crate::canon;
use crate::config::{ConfigError, RunConfig};
use crate::par::{self, Exec};
use crate::proposer::{self, LlmClient, LlmSession, Proposal, Provenance, Slot};
use crate::rtl::RtlDesign;
use crate::scoring::{
    self, baseline_score, group_advantage, select_next, CandidateScore, Selection,
};
use crate::skills::{SkillError, SkillLibrary};
use crate::timing::{diagnose, select_critical_paths, BottleneckDiagnosis, TimingReport};
use crate::trajectory::{
    self, CandidateRecord, CandidateStatus, PathEvent, ProposerKind, RunState, RunStatus,
    TrajectoryError, TrajectoryStore, Transformation, BASELINE_ID,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("baseline evaluation failed: {0}")]
    Baseline(BackendError),
    #[error("run directory {0} already exists")]
    Exists(PathBuf),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Skills(#[from] SkillError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Relative change of the best design against the baseline, in percent.
/// Negative WNS/TNS changes are improvements, as are negative area changes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub wns_pct: f64,
    pub tns_pct: f64,
    pub area_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_id: String,
    pub status: RunStatus,
    pub iterations: usize,
    pub baseline: PpaMetrics,
    pub best: PpaMetrics,
    /// Candidate id of the best design, or `baseline`.
    pub best_design: String,
    pub best_design_hash: String,
    pub best_score: f64,
    pub improvement: Improvement,
    pub sec_pass_rate: f64,
    pub sec_passed: usize,
    /// Candidates that were generated, i.e. all slots minus skipped ones.
    pub candidates_evaluated: usize,
    pub convergence_steps: usize,
    /// Best-so-far score after each iteration.
    pub best_so_far: Vec<f64>,
}

/// One row of the per-iteration best-so-far series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: usize,
    pub best_wns: f64,
    pub best_tns: f64,
    pub best_area: f64,
    pub best_score: f64,
    pub sec_pass_rate_cum: f64,
}

/// Per-iteration best-so-far rows. The best design only changes on a
/// strictly lower SEC-passing score; ties keep the earlier one.
pub fn series(state: &RunState) -> Vec<SeriesRow> {
    let mut best = (0.0f64, state.baseline);
    let (mut passed, mut generated) = (0usize, 0usize);
    state
        .iterations
        .iter()
        .map(|it| {
            for c in &it.candidates {
                if c.status != CandidateStatus::Skipped {
                    generated += 1;
                }
                if !c.sec_pass() {
                    continue;
                }
                passed += 1;
                if let (Some(s), Some(e)) = (c.score, &c.eval) {
                    if s.score < best.0 {
                        best = (s.score, e.metrics);
                    }
                }
            }
            SeriesRow {
                t: it.index,
                best_wns: best.1.wns,
                best_tns: best.1.tns,
                best_area: best.1.area,
                best_score: best.0,
                sec_pass_rate_cum: ratio(passed, generated),
            }
        })
        .collect()
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl RunResult {
    /// Derives the run metrics from a trajectory.
    pub fn from_state(state: &RunState, epsilon: f64) -> RunResult {
        let mut best_id = BASELINE_ID.to_string();
        let mut best_hash = state.baseline_design.clone();
        let mut best = (0.0f64, state.baseline);
        let (mut passed, mut generated) = (0usize, 0usize);
        for c in state.iterations.iter().flat_map(|it| &it.candidates) {
            if c.status != CandidateStatus::Skipped {
                generated += 1;
            }
            if !c.sec_pass() {
                continue;
            }
            passed += 1;
            if let (Some(s), Some(e)) = (c.score, &c.eval) {
                if s.score < best.0 {
                    best = (s.score, e.metrics);
                    best_id = c.id.clone();
                    best_hash = c.design.clone().unwrap_or_default();
                }
            }
        }
        let pct = |v: f64, b: f64| scoring::normalize(v, b) * 100.0;
        RunResult {
            run_id: state.run_id.clone(),
            status: state.status,
            iterations: state.iterations.len(),
            baseline: state.baseline,
            best: best.1,
            best_design: best_id,
            best_design_hash: best_hash,
            best_score: best.0,
            improvement: Improvement {
                wns_pct: pct(best.1.wns, state.baseline.wns),
                tns_pct: pct(best.1.tns, state.baseline.tns),
                area_pct: pct(best.1.area, state.baseline.area),
            },
            sec_pass_rate: ratio(passed, generated),
            sec_passed: passed,
            candidates_evaluated: generated,
            convergence_steps: trajectory::convergence_steps(state, epsilon),
            best_so_far: trajectory::best_so_far(state),
        }
    }
}

/// What a proposer sees each iteration.
pub struct ProposeRequest<'a> {
    pub t: usize,
    pub parent: &'a RtlDesign,
    pub diagnoses: &'a [BottleneckDiagnosis],
    pub library: &'a SkillLibrary,
    pub config: &'a RunConfig,
    pub run_dir: Option<&'a Path>,
}

/// Replaces the configured proposer, e.g. in tests.
pub type ProposeHook<'a> = dyn Fn(&ProposeRequest<'_>) -> Vec<Slot> + Sync + 'a;

#[derive(Default)]
pub struct RunOptions<'a> {
    /// Root under which `<run_id>/` is created; `None` keeps the run in memory.
    pub out_root: Option<PathBuf>,
    /// Library to start from.
    pub library: SkillLibrary,
    pub proposer: Option<&'a ProposeHook<'a>>,
}

#[derive(Debug)]
pub struct RunOutput {
    pub result: RunResult,
    pub state: RunState,
    pub library: SkillLibrary,
    pub dir: Option<PathBuf>,
}

/// Deterministic run id from the design and the configuration.
pub fn run_id(design: &RtlDesign, config: &RunConfig) -> String {
    let mut h = Sha256::new();
    h.update(design.canonical_source().as_bytes());
    h.update(
        canon::to_string(config)
            .expect("config serializes")
            .as_bytes(),
    );
    format!("{}-{}", design.name, &hex::encode(h.finalize())[..12])
}

/// Evaluates candidates against `golden`, at most `limit` at once. Results
/// come back in input order; a failing or panicking evaluation only affects
/// its own entry.
pub fn evaluate_group(
    candidates: &[&RtlDesign],
    backend: &dyn Backend,
    golden: &RtlDesign,
    limit: usize,
    exec: Exec,
) -> Vec<Result<EvalResult, BackendError>> {
    par::map_limited(exec, limit, candidates, |d| {
        catch_unwind(AssertUnwindSafe(|| backend.evaluate(Some(golden), d))).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "evaluation panicked".into());
            Err(BackendError::Extraction(format!(
                "evaluation panicked: {msg}"
            )))
        })
    })
}

fn default_propose(req: &ProposeRequest<'_>, client: Option<&LlmClient>, exec: Exec) -> Vec<Slot> {
    let session = client.map(|client| LlmSession {
        client,
        transcript_dir: req.run_dir.map(|d| d.join("llm")),
        tag: format!("t{}", req.t),
        exec,
    });
    proposer::propose_group(
        req.parent,
        req.diagnoses,
        req.library,
        &req.config.proposer,
        session.as_ref(),
    )
}

fn proposer_kind(p: &Provenance) -> (ProposerKind, Option<String>, Option<String>) {
    match p {
        Provenance::SkillGuided { skill } => (ProposerKind::SkillGuided, None, Some(skill.clone())),
        Provenance::Llm { model } => (ProposerKind::Llm, Some(model.clone()), None),
        Provenance::Rule { .. } => (ProposerKind::Rule, None, None),
    }
}

fn outcome(
    eval: &Result<EvalResult, BackendError>,
    score: Option<&CandidateScore>,
    parent: f64,
) -> &'static str {
    match (eval, score) {
        (Err(_), _) => "eval-error",
        (Ok(e), _) if !e.sec_pass => "sec-fail",
        (Ok(_), Some(s)) if s.score < parent => "improved",
        _ => "no-gain",
    }
}

/// Runs the optimization loop on `design`.
pub fn run(
    design: &RtlDesign,
    config: &RunConfig,
    options: RunOptions<'_>,
) -> Result<RunOutput, RunError> {
    config.validate()?;
    let backend = backend::from_config(&config.effective_backend())
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let exec = if config.run.parallel {
        Exec::Parallel
    } else {
        Exec::Sequential
    };

    let baseline = backend.evaluate(None, design).map_err(RunError::Baseline)?;
    baseline.metrics.validate().map_err(RunError::Baseline)?;

    let id = run_id(design, config);
    let dir = options.out_root.as_ref().map(|r| r.join(&id));
    if let Some(d) = &dir {
        if d.join("state.json").exists() {
            return Err(RunError::Exists(d.clone()));
        }
    }
    let state = RunState {
        run_id: id.clone(),
        design_name: design.name.clone(),
        config: serde_json::to_value(config).expect("config serializes"),
        group_size: config.group_size(),
        baseline: baseline.metrics,
        baseline_design: trajectory::design_hash(design),
        iterations: vec![],
        status: RunStatus::Running,
    };
    let store = TrajectoryStore::create(dir.as_deref(), state)?;
    store.store_design(design)?;
    if let (Some(d), Some(_)) = (&dir, &config.proposer.llm) {
        std::fs::create_dir_all(d.join("llm"))?;
    }
    let client = config.proposer.llm.clone().map(LlmClient::new);
    if let Some(c) = &client {
        if std::env::var(&c.config().api_key_env).is_err() {
            log::warn!(
                "`{}` is not set; model slots will fall back to rules",
                c.config().api_key_env
            );
        }
    }

    let frozen = options.library.clone();
    let mut library = options.library;
    let mut parent = design.clone();
    let mut parent_id = BASELINE_ID.to_string();
    let mut parent_score = baseline_score();
    let mut parent_report: TimingReport = baseline.timing_report.clone();
    let mut previous_group: Option<(String, BTreeSet<String>)> = None;
    let mut status = RunStatus::BudgetExhausted;

    for _ in 0..config.run.iterations {
        let paths = select_critical_paths(&parent_report, config.run.top_k);
        let diagnoses: Vec<BottleneckDiagnosis> =
            paths.iter().map(|p| diagnose(p, &parent)).collect();
        let t = store.begin_iteration(&parent_id)?;
        let req = ProposeRequest {
            t,
            parent: &parent,
            diagnoses: &diagnoses,
            library: if config.run.skill_feedback {
                &library
            } else {
                &frozen
            },
            config,
            run_dir: dir.as_deref(),
        };
        let mut slots = match options.proposer {
            Some(hook) => hook(&req),
            None => default_propose(&req, client.as_ref(), exec),
        };
        slots.resize_with(config.group_size(), || Slot::Skipped {
            reason: "proposer returned too few slots".into(),
        });
        slots.truncate(config.group_size());

        let proposals: Vec<(usize, &Proposal)> = slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.proposal().map(|p| (i, p)))
            .collect();
        let designs: Vec<&RtlDesign> = proposals.iter().map(|(_, p)| &p.design).collect();
        let evals = evaluate_group(
            &designs,
            backend.as_ref(),
            design,
            config.concurrency(),
            exec,
        );

        let mut records: Vec<CandidateRecord> = slots
            .iter()
            .enumerate()
            .map(|(i, s)| match s {
                Slot::Skipped { reason } => CandidateRecord::skipped(t, i, reason.clone()),
                Slot::Proposal(_) => CandidateRecord::skipped(t, i, ""),
            })
            .collect();
        for ((i, p), eval) in proposals.iter().zip(evals) {
            let hash = store.store_design(&p.design)?;
            let (kind, model, skill) = proposer_kind(&p.provenance);
            let score = eval.as_ref().ok().map(|e| {
                let mut s = scoring::score(&e.metrics, &baseline.metrics, &config.scoring);
                s.sec_pass = e.sec_pass;
                s
            });
            let events = match (&p.diagnosis, p.strategy) {
                (Some(d), Some(strategy)) => vec![PathEvent {
                    diagnosis: d.clone(),
                    transformation: Transformation {
                        strategy,
                        description: p.description.clone(),
                        region: p.region.clone(),
                    },
                    outcome: outcome(&eval, score.as_ref(), parent_score.score).to_string(),
                }],
                _ => vec![],
            };
            let transcripts = p
                .transcripts
                .iter()
                .map(|f| match &dir {
                    Some(d) => f.strip_prefix(d).unwrap_or(f).display().to_string(),
                    None => f.display().to_string(),
                })
                .collect();
            let (status, eval, error) = match eval {
                Ok(e) => (CandidateStatus::Evaluated, Some(e), None),
                Err(e) => (CandidateStatus::EvalError, None, Some(e.to_string())),
            };
            records[*i] = CandidateRecord {
                id: CandidateRecord::candidate_id(t, *i),
                index: *i,
                status,
                design: Some(hash),
                proposer: Some(kind),
                model,
                skill,
                rationale: p.rationale.clone(),
                eval,
                error,
                score,
                advantage: None,
                path_events: events,
                transcripts,
            };
        }
        for r in &records {
            store.record_candidate(t, r.clone())?;
        }

        let passing: Vec<f64> = records
            .iter()
            .filter(|c| c.sec_pass())
            .filter_map(|c| c.score.map(|s| s.score))
            .collect();
        let stats = group_advantage(&passing);
        let selection = select_next(&Some(parent_score), &records);
        let selected = match selection {
            Selection::Candidate(i) => Some(records[i].id.clone()),
            Selection::Parent => None,
        };
        store.finalize_iteration(t, stats, selected.as_deref())?;
        let snapshot = store.snapshot();
        library.distill(&id, &snapshot.iterations[t])?;

        let group: BTreeSet<String> = records.iter().filter_map(|r| r.design.clone()).collect();
        if let Selection::Candidate(i) = selection {
            let p = slots[i].proposal().expect("selected slot holds a proposal");
            parent = p.design.clone();
            parent_id = records[i].id.clone();
            parent_score = records[i].score.expect("selected candidate is scored");
            parent_report = records[i]
                .eval
                .as_ref()
                .expect("selected candidate is evaluated")
                .timing_report
                .clone();
            previous_group = None;
        } else if config.run.early_stop {
            // Same parent and the same group twice: the loop reached a fixed point.
            let repeat = previous_group
                .as_ref()
                .is_some_and(|(pid, g)| *pid == parent_id && *g == group);
            if group.is_empty() || repeat {
                status = RunStatus::Converged;
                break;
            }
            previous_group = Some((parent_id.clone(), group));
        }
    }

    store.set_status(status)?;
    let state = store.snapshot();
    let result = RunResult::from_state(&state, config.run.epsilon);
    if let Some(d) = &dir {
        library.export(&d.join("skills.json"))?;
        canon::write_json(&d.join("result.json"), &result)?;
    }
    Ok(RunOutput {
        result,
        state,
        library,
        dir,
    })
}
