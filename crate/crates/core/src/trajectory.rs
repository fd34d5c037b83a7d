// SPDX-License-Identifier: Apache-2.0

//! Three-layer optimization history: iterations, their candidate groups, and
//! the critical-path events behind each candidate.
//!
//! A run directory holds `state.json` and content-addressed design snapshots
//! under `designs/<sha256>.rtl`. Every mutation is written to disk (atomic
//! rename) before the call returns.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backend::{EvalResult, PpaMetrics};
use crate::canon;
use crate::rtl::RtlDesign;
use crate::scoring::{CandidateScore, GroupStats, Scored};
use crate::skills::StrategyId;
use crate::timing::{BottleneckDiagnosis, RtlRegion};

pub const BASELINE_ID: &str = "baseline";
pub const DEFAULT_EPSILON: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Running,
    Converged,
    BudgetExhausted,
    Failed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProposerKind {
    SkillGuided,
    Llm,
    Rule,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateStatus {
    Evaluated,
    EvalError,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transformation {
    pub strategy: StrategyId,
    pub description: String,
    pub region: RtlRegion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathEvent {
    pub diagnosis: BottleneckDiagnosis,
    pub transformation: Transformation,
    pub outcome: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub id: String,
    pub index: usize,
    pub status: CandidateStatus,
    /// Hash of the design snapshot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposer: Option<ProposerKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skill: Option<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub rationale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<CandidateScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advantage: Option<f64>,
    #[serde(default)]
    pub path_events: Vec<PathEvent>,
    /// Model transcripts, relative to the run directory.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transcripts: Vec<String>,
}

impl CandidateRecord {
    pub fn candidate_id(t: usize, index: usize) -> String {
        format!("t{t}-c{index}")
    }

    /// A slot that produced no candidate.
    pub fn skipped(t: usize, index: usize, reason: impl Into<String>) -> Self {
        CandidateRecord {
            id: Self::candidate_id(t, index),
            index,
            status: CandidateStatus::Skipped,
            design: None,
            proposer: None,
            model: None,
            skill: None,
            rationale: reason.into(),
            eval: None,
            error: None,
            score: None,
            advantage: None,
            path_events: vec![],
            transcripts: vec![],
        }
    }

    pub fn sec_pass(&self) -> bool {
        self.status == CandidateStatus::Evaluated && self.eval.as_ref().is_some_and(|e| e.sec_pass)
    }
}

impl Scored for CandidateRecord {
    fn sec_pass(&self) -> bool {
        CandidateRecord::sec_pass(self)
    }
    fn score_value(&self) -> Option<f64> {
        self.score.map(|s| s.score)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: usize,
    /// Candidate id (or `baseline`) of the design this iteration started from.
    pub parent: String,
    pub candidates: Vec<CandidateRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_stats: Option<GroupStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<String>,
    pub finalized: bool,
}

impl IterationRecord {
    pub fn candidate(&self, id: &str) -> Option<&CandidateRecord> {
        self.candidates.iter().find(|c| c.id == id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub run_id: String,
    pub design_name: String,
    pub config: serde_json::Value,
    pub group_size: usize,
    pub baseline: PpaMetrics,
    pub baseline_design: String,
    pub iterations: Vec<IterationRecord>,
    pub status: RunStatus,
}

impl RunState {
    /// Looks up the design hash behind a candidate id (or `baseline`).
    pub fn design_of(&self, id: &str) -> Option<&str> {
        if id == BASELINE_ID {
            return Some(&self.baseline_design);
        }
        self.iterations
            .iter()
            .flat_map(|it| &it.candidates)
            .find(|c| c.id == id)
            .and_then(|c| c.design.as_deref())
    }

    pub fn to_json(&self) -> String {
        canon::to_string(self).expect("state serializes")
    }
}

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("run is {0:?}, not running")]
    NotRunning(RunStatus),
    #[error("iteration {0} does not exist")]
    NoIteration(usize),
    #[error("iteration {0} is already finalized")]
    Finalized(usize),
    #[error("iteration {t} already holds {n} candidates")]
    GroupFull { t: usize, n: usize },
    #[error("duplicate candidate id `{0}`")]
    DuplicateCandidate(String),
    #[error("iteration {t} has {have} of {want} candidates")]
    Incomplete { t: usize, have: usize, want: usize },
    #[error("selected candidate `{0}` does not pass SEC")]
    BadSelection(String),
    #[error("group stats carry {got} advantages for {want} passing candidates")]
    StatsMismatch { got: usize, want: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed state file: {0}")]
    Parse(String),
}

/// Content hash of a design's canonical source.
pub fn design_hash(design: &RtlDesign) -> String {
    hex::encode(Sha256::digest(design.canonical_source().as_bytes()))
}

/// Owner of a run's state. Appends are serialized by an internal lock and
/// persisted before returning; readers get consistent snapshots.
#[derive(Debug)]
pub struct TrajectoryStore {
    dir: Option<PathBuf>,
    state: Mutex<RunState>,
}

impl TrajectoryStore {
    /// A store rooted at `dir` (created if needed), or purely in memory.
    pub fn create(dir: Option<&Path>, state: RunState) -> Result<Self, TrajectoryError> {
        let store = TrajectoryStore {
            dir: dir.map(Path::to_path_buf),
            state: Mutex::new(state),
        };
        if let Some(d) = &store.dir {
            fs::create_dir_all(d.join("designs"))?;
        }
        store.persist(&store.lock())?;
        Ok(store)
    }

    pub fn load(dir: &Path) -> Result<RunState, TrajectoryError> {
        let text = fs::read_to_string(dir.join("state.json"))?;
        serde_json::from_str(&text).map_err(|e| TrajectoryError::Parse(e.to_string()))
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn lock(&self) -> MutexGuard<'_, RunState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn persist(&self, state: &RunState) -> Result<(), TrajectoryError> {
        if let Some(d) = &self.dir {
            canon::write_atomic(&d.join("state.json"), state.to_json().as_bytes())?;
        }
        Ok(())
    }

    pub fn snapshot(&self) -> RunState {
        self.lock().clone()
    }

    /// Stores a design snapshot and returns its hash.
    pub fn store_design(&self, design: &RtlDesign) -> Result<String, TrajectoryError> {
        let hash = design_hash(design);
        if let Some(d) = &self.dir {
            let path = d.join("designs").join(format!("{hash}.rtl"));
            if !path.exists() {
                canon::write_atomic(&path, design.canonical_source().as_bytes())?;
            }
        }
        Ok(hash)
    }

    pub fn load_design(dir: &Path, hash: &str) -> Result<String, TrajectoryError> {
        Ok(fs::read_to_string(
            dir.join("designs").join(format!("{hash}.rtl")),
        )?)
    }

    /// Opens the next iteration and returns its index.
    pub fn begin_iteration(&self, parent: &str) -> Result<usize, TrajectoryError> {
        let mut s = self.lock();
        if s.status != RunStatus::Running {
            return Err(TrajectoryError::NotRunning(s.status));
        }
        let t = s.iterations.len();
        s.iterations.push(IterationRecord {
            index: t,
            parent: parent.to_string(),
            candidates: vec![],
            group_stats: None,
            selected: None,
            finalized: false,
        });
        self.persist(&s)?;
        Ok(t)
    }

    /// Appends one candidate; safe to call from several threads at once.
    pub fn record_candidate(
        &self,
        t: usize,
        record: CandidateRecord,
    ) -> Result<(), TrajectoryError> {
        let mut s = self.lock();
        let n = s.group_size;
        let it = s
            .iterations
            .get_mut(t)
            .ok_or(TrajectoryError::NoIteration(t))?;
        if it.finalized {
            return Err(TrajectoryError::Finalized(t));
        }
        if it.candidates.len() >= n {
            return Err(TrajectoryError::GroupFull { t, n });
        }
        if it.candidates.iter().any(|c| c.id == record.id) {
            return Err(TrajectoryError::DuplicateCandidate(record.id));
        }
        let pos = it.candidates.partition_point(|c| c.index < record.index);
        it.candidates.insert(pos, record);
        self.persist(&s)?;
        Ok(())
    }

    /// Stores group statistics and the selection. Advantages are written
    /// back onto the passing candidates in index order.
    pub fn finalize_iteration(
        &self,
        t: usize,
        stats: GroupStats,
        selected: Option<&str>,
    ) -> Result<(), TrajectoryError> {
        let mut s = self.lock();
        let n = s.group_size;
        let it = s
            .iterations
            .get_mut(t)
            .ok_or(TrajectoryError::NoIteration(t))?;
        if it.finalized {
            return Err(TrajectoryError::Finalized(t));
        }
        if it.candidates.len() != n {
            return Err(TrajectoryError::Incomplete {
                t,
                have: it.candidates.len(),
                want: n,
            });
        }
        if let Some(id) = selected {
            if !it.candidate(id).is_some_and(|c| c.sec_pass()) {
                return Err(TrajectoryError::BadSelection(id.to_string()));
            }
        }
        let passing = it.candidates.iter().filter(|c| c.sec_pass()).count();
        if stats.advantages.len() != passing {
            return Err(TrajectoryError::StatsMismatch {
                got: stats.advantages.len(),
                want: passing,
            });
        }
        let mut adv = stats.advantages.iter();
        for c in it.candidates.iter_mut() {
            c.advantage = if c.sec_pass() {
                adv.next().copied()
            } else {
                None
            };
        }
        it.group_stats = Some(stats);
        it.selected = selected.map(str::to_string);
        it.finalized = true;
        self.persist(&s)?;
        Ok(())
    }

    pub fn set_status(&self, status: RunStatus) -> Result<(), TrajectoryError> {
        let mut s = self.lock();
        s.status = status;
        self.persist(&s)
    }
}

/// Best-so-far score after each iteration, starting from the baseline's 0.
pub fn best_so_far(state: &RunState) -> Vec<f64> {
    let mut best = 0.0f64;
    state
        .iterations
        .iter()
        .map(|it| {
            for c in it.candidates.iter().filter(|c| c.sec_pass()) {
                if let Some(s) = c.score {
                    best = best.min(s.score);
                }
            }
            best
        })
        .collect()
}

/// Iteration after which the best-so-far score never again improves by
/// `epsilon` or more. Returns 0 for a run that never improves and the
/// iteration count when it is still improving at the last iteration.
pub fn convergence_steps_of(series: &[f64], epsilon: f64) -> usize {
    let mut prev = 0.0;
    let mut last = None;
    for (t, &s) in series.iter().enumerate() {
        if prev - s >= epsilon {
            last = Some(t);
        }
        prev = s;
    }
    match last {
        None => 0,
        Some(t) if t + 1 == series.len() => series.len(),
        Some(t) => t,
    }
}

pub fn convergence_steps(state: &RunState, epsilon: f64) -> usize {
    convergence_steps_of(&best_so_far(state), epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::SecMode;
    use crate::timing::TimingReport;
    use std::sync::Arc;

    fn state(n: usize) -> RunState {
        RunState {
            run_id: "r".into(),
            design_name: "m".into(),
            config: serde_json::json!({}),
            group_size: n,
            baseline: PpaMetrics {
                wns: -0.2,
                tns: -0.2,
                area: 10.0,
            },
            baseline_design: "00".into(),
            iterations: vec![],
            status: RunStatus::Running,
        }
    }

    fn evaluated(t: usize, i: usize, pass: bool, score: f64) -> CandidateRecord {
        let mut c = CandidateRecord::skipped(t, i, "");
        c.status = CandidateStatus::Evaluated;
        c.proposer = Some(ProposerKind::Rule);
        c.eval = Some(EvalResult {
            metrics: PpaMetrics {
                wns: -0.1,
                tns: -0.1,
                area: 10.0,
            },
            sec_pass: pass,
            sec_mode: SecMode::Exhaustive,
            timing_report: TimingReport::new(0.5, vec![]),
            backend_id: "builtin".into(),
            counterexample: None,
            note: None,
            wall_time: 0.0,
        });
        c.score = Some(CandidateScore {
            wns_norm: 0.0,
            tns_norm: 0.0,
            area_norm: 0.0,
            penalty: 0.0,
            score,
            sec_pass: pass,
        });
        c
    }

    #[test]
    fn iteration_lifecycle() {
        let store = TrajectoryStore::create(None, state(2)).unwrap();
        assert_eq!(store.begin_iteration(BASELINE_ID).unwrap(), 0);
        store
            .record_candidate(0, evaluated(0, 1, false, 0.3))
            .unwrap();
        assert_eq!(store.snapshot().iterations[0].candidates.len(), 1);
        assert!(matches!(
            store.record_candidate(0, evaluated(0, 1, true, 0.0)),
            Err(TrajectoryError::DuplicateCandidate(_))
        ));
        store
            .record_candidate(0, evaluated(0, 0, true, -0.1))
            .unwrap();
        assert!(matches!(
            store.record_candidate(0, evaluated(0, 2, true, 0.0)),
            Err(TrajectoryError::GroupFull { .. })
        ));
        let st = store.snapshot();
        assert_eq!(st.iterations[0].candidates[0].index, 0);

        let stats = GroupStats {
            mean: -0.1,
            stddev: 0.0,
            advantages: vec![0.0],
        };
        assert!(matches!(
            store.finalize_iteration(0, stats.clone(), Some("t0-c1")),
            Err(TrajectoryError::BadSelection(_))
        ));
        store.finalize_iteration(0, stats, Some("t0-c0")).unwrap();
        let st = store.snapshot();
        assert_eq!(st.iterations[0].candidates[0].advantage, Some(0.0));
        assert_eq!(st.iterations[0].candidates[1].advantage, None);
        assert_eq!(store.begin_iteration("t0-c0").unwrap(), 1);
        store.set_status(RunStatus::Converged).unwrap();
        assert!(matches!(
            store.begin_iteration("x"),
            Err(TrajectoryError::NotRunning(_))
        ));
    }

    #[test]
    fn all_fail_group_selects_nothing() {
        let store = TrajectoryStore::create(None, state(1)).unwrap();
        store.begin_iteration(BASELINE_ID).unwrap();
        store
            .record_candidate(0, evaluated(0, 0, false, -1.0))
            .unwrap();
        let stats = GroupStats {
            mean: 0.0,
            stddev: 0.0,
            advantages: vec![],
        };
        store.finalize_iteration(0, stats, None).unwrap();
        assert_eq!(store.snapshot().iterations[0].selected, None);
    }

    #[test]
    fn concurrent_records_are_all_kept() {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(TrajectoryStore::create(Some(dir.path()), state(5)).unwrap());
        store.begin_iteration(BASELINE_ID).unwrap();
        let handles: Vec<_> = (0..5)
            .map(|i| {
                let s = Arc::clone(&store);
                std::thread::spawn(move || {
                    s.record_candidate(0, evaluated(0, i, true, -(i as f64)))
                        .unwrap()
                })
            })
            .collect();
        handles.into_iter().for_each(|h| h.join().unwrap());
        let loaded = TrajectoryStore::load(dir.path()).unwrap();
        let ids: Vec<_> = loaded.iterations[0]
            .candidates
            .iter()
            .map(|c| c.index)
            .collect();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
        assert_eq!(loaded, store.snapshot());
    }

    #[test]
    fn persist_reload_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let store = TrajectoryStore::create(Some(dir.path()), state(1)).unwrap();
        store.begin_iteration(BASELINE_ID).unwrap();
        store
            .record_candidate(0, evaluated(0, 0, true, -0.123456789012345))
            .unwrap();
        let bytes = fs::read_to_string(dir.path().join("state.json")).unwrap();
        let reloaded = TrajectoryStore::load(dir.path()).unwrap();
        assert_eq!(reloaded.to_json(), bytes);
    }

    #[test]
    fn convergence_definition() {
        assert_eq!(convergence_steps_of(&[0.0, -0.2, -0.2, -0.2], 1e-3), 1);
        assert_eq!(convergence_steps_of(&[-0.1, -0.2, -0.3], 1e-3), 3);
        assert_eq!(convergence_steps_of(&[0.0, 0.0, 0.0], 1e-3), 0);
        assert_eq!(convergence_steps_of(&[-0.5, -0.5], 1e-3), 0);
        assert_eq!(
            convergence_steps_of(&[0.0, -0.0005, -0.2, -0.2005], 1e-3),
            2
        );
    }
}
