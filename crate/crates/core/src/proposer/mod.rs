// SPDX-License-Identifier: Apache-2.0

//! Candidate generation for one GRPO group.
//!
//! A group of `n` slots is split into skill-guided slots, which replay
//! strategies the library recommends for the diagnosed pattern, and
//! exploratory slots, which try strategies the library has not covered.
//! Slots cycle over the diagnoses so each critical path gets attention.
//! Avoid-tier strategies are never proposed for their pattern, and every
//! accepted candidate is textually distinct from the parent and from the
//! rest of the group.

pub mod llm;
pub mod rewrite;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::par::{self, Exec};
use crate::rtl::RtlDesign;
use crate::skills::{PatternId, SkillLibrary, SkillMatch, StrategyId, Tier};
use crate::timing::{BottleneckDiagnosis, MapConfidence, RtlRegion};

pub use llm::{LlmClient, LlmConfig, LlmError};
pub use rewrite::{apply_at, apply_strategy, sites, sites_in, Rewrite, RewriteError, Site};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposerConfig {
    #[serde(default = "default_n")]
    pub n_candidates: usize,
    /// Share of the group reserved for exploration, in `[0, 1]`.
    #[serde(default = "default_exploration")]
    pub exploration_fraction: f64,
    #[serde(default)]
    pub llm: Option<LlmConfig>,
}

fn default_n() -> usize {
    5
}
fn default_exploration() -> f64 {
    0.4
}

impl Default for ProposerConfig {
    fn default() -> Self {
        ProposerConfig {
            n_candidates: default_n(),
            exploration_fraction: default_exploration(),
            llm: None,
        }
    }
}

impl ProposerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_candidates < 1 {
            return Err("n_candidates must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.exploration_fraction) {
            return Err(format!(
                "exploration_fraction must be in [0, 1], got {}",
                self.exploration_fraction
            ));
        }
        Ok(())
    }
}

/// Number of skill-guided slots in a group of `n`.
pub fn skill_slots(n: usize, exploration_fraction: f64) -> usize {
    let k = ((1.0 - exploration_fraction) * n as f64 - 1e-9).ceil();
    (k.max(0.0) as usize).min(n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    SkillGuided { skill: String },
    Llm { model: String },
    Rule { strategy: StrategyId },
}

#[derive(Clone, Debug)]
pub struct Proposal {
    pub design: RtlDesign,
    pub provenance: Provenance,
    pub diagnosis: Option<BottleneckDiagnosis>,
    pub strategy: Option<StrategyId>,
    pub description: String,
    pub region: RtlRegion,
    pub rationale: String,
    /// Transcript files of the model exchange, if any.
    pub transcripts: Vec<PathBuf>,
}

#[derive(Clone, Debug)]
pub enum Slot {
    Proposal(Box<Proposal>),
    Skipped { reason: String },
}

impl Slot {
    pub fn proposal(&self) -> Option<&Proposal> {
        match self {
            Slot::Proposal(p) => Some(p),
            Slot::Skipped { .. } => None,
        }
    }
}

/// Model access for exploratory slots.
pub struct LlmSession<'a> {
    pub client: &'a LlmClient,
    pub transcript_dir: Option<PathBuf>,
    /// Prefix for transcript names, e.g. `t3`.
    pub tag: String,
    pub exec: Exec,
}

/// Strategy preference per pattern; earlier entries are tried first.
pub fn preferred_strategies(pattern: Option<PatternId>) -> Vec<StrategyId> {
    use StrategyId::*;
    let head: &[StrategyId] = match pattern {
        Some(PatternId::WideArithmetic) => &[
            TreeRebalance,
            Decomposition,
            CommonSubexpressionExtraction,
            ConstantFold,
        ],
        Some(PatternId::WideComparison) => &[
            ConditionPrecompute,
            TreeRebalance,
            CommonSubexpressionExtraction,
            Decomposition,
        ],
        Some(PatternId::MuxHeavySelection) => &[
            MuxRestructure,
            ConditionPrecompute,
            CommonSubexpressionExtraction,
        ],
        Some(PatternId::HighFanoutControl) => &[SignalReplication, SelectiveRegisterInsertion],
        Some(PatternId::ControlDataCoupling) => {
            &[ConditionPrecompute, MuxRestructure, SignalReplication]
        }
        Some(PatternId::ReconvergentLogic) => {
            &[CommonSubexpressionExtraction, TreeRebalance, ConstantFold]
        }
        Some(PatternId::ExcessiveDepth) => &[
            TreeRebalance,
            Decomposition,
            ConstantFold,
            CommonSubexpressionExtraction,
        ],
        Some(PatternId::DeepDecodeFsm) => &[
            ConditionPrecompute,
            TreeRebalance,
            MuxRestructure,
            CommonSubexpressionExtraction,
        ],
        None => &[],
    };
    let mut out = head.to_vec();
    out.extend(
        StrategyId::ALL
            .iter()
            .copied()
            .filter(|s| !head.contains(s)),
    );
    out
}

struct Planner<'a> {
    parent: &'a RtlDesign,
    library: &'a SkillLibrary,
    seen: HashSet<String>,
    tried: BTreeMap<Option<PatternId>, BTreeSet<StrategyId>>,
}

impl<'a> Planner<'a> {
    fn avoided(&self, pattern: Option<PatternId>, s: StrategyId) -> bool {
        pattern
            .and_then(|p| self.library.get(p, s))
            .is_some_and(|k| k.tier == Tier::Avoid)
    }

    /// First site of `strategy` in `region` that yields a new design.
    fn try_strategy(&mut self, strategy: StrategyId, region: &RtlRegion) -> Option<Rewrite> {
        for site in sites_in(self.parent, strategy, region) {
            match apply_at(self.parent, &site) {
                Ok(rw) => {
                    if self.seen.insert(rw.design.canonical_source()) {
                        return Some(rw);
                    }
                }
                Err(e) => log::debug!("{} at {}: {e}", strategy, site.label),
            }
        }
        None
    }

    fn skill_guided(
        &mut self,
        diag: &BottleneckDiagnosis,
        m: &SkillMatch,
        cursor: &mut usize,
    ) -> Option<Proposal> {
        while *cursor < m.recommended.len() {
            let skill = &m.recommended[*cursor];
            *cursor += 1;
            if let Some(rw) = self.try_strategy(skill.strategy, &diag.rtl_region) {
                self.tried
                    .entry(Some(diag.pattern))
                    .or_default()
                    .insert(skill.strategy);
                return Some(Proposal {
                    rationale: format!(
                        "{} tier skill {} for {} at {}",
                        skill.tier, skill.id, diag.root_cause, diag.path.endpoint
                    ),
                    provenance: Provenance::SkillGuided {
                        skill: skill.id.clone(),
                    },
                    diagnosis: Some(diag.clone()),
                    strategy: Some(rw.strategy),
                    description: rw.description,
                    region: rw.region,
                    design: rw.design,
                    transcripts: vec![],
                });
            }
        }
        None
    }

    /// Untried strategies first, then ones the library knows, then repeats
    /// at other sites. Avoid-tier strategies never appear.
    fn exploration_order(&self, pattern: Option<PatternId>) -> Vec<StrategyId> {
        let tried = self.tried.get(&pattern).cloned().unwrap_or_default();
        let known = |s: StrategyId| pattern.and_then(|p| self.library.get(p, s)).is_some();
        let pref: Vec<StrategyId> = preferred_strategies(pattern)
            .into_iter()
            .filter(|&s| !self.avoided(pattern, s))
            .collect();
        let mut order: Vec<StrategyId> = pref
            .iter()
            .copied()
            .filter(|&s| !tried.contains(&s) && !known(s))
            .collect();
        order.extend(
            pref.iter()
                .copied()
                .filter(|&s| !tried.contains(&s) && known(s)),
        );
        order.extend(pref.iter().copied().filter(|s| tried.contains(s)));
        order
    }

    fn exploratory(
        &mut self,
        diag: Option<&BottleneckDiagnosis>,
        region: &RtlRegion,
    ) -> Option<Proposal> {
        let pattern = diag.map(|d| d.pattern);
        for strategy in self.exploration_order(pattern) {
            if let Some(rw) = self.try_strategy(strategy, region) {
                self.tried.entry(pattern).or_default().insert(strategy);
                let rationale = match diag {
                    Some(d) => format!(
                        "explore {} for {} at {}",
                        strategy, d.root_cause, d.path.endpoint
                    ),
                    None => format!("explore {strategy} over the whole design"),
                };
                return Some(Proposal {
                    rationale,
                    provenance: Provenance::Rule { strategy },
                    diagnosis: diag.cloned(),
                    strategy: Some(strategy),
                    description: rw.description,
                    region: rw.region,
                    design: rw.design,
                    transcripts: vec![],
                });
            }
        }
        None
    }
}

enum Plan {
    Done(Option<Box<Proposal>>),
    /// Exploratory slot for the model, by diagnosis index.
    Llm(usize),
}

/// Proposes a group of `config.n_candidates` slots for `parent`.
pub fn propose_group(
    parent: &RtlDesign,
    diagnoses: &[BottleneckDiagnosis],
    library: &SkillLibrary,
    config: &ProposerConfig,
    llm: Option<&LlmSession<'_>>,
) -> Vec<Slot> {
    let n = config.n_candidates;
    let n_skill = skill_slots(n, config.exploration_fraction);
    let mut planner = Planner {
        parent,
        library,
        seen: HashSet::from([parent.canonical_source()]),
        tried: BTreeMap::new(),
    };
    let whole = RtlRegion::whole(parent, MapConfidence::HeuristicFailed);
    let diags: Vec<Option<&BottleneckDiagnosis>> = if diagnoses.is_empty() {
        vec![None]
    } else {
        diagnoses.iter().map(Some).collect()
    };
    let matches: Vec<SkillMatch> = diags
        .iter()
        .map(|d| {
            d.map(|d| library.match_pattern(d.pattern))
                .unwrap_or_default()
        })
        .collect();
    let region_of = |d: Option<&BottleneckDiagnosis>| {
        d.map(|d| d.rtl_region.clone())
            .unwrap_or_else(|| whole.clone())
    };
    let mut cursors = vec![0usize; diags.len()];

    let mut plans = Vec::with_capacity(n);
    for j in 0..n {
        let di = j % diags.len();
        let d = diags[di];
        if j < n_skill {
            if let Some(diag) = d {
                if let Some(p) = planner.skill_guided(diag, &matches[di], &mut cursors[di]) {
                    plans.push(Plan::Done(Some(Box::new(p))));
                    continue;
                }
            }
        }
        if llm.is_some() {
            plans.push(Plan::Llm(di));
        } else {
            plans.push(Plan::Done(
                planner.exploratory(d, &region_of(d)).map(Box::new),
            ));
        }
    }

    let mut replies: BTreeMap<usize, llm::LlmOutcome> = BTreeMap::new();
    if let Some(session) = llm {
        let jobs: Vec<(usize, usize)> = plans
            .iter()
            .enumerate()
            .filter_map(|(j, p)| match p {
                Plan::Llm(di) => Some((j, *di)),
                Plan::Done(_) => None,
            })
            .collect();
        let outcomes = par::map(session.exec, &jobs, |&(j, di)| {
            let tag = format!("{}-c{j}", session.tag);
            session.client.propose(
                parent,
                diags[di],
                &matches[di],
                session.transcript_dir.as_deref(),
                &tag,
            )
        });
        replies.extend(jobs.iter().map(|&(j, _)| j).zip(outcomes));
    }

    let mut slots = Vec::with_capacity(n);
    for (j, plan) in plans.into_iter().enumerate() {
        let proposal = match plan {
            Plan::Done(p) => p,
            Plan::Llm(di) => {
                let d = diags[di];
                let out = replies.remove(&j).expect("every model slot has a reply");
                let files = out.files.clone();
                let accepted = match out.result {
                    Ok(c) if planner.seen.insert(c.design.canonical_source()) => {
                        if let Some(s) = c.strategy {
                            planner
                                .tried
                                .entry(d.map(|d| d.pattern))
                                .or_default()
                                .insert(s);
                        }
                        Some(Proposal {
                            provenance: Provenance::Llm {
                                model: session_model(llm),
                            },
                            diagnosis: d.cloned(),
                            strategy: c.strategy,
                            description: c
                                .strategy
                                .map(|s| format!("model rewrite ({s})"))
                                .unwrap_or_else(|| "model rewrite".into()),
                            region: region_of(d),
                            rationale: c.rationale,
                            design: c.design,
                            transcripts: files.clone(),
                        })
                    }
                    Ok(_) => {
                        log::info!("model candidate for slot {j} duplicates the group");
                        None
                    }
                    Err(e) => {
                        log::info!("model slot {j} falls back to rules: {e}");
                        None
                    }
                };
                accepted
                    .or_else(|| {
                        planner.exploratory(d, &region_of(d)).map(|mut p| {
                            p.transcripts = files;
                            p
                        })
                    })
                    .map(Box::new)
            }
        };
        slots.push(match proposal {
            Some(p) => Slot::Proposal(p),
            None => Slot::Skipped {
                reason: "no distinct applicable rewrite".into(),
            },
        });
    }
    slots
}

fn session_model(llm: Option<&LlmSession<'_>>) -> String {
    llm.map(|s| s.client.config().model.clone())
        .unwrap_or_default()
}
