// SPDX-License-Identifier: Apache-2.0

//! Pattern–strategy skill library.
//!
//! Each entry counts how often a transformation strategy was applied to a
//! bottleneck pattern, how often the result passed equivalence checking, and
//! the mean group-relative advantage of the passing applications. A
//! confidence tier is derived from those statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timing::RootCause;
use crate::trajectory::IterationRecord;

pub const SCHEMA_VERSION: u32 = 1;

macro_rules! kebab_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident = $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(format!("unknown {} `{s}`", stringify!($name))),
                }
            }
        }
    };
}

kebab_enum! {
    /// Bottleneck structure a skill applies to.
    PatternId {
        DeepDecodeFsm = "deep-decode-fsm",
        HighFanoutControl = "high-fanout-control",
        WideComparison = "wide-comparison",
        MuxHeavySelection = "mux-heavy-selection",
        WideArithmetic = "wide-arithmetic",
        ControlDataCoupling = "control-data-coupling",
        ReconvergentLogic = "reconvergent-logic",
        ExcessiveDepth = "excessive-depth",
    }
}

kebab_enum! {
    /// Transformation principle. Each one has a rewrite in the proposer.
    StrategyId {
        ConditionPrecompute = "condition-precompute",
        SignalReplication = "signal-replication",
        SelectiveRegisterInsertion = "selective-register-insertion",
        TreeRebalance = "tree-rebalance",
        CommonSubexpressionExtraction = "common-subexpression-extraction",
        MuxRestructure = "mux-restructure",
        Decomposition = "decomposition",
        ConstantFold = "constant-fold",
    }
}

impl PatternId {
    pub fn from_root_cause(cause: RootCause) -> PatternId {
        match cause {
            RootCause::ExcessiveDepth => PatternId::ExcessiveDepth,
            RootCause::HighFanout => PatternId::HighFanoutControl,
            RootCause::ControlDataCoupling => PatternId::ControlDataCoupling,
            RootCause::Reconvergent => PatternId::ReconvergentLogic,
            RootCause::WideArithmetic => PatternId::WideArithmetic,
            RootCause::WideCompare => PatternId::WideComparison,
            RootCause::MuxCascade => PatternId::MuxHeavySelection,
        }
    }
}

impl StrategyId {
    /// Default implementation recipe stored with new skills.
    pub fn template(self) -> &'static str {
        match self {
            StrategyId::ConditionPrecompute => {
                "Hoist the select condition of a mux into its own 1-bit wire so it is computed once, off the data path."
            }
            StrategyId::SignalReplication => {
                "Duplicate the driver of a heavily loaded wire and split its sinks between the copies."
            }
            StrategyId::SelectiveRegisterInsertion => {
                "Duplicate an existing register and split its readers; never add a pipeline stage."
            }
            StrategyId::TreeRebalance => {
                "Reassociate a chain of one associative operator into a balanced tree, keeping operand order."
            }
            StrategyId::CommonSubexpressionExtraction => {
                "Compute a repeated subexpression once into a fresh wire and reuse it."
            }
            StrategyId::MuxRestructure => {
                "Split a long priority mux chain into two halves selected by whether any early condition holds."
            }
            StrategyId::Decomposition => {
                "Split a large assign into named intermediate wires without adding registers."
            }
            StrategyId::ConstantFold => "Evaluate constant subexpressions and drop identity operations.",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    High,
    Medium,
    Low,
    Avoid,
}

impl Tier {
    /// Smaller is more trusted.
    pub fn rank(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::High => "high",
            Tier::Medium => "medium",
            Tier::Low => "low",
            Tier::Avoid => "avoid",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Skill {
    pub version: u32,
    pub id: String,
    pub pattern: PatternId,
    pub strategy: StrategyId,
    pub occurrence_count: u64,
    pub sec_pass_count: u64,
    /// Mean advantage over passing applications; lower is better.
    pub mean_advantage: f64,
    pub tier: Tier,
    pub template: String,
    #[serde(default)]
    pub notes: String,
    /// `run_id:t` keys of the iterations distilled into this entry.
    #[serde(default)]
    pub sources: BTreeSet<String>,
}

impl Skill {
    pub fn new(pattern: PatternId, strategy: StrategyId) -> Skill {
        Skill {
            version: SCHEMA_VERSION,
            id: skill_id(pattern, strategy),
            pattern,
            strategy,
            occurrence_count: 0,
            sec_pass_count: 0,
            mean_advantage: 0.0,
            tier: Tier::Low,
            template: strategy.template().to_string(),
            notes: String::new(),
            sources: BTreeSet::new(),
        }
    }

    pub fn pass_rate(&self) -> f64 {
        if self.occurrence_count == 0 {
            0.0
        } else {
            self.sec_pass_count as f64 / self.occurrence_count as f64
        }
    }

    fn validate(&self) -> Result<(), SkillError> {
        let bad = |m: String| Err(SkillError::Schema(format!("skill `{}`: {m}", self.id)));
        if self.version != SCHEMA_VERSION {
            return Err(SkillError::Version {
                found: self.version,
                expected: SCHEMA_VERSION,
            });
        }
        if self.id != skill_id(self.pattern, self.strategy) {
            return bad(format!(
                "id does not match {}",
                skill_id(self.pattern, self.strategy)
            ));
        }
        if self.sec_pass_count > self.occurrence_count {
            return bad("sec_pass_count exceeds occurrence_count".into());
        }
        if !self.mean_advantage.is_finite() {
            return bad("mean_advantage is not finite".into());
        }
        if self.tier != assign_tier(self) {
            return bad(format!(
                "tier {} is inconsistent with its statistics",
                self.tier
            ));
        }
        Ok(())
    }
}

pub fn skill_id(pattern: PatternId, strategy: StrategyId) -> String {
    format!("{pattern}/{strategy}")
}

/// Confidence tier from the entry's statistics.
pub fn assign_tier(skill: &Skill) -> Tier {
    let occ = skill.occurrence_count;
    let r = skill.pass_rate();
    let m = skill.mean_advantage;
    if occ >= 2 && (r < 0.5 || m >= 0.5) {
        Tier::Avoid
    } else if occ >= 3 && r >= 0.8 && m <= -0.5 {
        Tier::High
    } else if occ >= 2 && r >= 0.6 && m < 0.0 {
        Tier::Medium
    } else {
        Tier::Low
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SkillError {
    #[error("iteration {0} is not finalized")]
    NotFinalized(usize),
    #[error("skill library schema version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("invalid skill library: {0}")]
    Schema(String),
    #[error("conflicting templates for {}", .0.join(", "))]
    Conflict(Vec<String>),
    #[error("io error: {0}")]
    Io(String),
}

/// Result of querying the library for one diagnosis.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SkillMatch {
    pub recommended: Vec<Skill>,
    pub prohibited: Vec<Skill>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SkillLibrary {
    entries: BTreeMap<(PatternId, StrategyId), Skill>,
}

impl SkillLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn version(&self) -> u32 {
        SCHEMA_VERSION
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, pattern: PatternId, strategy: StrategyId) -> Option<&Skill> {
        self.entries.get(&(pattern, strategy))
    }

    /// Entries in (pattern, strategy) order.
    pub fn skills(&self) -> impl Iterator<Item = &Skill> {
        self.entries.values()
    }

    /// Run ids that contributed to any entry.
    pub fn provenance(&self) -> BTreeSet<String> {
        self.entries
            .values()
            .flat_map(|s| s.sources.iter())
            .map(|k| {
                k.rsplit_once(':')
                    .map_or(k.as_str(), |(run, _)| run)
                    .to_string()
            })
            .collect()
    }

    pub fn insert(&mut self, mut skill: Skill) {
        skill.tier = assign_tier(&skill);
        self.entries.insert((skill.pattern, skill.strategy), skill);
    }

    /// Folds the outcomes of one finalized iteration into the library.
    ///
    /// All applications of one (pattern, strategy) in the iteration are
    /// combined as a batch, so the result does not depend on candidate
    /// order. An iteration already distilled into an entry (same `run_id`
    /// and index) is ignored for that entry.
    pub fn distill(&mut self, run_id: &str, iteration: &IterationRecord) -> Result<(), SkillError> {
        if !iteration.finalized {
            return Err(SkillError::NotFinalized(iteration.index));
        }
        let key = format!("{run_id}:{}", iteration.index);
        // (applications, passing advantages)
        let mut batch: BTreeMap<(PatternId, StrategyId), (u64, Vec<f64>)> = BTreeMap::new();
        for c in &iteration.candidates {
            for ev in &c.path_events {
                let slot = batch
                    .entry((ev.diagnosis.pattern, ev.transformation.strategy))
                    .or_default();
                slot.0 += 1;
                if c.sec_pass() {
                    slot.1.push(c.advantage.unwrap_or(0.0));
                }
            }
        }
        for ((pattern, strategy), (n, mut passes)) in batch {
            let skill = self
                .entries
                .entry((pattern, strategy))
                .or_insert_with(|| Skill::new(pattern, strategy));
            if !skill.sources.insert(key.clone()) {
                continue;
            }
            passes.sort_by(f64::total_cmp);
            let k = passes.len() as u64;
            if k > 0 {
                let total =
                    skill.mean_advantage * skill.sec_pass_count as f64 + passes.iter().sum::<f64>();
                skill.mean_advantage = total / (skill.sec_pass_count + k) as f64;
            }
            skill.occurrence_count += n;
            skill.sec_pass_count += k;
            skill.tier = assign_tier(skill);
        }
        Ok(())
    }

    /// Entries for `pattern`: recommendations ranked by tier, then mean
    /// advantage (ascending), then strategy name; avoid-tier entries are
    /// returned separately.
    pub fn match_pattern(&self, pattern: PatternId) -> SkillMatch {
        let mut m = SkillMatch::default();
        for s in self.entries.values().filter(|s| s.pattern == pattern) {
            if s.tier == Tier::Avoid {
                m.prohibited.push(s.clone());
            } else {
                m.recommended.push(s.clone());
            }
        }
        m.recommended.sort_by(|a, b| {
            a.tier
                .rank()
                .cmp(&b.tier.rank())
                .then(a.mean_advantage.total_cmp(&b.mean_advantage))
                .then(a.strategy.as_str().cmp(b.strategy.as_str()))
        });
        m.prohibited
            .sort_by(|a, b| a.strategy.as_str().cmp(b.strategy.as_str()));
        m
    }

    /// Sums counts, combines mean advantage weighted by pass counts and
    /// recomputes tiers. Entries with differing templates are a conflict.
    pub fn merge<'a>(
        libs: impl IntoIterator<Item = &'a SkillLibrary>,
    ) -> Result<SkillLibrary, SkillError> {
        let mut out = SkillLibrary::new();
        let mut conflicts = BTreeSet::new();
        for lib in libs {
            for (k, s) in &lib.entries {
                match out.entries.get_mut(k) {
                    None => {
                        out.entries.insert(*k, s.clone());
                    }
                    Some(acc) => {
                        if acc.template != s.template {
                            conflicts.insert(acc.id.clone());
                            continue;
                        }
                        let passes = acc.sec_pass_count + s.sec_pass_count;
                        if passes > 0 {
                            acc.mean_advantage = (acc.mean_advantage * acc.sec_pass_count as f64
                                + s.mean_advantage * s.sec_pass_count as f64)
                                / passes as f64;
                        }
                        acc.occurrence_count += s.occurrence_count;
                        acc.sec_pass_count = passes;
                        acc.sources.extend(s.sources.iter().cloned());
                        if acc.notes.is_empty() {
                            acc.notes = s.notes.clone();
                        } else if !s.notes.is_empty() && s.notes != acc.notes {
                            let mut notes = [acc.notes.clone(), s.notes.clone()];
                            notes.sort();
                            acc.notes = notes.join("\n");
                        }
                    }
                }
            }
        }
        if !conflicts.is_empty() {
            return Err(SkillError::Conflict(conflicts.into_iter().collect()));
        }
        for s in out.entries.values_mut() {
            s.tier = assign_tier(s);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        let list: Vec<&Skill> = self.entries.values().collect();
        crate::canon::to_string(&list).expect("skills serialize")
    }

    pub fn from_json(text: &str) -> Result<SkillLibrary, SkillError> {
        let list: Vec<Skill> =
            serde_json::from_str(text).map_err(|e| SkillError::Schema(e.to_string()))?;
        let mut lib = SkillLibrary::new();
        for s in list {
            s.validate()?;
            let key = (s.pattern, s.strategy);
            if lib.entries.insert(key, s).is_some() {
                return Err(SkillError::Schema(format!(
                    "duplicate entry {}",
                    skill_id(key.0, key.1)
                )));
            }
        }
        Ok(lib)
    }

    pub fn export(&self, path: &Path) -> Result<(), SkillError> {
        crate::canon::write_atomic(path, self.to_json().as_bytes())
            .map_err(|e| SkillError::Io(e.to_string()))
    }

    pub fn import(path: &Path) -> Result<SkillLibrary, SkillError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SkillError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
