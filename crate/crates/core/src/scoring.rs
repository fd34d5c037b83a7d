// SPDX-License-Identifier: Apache-2.0

//! Candidate scoring against the frozen baseline, selection of the next
//! design and group-relative advantages.
//!
//! `score = α·wns_norm + β·tns_norm + γ·area_norm + penalty`, where each norm
//! is the relative change from the baseline and the penalty applies when
//! area grows by more than the threshold. Lower scores are better.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::PpaMetrics;

/// Magnitude returned by [`normalize`] when the baseline is zero.
pub const NORM_CAP: f64 = 10.0;
const ZERO_EPS: f64 = 1e-9;
const SIGMA_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoreWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub area_penalty: f64,
    pub area_penalty_threshold: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights {
            alpha: 0.5,
            beta: 0.35,
            gamma: 0.15,
            area_penalty: 0.5,
            area_penalty_threshold: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid score weights: {0}")]
pub struct WeightsError(String);

impl ScoreWeights {
    pub fn validate(&self) -> Result<(), WeightsError> {
        for (name, w) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !(0.0..=1.0).contains(&w) {
                return Err(WeightsError(format!("{name} = {w} is outside [0, 1]")));
            }
        }
        if !(self.area_penalty.is_finite() && self.area_penalty >= 0.0) {
            return Err(WeightsError(format!(
                "area_penalty = {} must be a non-negative number",
                self.area_penalty
            )));
        }
        if !(self.area_penalty_threshold > 0.0 && self.area_penalty_threshold.is_finite()) {
            return Err(WeightsError(format!(
                "area_penalty_threshold = {} must be positive",
                self.area_penalty_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub wns_norm: f64,
    pub tns_norm: f64,
    pub area_norm: f64,
    pub penalty: f64,
    pub score: f64,
    pub sec_pass: bool,
}

/// Relative change `(value − baseline)/baseline`. A zero baseline yields 0
/// for a zero value and `±NORM_CAP` otherwise.
pub fn normalize(value: f64, baseline: f64) -> f64 {
    if baseline.abs() < ZERO_EPS {
        if value.abs() < ZERO_EPS {
            0.0
        } else {
            NORM_CAP.copysign(value)
        }
    } else {
        (value - baseline) / baseline
    }
}

/// Scores `metrics` against `baseline`. `sec_pass` is left false; callers
/// set it from the equivalence verdict.
pub fn score(
    metrics: &PpaMetrics,
    baseline: &PpaMetrics,
    weights: &ScoreWeights,
) -> CandidateScore {
    let wns_norm = normalize(metrics.wns, baseline.wns);
    let tns_norm = normalize(metrics.tns, baseline.tns);
    let area_norm = normalize(metrics.area, baseline.area);
    let penalty = if area_norm > weights.area_penalty_threshold {
        weights.area_penalty
    } else {
        0.0
    };
    let score =
        weights.alpha * wns_norm + weights.beta * tns_norm + weights.gamma * area_norm + penalty;
    CandidateScore {
        wns_norm,
        tns_norm,
        area_norm,
        penalty,
        score,
        sec_pass: false,
    }
}

/// The score of the baseline design against itself.
pub fn baseline_score() -> CandidateScore {
    CandidateScore {
        wns_norm: 0.0,
        tns_norm: 0.0,
        area_norm: 0.0,
        penalty: 0.0,
        score: 0.0,
        sec_pass: true,
    }
}

/// Anything that can take part in selection.
pub trait Scored {
    fn sec_pass(&self) -> bool;
    fn score_value(&self) -> Option<f64>;
}

impl Scored for CandidateScore {
    fn sec_pass(&self) -> bool {
        self.sec_pass
    }
    fn score_value(&self) -> Option<f64> {
        Some(self.score)
    }
}

impl<T: Scored> Scored for Option<T> {
    fn sec_pass(&self) -> bool {
        self.as_ref().is_some_and(|s| s.sec_pass())
    }
    fn score_value(&self) -> Option<f64> {
        self.as_ref().and_then(|s| s.score_value())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Selection {
    Parent,
    Candidate(usize),
}

/// Picks the next starting design: the lowest-scoring SEC-passing candidate
/// (ties to the smallest index), provided it scores strictly below the
/// parent. Otherwise the parent is kept.
pub fn select_next<P: Scored + ?Sized, C: Scored>(parent: &P, group: &[C]) -> Selection {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in group.iter().enumerate() {
        if !c.sec_pass() {
            continue;
        }
        let Some(s) = c.score_value() else { continue };
        if best.is_none_or(|(_, b)| s < b) {
            best = Some((i, s));
        }
    }
    match (best, parent.score_value()) {
        (Some((i, s)), Some(p)) if s < p => Selection::Candidate(i),
        (Some((i, _)), None) => Selection::Candidate(i),
        _ => Selection::Parent,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub mean: f64,
    pub stddev: f64,
    pub advantages: Vec<f64>,
}

/// Standardizes scores within a group: `A_i = (s_i − μ)/σ` with population
/// σ. Groups of one, or with σ below 1e-12, get all-zero advantages.
pub fn group_advantage(scores: &[f64]) -> GroupStats {
    let n = scores.len();
    if n == 0 {
        return GroupStats {
            mean: 0.0,
            stddev: 0.0,
            advantages: vec![],
        };
    }
    let mean = scores.iter().sum::<f64>() / n as f64;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64;
    let stddev = var.sqrt();
    let advantages = if n <= 1 || stddev < SIGMA_EPS {
        vec![0.0; n]
    } else {
        scores.iter().map(|s| (s - mean) / stddev).collect()
    };
    GroupStats {
        mean,
        stddev,
        advantages,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cs(score: f64, pass: bool) -> CandidateScore {
        CandidateScore {
            wns_norm: 0.0,
            tns_norm: 0.0,
            area_norm: 0.0,
            penalty: 0.0,
            score,
            sec_pass: pass,
        }
    }

    #[test]
    fn normalize_cases() {
        assert!((normalize(-0.09, -0.27) + 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(normalize(3.5, 3.5), 0.0);
        assert_eq!(normalize(-0.2, 0.0), -10.0);
        assert_eq!(normalize(0.2, 0.0), 10.0);
        assert_eq!(normalize(0.0, 0.0), 0.0);
    }

    #[test]
    fn identical_to_baseline_scores_zero() {
        let m = PpaMetrics {
            wns: -0.3,
            tns: -1.0,
            area: 100.0,
        };
        let s = score(&m, &m, &ScoreWeights::default());
        assert_eq!(s.score, 0.0);
        assert_eq!(s.penalty, 0.0);
    }

    #[test]
    fn penalty_threshold_is_strict() {
        let base = PpaMetrics {
            wns: -0.3,
            tns: -1.0,
            area: 100.0,
        };
        let w = ScoreWeights {
            area_penalty_threshold: 0.25,
            ..ScoreWeights::default()
        };
        let at = PpaMetrics {
            area: 125.0,
            ..base
        };
        assert_eq!(score(&at, &base, &w).penalty, 0.0);
        let over = PpaMetrics {
            area: 125.5,
            ..base
        };
        assert_eq!(score(&over, &base, &w).penalty, 0.5);
    }

    #[test]
    fn selection_gate() {
        let parent = cs(0.0, true);
        let g = [cs(0.2, false), cs(-0.1, true), cs(-0.3, false)];
        assert_eq!(select_next(&parent, &g), Selection::Candidate(1));
        assert_eq!(
            select_next(&parent, &[cs(-0.5, true)]),
            Selection::Candidate(0)
        );
        assert_eq!(
            select_next(&parent, &[cs(-0.5, false), cs(-1.0, false)]),
            Selection::Parent
        );
        // Ties go to the lower index; equalling the parent keeps the parent.
        assert_eq!(
            select_next(&parent, &[cs(-0.2, true), cs(-0.2, true)]),
            Selection::Candidate(0)
        );
        assert_eq!(select_next(&parent, &[cs(0.0, true)]), Selection::Parent);
        let skipped: [Option<CandidateScore>; 2] = [None, Some(cs(-0.1, true))];
        assert_eq!(select_next(&parent, &skipped), Selection::Candidate(1));
    }

    #[test]
    fn advantage_examples() {
        let g = group_advantage(&[-1.0, 1.0]);
        assert_eq!((g.mean, g.stddev), (0.0, 1.0));
        assert_eq!(g.advantages, vec![-1.0, 1.0]);

        let g = group_advantage(&[-0.5, -0.2, 0.1]);
        assert!((g.mean + 0.2).abs() < 1e-12);
        assert!((g.stddev - 0.06f64.sqrt()).abs() < 1e-12);
        let expect = 0.3 / 0.06f64.sqrt();
        assert!((g.advantages[0] + expect).abs() < 1e-9);
        assert!(g.advantages[1].abs() < 1e-9);
        assert!((g.advantages[2] - expect).abs() < 1e-9);

        assert_eq!(group_advantage(&[0.3, 0.3, 0.3]).advantages, vec![0.0; 3]);
        assert_eq!(group_advantage(&[0.7]).advantages, vec![0.0]);
        assert!(group_advantage(&[]).advantages.is_empty());
    }

    #[test]
    fn weights_validation() {
        assert!(ScoreWeights::default().validate().is_ok());
        assert!(ScoreWeights {
            alpha: 1.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ScoreWeights {
            area_penalty_threshold: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    proptest! {
        #[test]
        fn improving_wns_lowers_score(base_wns in -2.0f64..-0.01, w1 in 0.0f64..1.0, w2 in 0.0f64..1.0) {
            let base = PpaMetrics { wns: base_wns, tns: base_wns * 3.0, area: 50.0 };
            let (lo, hi) = if w1 < w2 { (w1, w2) } else { (w2, w1) };
            prop_assume!(hi - lo > 1e-6);
            let worse = PpaMetrics { wns: base_wns * (1.0 - lo), ..base };
            let better = PpaMetrics { wns: base_wns * (1.0 - hi), ..base };
            let w = ScoreWeights::default();
            prop_assert!(score(&better, &base, &w).score < score(&worse, &base, &w).score);
        }

        #[test]
        fn score_is_weighted_sum(wns in -1.0f64..0.0, tns in -5.0f64..0.0, area in 1.0f64..200.0) {
            let base = PpaMetrics { wns: -0.4, tns: -2.0, area: 100.0 };
            let w = ScoreWeights::default();
            let s = score(&PpaMetrics { wns, tns, area }, &base, &w);
            let expect = w.alpha * s.wns_norm + w.beta * s.tns_norm + w.gamma * s.area_norm + s.penalty;
            prop_assert!((s.score - expect).abs() <= 1e-12);
        }

        #[test]
        fn selection_never_picks_failing(scores in proptest::collection::vec((-2.0f64..2.0, any::<bool>()), 1..8)) {
            let g: Vec<_> = scores.iter().map(|&(s, p)| cs(s, p)).collect();
            match select_next(&cs(0.0, true), &g) {
                Selection::Candidate(i) => {
                    prop_assert!(g[i].sec_pass);
                    prop_assert!(g[i].score < 0.0);
                }
                Selection::Parent => prop_assert!(g.iter().all(|c| !c.sec_pass || c.score >= 0.0)),
            }
        }
    }
}
