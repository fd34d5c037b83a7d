// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::{d, rewrite_corpus, sec_corpus, stub, ADDER, ADDER_BALANCED};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rtlopt::backend::sec::{check, SecSettings};
use rtlopt::backend::{PpaMetrics, SecMode};
use rtlopt::config::RunConfig;
use rtlopt::orchestrator::{self, RunOptions, RunOutput, RunResult};
use rtlopt::par::Exec;
use rtlopt::proposer::{
    self, rewrite, LlmClient, LlmConfig, LlmSession, ProposerConfig, Provenance,
};
use rtlopt::rtl::simulate;
use rtlopt::scoring::{group_advantage, score, ScoreWeights};
use rtlopt::skills::{PatternId, SkillLibrary, StrategyId};
use rtlopt::timing::{diagnose, select_critical_paths};
use rtlopt::trajectory::TrajectoryStore;
use serde_json::Value;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn within(x: f64, want: f64, tol: f64) -> bool {
    (x - want).abs() <= tol
}

fn budget(started: Instant, limit: Duration) -> Result<(), String> {
    let took = started.elapsed();
    if took > limit {
        Err(format!("took {took:?}, budget {limit:?}"))
    } else {
        Ok(())
    }
}

/// Scoring of two published result rows from their raw values.
fn criterion_1() -> Outcome {
    let started = Instant::now();
    let w = ScoreWeights::default();
    let m = |wns, tns, area| PpaMetrics { wns, tns, area };
    let mut errors = vec![];

    let vending = score(&m(-0.09, -0.5, 20533.0), &m(-0.27, -1.02, 20488.0), &w);
    // Printed percentages: (-66.7%), (-51.0%), (0.2%).
    for (name, got, printed) in [
        ("wns", vending.wns_norm, -66.7),
        ("tns", vending.tns_norm, -51.0),
        ("area", vending.area_norm, 0.2),
    ] {
        if !within(got * 100.0, printed, 0.1) {
            errors.push(format!(
                "vending {name} norm {:.4}% vs printed {printed}%",
                got * 100.0
            ));
        }
    }
    for (name, got, want) in [
        ("wns", vending.wns_norm, -0.6667),
        ("tns", vending.tns_norm, -0.5098),
        ("area", vending.area_norm, 0.0022),
    ] {
        if !within(got, want, 1e-4) {
            errors.push(format!("vending {name} norm {got:.6} vs {want}"));
        }
    }
    if vending.penalty != 0.0 {
        errors.push(format!("vending penalty {}", vending.penalty));
    }
    if !within(vending.score, -0.5118, 1e-4) {
        errors.push(format!(
            "vending score {:.6} outside -0.5118 +/- 1e-4",
            vending.score
        ));
    }

    let comm = score(&m(-0.26, -58.84, 2446.0), &m(-0.4, -73.08, 2092.0), &w);
    if !within(comm.area_norm * 100.0, 17.0, 0.1) {
        errors.push(format!(
            "communicate area norm {:.4}%",
            comm.area_norm * 100.0
        ));
    }
    if comm.penalty != 0.5 {
        errors.push(format!("communicate penalty {}", comm.penalty));
    }
    if !within(comm.score, 0.2823, 1e-4) {
        errors.push(format!(
            "communicate score {:.6} outside 0.2823 +/- 1e-4",
            comm.score
        ));
    }
    budget(started, Duration::from_secs(1))?;
    if errors.is_empty() {
        Ok(format!(
            "vending {:.6}, communicate {:.6}",
            vending.score, comm.score
        ))
    } else {
        Err(errors.join("; "))
    }
}

/// Group standardization over random groups.
fn criterion_2() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut groups = 0;
    while groups < 1000 {
        let n = rng.random_range(2..=16);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mu = scores.iter().sum::<f64>() / n as f64;
        let sigma = (scores.iter().map(|s| (s - mu) * (s - mu)).sum::<f64>() / n as f64).sqrt();
        if sigma <= 0.0 {
            continue;
        }
        groups += 1;
        let a = group_advantage(&scores).advantages;
        let mean = a.iter().sum::<f64>() / n as f64;
        let sd = (a.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64).sqrt();
        ensure!(within(mean, 0.0, 1e-9), "mean(A) = {mean:e} for {scores:?}");
        ensure!(within(sd, 1.0, 1e-9), "std(A) = {sd} for {scores:?}");

        let shift = rng.random_range(-5.0..5.0);
        let scale = rng.random_range(0.1..10.0);
        let moved: Vec<f64> = scores.iter().map(|s| s * scale + shift).collect();
        let b = group_advantage(&moved).advantages;
        for (x, y) in a.iter().zip(&b) {
            ensure!(
                within(*x, *y, 1e-9),
                "not invariant under {scale}x + {shift}: {x} vs {y}"
            );
        }
    }
    for n in 1..=16 {
        let flat = group_advantage(&vec![0.37; n]).advantages;
        ensure!(
            flat.iter().all(|&x| x == 0.0),
            "equal group of {n} gave {flat:?}"
        );
    }
    budget(started, Duration::from_secs(5))?;
    Ok(format!("{groups} groups"))
}

/// SEC verdicts on the labelled corpus, with replayed counterexamples.
fn criterion_3() -> Outcome {
    let started = Instant::now();
    let corpus = sec_corpus();
    ensure!(corpus.len() == 20, "corpus has {} pairs", corpus.len());
    ensure!(
        corpus.iter().filter(|c| c.3).count() == 10,
        "corpus is not 10/10"
    );
    for (name, g, c, equivalent) in &corpus {
        let (g, c) = (d(g), d(c));
        let r = check(&g, &c, &SecSettings::default()).map_err(|e| format!("{name}: {e}"))?;
        ensure!(
            r.mode == SecMode::Exhaustive,
            "{name}: checked in {:?} mode",
            r.mode
        );
        ensure!(
            r.pass == *equivalent,
            "{name}: verdict {} but labelled {}",
            r.pass,
            equivalent
        );
        if !r.pass {
            let cx = r
                .counterexample
                .ok_or(format!("{name}: no counterexample"))?;
            let frames = cx.sequence.len();
            let go = simulate(&g, &cx.sequence, frames).map_err(|e| e.to_string())?;
            let co = simulate(&c, &cx.sequence, frames).map_err(|e| e.to_string())?;
            ensure!(
                go[cx.frame][&cx.output] != co[cx.frame][&cx.output],
                "{name}: counterexample does not replay"
            );
            ensure!(
                go[cx.frame][&cx.output] == cx.golden && co[cx.frame][&cx.output] == cx.candidate,
                "{name}: counterexample values differ from replay"
            );
        }
    }
    budget(started, Duration::from_secs(30))?;
    Ok("20 pairs classified, 10 counterexamples replayed".into())
}

/// Every site of every strategy on the rewrite corpus preserves behaviour.
fn criterion_4() -> Outcome {
    let started = Instant::now();
    let mut per_strategy: BTreeMap<StrategyId, usize> = BTreeMap::new();
    let mut designs: Vec<&str> = rewrite_corpus();
    designs.extend(sec_corpus().iter().flat_map(|c| [c.1, c.2]));
    for src in designs {
        let parent = d(src);
        for &strategy in StrategyId::ALL {
            for site in rewrite::sites(&parent, strategy) {
                let rw = match rewrite::apply_at(&parent, &site) {
                    Ok(rw) => rw,
                    Err(e) => return Err(format!("{} on {}: {e}", strategy, parent.name)),
                };
                let r = check(&parent, &rw.design, &SecSettings::default())
                    .map_err(|e| e.to_string())?;
                ensure!(
                    r.mode == SecMode::Exhaustive,
                    "{strategy} on {}: {:?} mode",
                    parent.name,
                    r.mode
                );
                ensure!(
                    r.pass,
                    "{strategy} at `{}` broke {}:\n{}",
                    site.label,
                    parent.name,
                    rw.design.canonical_source()
                );
                *per_strategy.entry(strategy).or_default() += 1;
            }
        }
    }
    for &s in StrategyId::ALL {
        ensure!(
            per_strategy.get(&s).copied().unwrap_or(0) > 0,
            "no site exercised {s}"
        );
    }
    budget(started, Duration::from_secs(60))?;
    let total: usize = per_strategy.values().sum();
    Ok(format!(
        "{total} rewrites across {} strategies",
        per_strategy.len()
    ))
}

fn adder_config() -> RunConfig {
    let mut c = RunConfig::default();
    c.run.iterations = 3;
    c.proposer.n_candidates = 5;
    c.run.seed = Some(11);
    c
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(p) = stack.pop() {
        for e in std::fs::read_dir(&p).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn adder_run(root: &Path, library: SkillLibrary) -> Result<RunOutput, String> {
    let opts = RunOptions {
        out_root: Some(root.to_path_buf()),
        library,
        proposer: None,
    };
    orchestrator::run(&d(ADDER), &adder_config(), opts).map_err(|e| e.to_string())
}

/// Closed loop on the chained adder.
fn criterion_5() -> Outcome {
    let started = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = adder_run(&tmp.path().join("a"), SkillLibrary::new())?;
    // clk-to-q 0.05 + three 8-bit adders at 0.05 + 0.02*8 + setup 0.05 = 0.73 ns
    ensure!(
        a.result.baseline.wns == -0.23,
        "baseline WNS {}",
        a.result.baseline.wns
    );
    ensure!(a.result.best.wns >= -0.02, "best WNS {}", a.result.best.wns);
    ensure!(
        a.result.best.area == a.result.baseline.area,
        "area {} vs {}",
        a.result.best.area,
        a.result.baseline.area
    );
    let s = &a.result.best_so_far;
    ensure!(s.len() == 3, "series {s:?}");
    ensure!(
        s[0] <= 0.0 && s.windows(2).all(|w| w[1] <= w[0]),
        "best-so-far not non-increasing: {s:?}"
    );
    let b = adder_run(&tmp.path().join("b"), SkillLibrary::new())?;
    let (ta, tb) = (
        read_tree(a.dir.as_ref().unwrap()),
        read_tree(b.dir.as_ref().unwrap()),
    );
    ensure!(ta.contains_key("state.json"), "no state.json");
    ensure!(ta == tb, "run directories differ");
    budget(started, Duration::from_secs(30))?;
    Ok(format!(
        "best WNS {} from {}, {} files identical",
        a.result.best.wns,
        a.result.baseline.wns,
        ta.len()
    ))
}

fn reached_optimum_at(out: &RunOutput) -> Option<usize> {
    orchestrator::series(&out.state)
        .iter()
        .position(|r| r.best_wns >= -0.02)
}

/// Skill distillation and reuse.
fn criterion_6() -> Outcome {
    let started = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = adder_run(&tmp.path().join("a"), SkillLibrary::new())?;
    let lib = first.library.clone();
    let k = lib
        .get(PatternId::WideArithmetic, StrategyId::TreeRebalance)
        .ok_or("no wide-arithmetic/tree-rebalance entry")?;
    ensure!(k.occurrence_count >= 1, "occurrence {}", k.occurrence_count);
    ensure!(k.pass_rate() == 1.0, "pass rate {}", k.pass_rate());
    ensure!(
        k.mean_advantage < 0.0,
        "mean advantage {}",
        k.mean_advantage
    );

    let mut again = lib.clone();
    for it in &first.state.iterations {
        again
            .distill(&first.state.run_id, it)
            .map_err(|e| e.to_string())?;
    }
    ensure!(again == lib, "re-distilling changed the library");

    let variant =
        "module add4v(input [7:0] p, input [7:0] q, input [7:0] r, input [7:0] s, output [7:0] z);
  assign z = ((s + r) + q) + p;
endmodule
";
    let cfg = adder_config();
    let run_variant = |library: SkillLibrary, sub: &str| {
        let opts = RunOptions {
            out_root: Some(tmp.path().join(sub)),
            library,
            proposer: None,
        };
        orchestrator::run(&d(variant), &cfg, opts).map_err(|e| e.to_string())
    };
    let cold = run_variant(SkillLibrary::new(), "cold")?;
    let warm = run_variant(lib, "warm")?;
    let (c, w) = (reached_optimum_at(&cold), reached_optimum_at(&warm));
    ensure!(w.is_some(), "library-guided run never reached the optimum");
    ensure!(c.is_none() || w <= c, "with library {w:?}, without {c:?}");
    let guided = warm.state.iterations[0]
        .candidates
        .iter()
        .any(|c| c.skill.as_deref() == Some("wide-arithmetic/tree-rebalance"));
    ensure!(guided, "preloaded skill was not used");
    budget(started, Duration::from_secs(60))?;
    Ok(format!(
        "optimum at iteration {w:?} with library, {c:?} without"
    ))
}

/// Independent recount of the run metrics from the persisted state file.
fn criterion_7() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = adder_run(tmp.path(), SkillLibrary::new())?;
    let dir = out.dir.clone().unwrap();
    let text = std::fs::read_to_string(dir.join("state.json")).map_err(|e| e.to_string())?;
    let state: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let result: RunResult =
        serde_json::from_str(&std::fs::read_to_string(dir.join("result.json")).unwrap())
            .map_err(|e| e.to_string())?;

    let (mut passed, mut generated) = (0usize, 0usize);
    let mut best = 0.0f64;
    let mut series = vec![];
    for it in state["iterations"].as_array().unwrap() {
        for c in it["candidates"].as_array().unwrap() {
            if c["status"] == "skipped" {
                continue;
            }
            generated += 1;
            if c["status"] == "evaluated" && c["eval"]["sec_pass"] == true {
                passed += 1;
                best = best.min(c["score"]["score"].as_f64().unwrap());
            }
        }
        series.push(best);
    }
    let rate = passed as f64 / generated as f64;
    ensure!(
        rate == result.sec_pass_rate,
        "sec_pass_rate {rate} vs {}",
        result.sec_pass_rate
    );
    ensure!(
        series == result.best_so_far,
        "series {series:?} vs {:?}",
        result.best_so_far
    );
    // Last iteration whose best-so-far improved by at least epsilon.
    let eps = state["config"]["run"]["epsilon"].as_f64().unwrap();
    let mut prev = 0.0;
    let mut last: Option<usize> = None;
    for (t, &s) in series.iter().enumerate() {
        if prev - s >= eps {
            last = Some(t);
        }
        prev = s;
    }
    let steps = match last {
        None => 0,
        Some(t) if t + 1 == series.len() => series.len(),
        Some(t) => t,
    };
    ensure!(
        steps == result.convergence_steps,
        "convergence {steps} vs {}",
        result.convergence_steps
    );
    ensure!(
        result == out.result,
        "result.json differs from the returned result"
    );

    let reloaded = TrajectoryStore::load(&dir).map_err(|e| e.to_string())?;
    ensure!(reloaded.to_json() == text, "state.json does not round-trip");
    let skills = std::fs::read_to_string(dir.join("skills.json")).unwrap();
    let lib = SkillLibrary::from_json(&skills).map_err(|e| e.to_string())?;
    ensure!(lib.to_json() == skills, "skills.json does not round-trip");
    let rtext = std::fs::read_to_string(dir.join("result.json")).unwrap();
    ensure!(
        rtlopt::canon::to_string(&result).unwrap() == rtext,
        "result.json does not round-trip"
    );
    Ok(format!("pass rate {rate}, convergence {steps}"))
}

fn llm_config(url: &str, key_env: &str, retries: u32) -> LlmConfig {
    LlmConfig {
        base_url: url.to_string(),
        model: "stub-model".into(),
        api_key_env: key_env.into(),
        timeout_s: 10,
        max_retries: retries,
        temperature: 0.0,
    }
}

/// Model path against a local stub endpoint.
fn criterion_8() -> Outcome {
    std::env::set_var("RTLOPT_ACCEPTANCE_KEY", "test-key");
    let parent = d(ADDER);
    let (_, report) = rtlopt::backend::sta::analyze(&parent, 0.5);
    let diags: Vec<_> = select_critical_paths(&report, 1)
        .iter()
        .map(|p| diagnose(p, &parent))
        .collect();
    let explore_all = |url: &str, n: usize, retries: u32| ProposerConfig {
        n_candidates: n,
        exploration_fraction: 1.0,
        llm: Some(llm_config(url, "RTLOPT_ACCEPTANCE_KEY", retries)),
    };

    // A valid reply becomes a model proposal.
    let good = stub(|_, _| format!("strategy: tree-rebalance\n```verilog\n{ADDER_BALANCED}```\n"));
    let cfg = explore_all(&good.url, 1, 1);
    let client = LlmClient::new(cfg.llm.clone().unwrap());
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let session = LlmSession {
        client: &client,
        transcript_dir: Some(tmp.path().to_path_buf()),
        tag: "t0".into(),
        exec: Exec::Sequential,
    };
    let slots =
        proposer::propose_group(&parent, &diags, &SkillLibrary::new(), &cfg, Some(&session));
    let p = slots[0]
        .proposal()
        .ok_or("valid reply produced no proposal")?;
    ensure!(
        p.provenance
            == Provenance::Llm {
                model: "stub-model".into()
            },
        "provenance {:?}",
        p.provenance
    );
    ensure!(
        p.design.canonical_source() == d(ADDER_BALANCED).canonical_source(),
        "unexpected design"
    );
    ensure!(
        p.strategy == Some(StrategyId::TreeRebalance),
        "strategy {:?}",
        p.strategy
    );
    ensure!(
        tmp.path().join("t0-c0-a0.json").is_file(),
        "transcript not written"
    );

    // Prose is retried, then the slot falls back to rules.
    let prose = stub(|_, _| "I would rebalance the adder tree.".into());
    let cfg = explore_all(&prose.url, 2, 2);
    let client = LlmClient::new(cfg.llm.clone().unwrap());
    let session = LlmSession {
        client: &client,
        transcript_dir: None,
        tag: "t0".into(),
        exec: Exec::Parallel,
    };
    let slots =
        proposer::propose_group(&parent, &diags, &SkillLibrary::new(), &cfg, Some(&session));
    let hits = prose.hits.load(std::sync::atomic::Ordering::SeqCst);
    ensure!(hits == 2 * 3, "{hits} requests for 2 slots with 2 retries");
    for s in &slots {
        let p = s.proposal().ok_or("malformed reply left a slot empty")?;
        ensure!(
            matches!(p.provenance, Provenance::Rule { .. }),
            "fallback provenance {:?}",
            p.provenance
        );
    }

    // Changed ports are rejected.
    let ports = stub(|_, _| {
        "```\nmodule add4(input [7:0] a, output [7:0] y);\n  assign y = a;\nendmodule\n```".into()
    });
    let client = LlmClient::new(llm_config(&ports.url, "RTLOPT_ACCEPTANCE_KEY", 0));
    let out = client.propose(&parent, diags.first(), &Default::default(), None, "x");
    ensure!(
        matches!(out.result, Err(rtlopt::proposer::LlmError::Interface(_))),
        "changed ports gave {:?}",
        out.result.map(|_| ())
    );

    // A whole run with a misbehaving model still completes.
    let mut rc = adder_config();
    rc.run.iterations = 2;
    rc.proposer.llm = Some(llm_config(&prose.url, "RTLOPT_ACCEPTANCE_KEY", 1));
    let run_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let opts = RunOptions {
        out_root: Some(run_dir.path().to_path_buf()),
        ..Default::default()
    };
    let out = orchestrator::run(&parent, &rc, opts).map_err(|e| e.to_string())?;
    ensure!(
        out.result.best.wns >= -0.02,
        "run with fallback reached {}",
        out.result.best.wns
    );
    let llm_dir = out.dir.unwrap().join("llm");
    let transcripts = std::fs::read_dir(&llm_dir)
        .map_err(|e| e.to_string())?
        .count();
    ensure!(
        transcripts > 0,
        "no transcripts under {}",
        llm_dir.display()
    );
    Ok(format!("{transcripts} transcripts persisted"))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("score arithmetic on published rows", criterion_1),
        ("group-relative standardization", criterion_2),
        ("SEC oracle soundness", criterion_3),
        ("rewrite catalog preservation", criterion_4),
        ("closed loop on the chained adder", criterion_5),
        ("skill learning and reuse", criterion_6),
        ("metrics bookkeeping", criterion_7),
        ("model contract path", criterion_8),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let label = format!("criterion {}", i + 1);
        if !filter.is_empty()
            && !filter
                .iter()
                .any(|p| label.contains(p.as_str()) || name.contains(p.as_str()))
        {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("{label} [{name}]: PASS ({secs:.2}s) {detail}"),
            Err(why) => {
                failed += 1;
                println!("{label} [{name}]: FAIL ({secs:.2}s) {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criterion(s) failed");
        std::process::exit(1);
    }
}
