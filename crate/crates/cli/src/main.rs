// SPDX-License-Identifier: Apache-2.0

//! `rtlopt`: optimize designs, evaluate them once, inspect runs, manage skill
//! libraries and export run metrics.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use rtlopt::backend::{self, BackendError};
use rtlopt::config::RunConfig;
use rtlopt::orchestrator::{self, RunError, RunOptions, RunResult};
use rtlopt::rtl::{parse, RtlDesign};
use rtlopt::scoring::normalize;
use rtlopt::skills::{SkillLibrary, Tier};
use rtlopt::trajectory::{CandidateStatus, RunState, TrajectoryStore};

#[derive(Parser)]
#[command(
    name = "rtlopt",
    version,
    about = "Closed-loop RTL timing optimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the optimization loop on a design.
    Optimize {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Skill library to start from; updated with what the run learns.
        #[arg(long)]
        skills: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory that receives `<run_id>/`.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Synthesize a design once, and check it against a golden design.
    Eval {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        golden: Option<PathBuf>,
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the trajectory of a run.
    Show {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        iteration: Option<usize>,
    },
    /// Manage skill libraries.
    Skills {
        #[command(subcommand)]
        action: SkillsAction,
    },
    /// Export per-iteration best-so-far metrics of a run.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
}

#[derive(Subcommand)]
enum SkillsAction {
    /// List entries grouped by tier.
    List {
        #[arg(long, default_value = "skills.json")]
        skills: PathBuf,
    },
    /// Copy a library to a new file in canonical form.
    Export {
        #[arg(long, default_value = "skills.json")]
        skills: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge an exported library into the local one.
    Import {
        #[arg(long, default_value = "skills.json")]
        skills: PathBuf,
        #[arg(long)]
        from: PathBuf,
    },
    /// Merge several libraries into one file.
    Merge {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Exit status for configuration problems.
const EXIT_CONFIG: u8 = 1;
/// Exit status for design or backend failures.
const EXIT_BACKEND: u8 = 2;

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: EXIT_CONFIG,
            error: e.into(),
        }
    }
}

fn fail(code: u8, error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code,
        error: error.into(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Optimize {
            design,
            config,
            skills,
            seed,
            out,
        } => optimize(&design, &config, skills.as_deref(), seed, &out),
        Command::Eval {
            design,
            golden,
            config,
        } => eval(&design, golden.as_deref(), &config),
        Command::Show { run, iteration } => show(&run, iteration).map_err(Failure::from),
        Command::Skills { action } => skills(action).map_err(Failure::from),
        Command::Report { run, format } => report(&run, format).map_err(Failure::from),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    RunConfig::load(path).map_err(|e| fail(EXIT_CONFIG, e))
}

fn load_design(path: &Path) -> Result<RtlDesign, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read design {}", path.display()))
        .map_err(|e| fail(EXIT_BACKEND, e))?;
    parse(&text)
        .with_context(|| format!("{} does not elaborate", path.display()))
        .map_err(|e| fail(EXIT_BACKEND, e))
}

fn load_library(path: &Path) -> Result<SkillLibrary> {
    if path.exists() {
        SkillLibrary::import(path).with_context(|| format!("cannot import {}", path.display()))
    } else {
        Ok(SkillLibrary::new())
    }
}

fn optimize(
    design: &Path,
    config: &Path,
    skills: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), Failure> {
    let mut cfg = load_config(config)?;
    if seed.is_some() {
        cfg.run.seed = seed;
    }
    let library = match skills {
        Some(p) => load_library(p).map_err(|e| fail(EXIT_CONFIG, e))?,
        None => SkillLibrary::new(),
    };
    let d = load_design(design)?;
    let options = RunOptions {
        out_root: Some(out.to_path_buf()),
        library,
        proposer: None,
    };
    let output = orchestrator::run(&d, &cfg, options).map_err(|e| match e {
        RunError::Baseline(_) => fail(EXIT_BACKEND, e),
        RunError::Config(_) | RunError::Exists(_) => fail(EXIT_CONFIG, e),
        other => fail(EXIT_BACKEND, other),
    })?;
    if let Some(p) = skills {
        output.library.export(p).map_err(|e| fail(EXIT_CONFIG, e))?;
    }
    print!("{}", summary(&output.result));
    if let Some(dir) = &output.dir {
        println!("run directory: {}", dir.display());
    }
    Ok(())
}

/// A value with its relative change, e.g. `-0.09 (-66.7%)`.
pub fn delta_cell(value: f64, baseline: f64, decimals: usize) -> String {
    let pct = normalize(value, baseline) * 100.0;
    let pct = if pct.abs() < 0.05 { 0.0 } else { pct };
    format!("{value:.decimals$} ({pct:.1}%)")
}

fn summary(r: &RunResult) -> String {
    let mut s = String::new();
    let area_decimals = if r.baseline.area.fract() == 0.0 && r.best.area.fract() == 0.0 {
        0
    } else {
        2
    };
    let rows = [
        ("WNS (ns)", r.baseline.wns, r.best.wns, 2),
        ("TNS (ns)", r.baseline.tns, r.best.tns, 2),
        ("Area", r.baseline.area, r.best.area, area_decimals),
    ];
    let _ = writeln!(s, "{:<10} {:>14} {:>22}", "metric", "baseline", "best");
    for (name, b, v, dec) in rows {
        let _ = writeln!(
            s,
            "{:<10} {:>14.dec$} {:>22}",
            name,
            b,
            delta_cell(v, b, dec)
        );
    }
    let _ = writeln!(
        s,
        "best design {} | score {:.4} | SEC pass rate {:.1}% | converged after {} iteration(s) | status {:?}",
        r.best_design,
        r.best_score,
        r.sec_pass_rate * 100.0,
        r.convergence_steps,
        r.status
    );
    s
}

fn eval(design: &Path, golden: Option<&Path>, config: &Path) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let be = backend::from_config(&cfg.effective_backend()).map_err(|e| fail(EXIT_CONFIG, e))?;
    let d = load_design(design)?;
    let g = golden.map(load_design).transpose()?;
    let result = be.evaluate(g.as_ref(), &d).map_err(|e| match e {
        BackendError::Config(_) => fail(EXIT_CONFIG, e),
        other => fail(EXIT_BACKEND, other),
    })?;
    let mut v = serde_json::to_value(result.metrics).map_err(|e| fail(EXIT_BACKEND, e))?;
    if g.is_some() {
        v["sec_pass"] = serde_json::Value::Bool(result.sec_pass);
        v["sec_mode"] = serde_json::to_value(result.sec_mode).map_err(|e| fail(EXIT_BACKEND, e))?;
        if let Some(cex) = &result.counterexample {
            v["counterexample"] = serde_json::to_value(cex).map_err(|e| fail(EXIT_BACKEND, e))?;
        }
    }
    println!(
        "{}",
        rtlopt::canon::to_string(&v).map_err(|e| fail(EXIT_BACKEND, e))?
    );
    Ok(())
}

fn load_run(dir: &Path) -> Result<RunState> {
    if !dir.is_dir() {
        bail!("run directory {} does not exist", dir.display());
    }
    TrajectoryStore::load(dir).with_context(|| format!("cannot load {}", dir.display()))
}

fn show(dir: &Path, iteration: Option<usize>) -> Result<()> {
    let state = load_run(dir)?;
    let k = state.iterations.len();
    println!(
        "run {} on {} ({:?}, {} iteration(s), baseline WNS {:.3} TNS {:.3} area {})",
        state.run_id,
        state.design_name,
        state.status,
        k,
        state.baseline.wns,
        state.baseline.tns,
        state.baseline.area
    );
    let picked: Vec<_> = match iteration {
        Some(t) if t >= k => {
            if k == 0 {
                bail!("iteration {t} is out of range: the run has no iterations");
            }
            bail!(
                "iteration {t} is out of range: valid iterations are 0..={}",
                k - 1
            );
        }
        Some(t) => vec![&state.iterations[t]],
        None => state.iterations.iter().collect(),
    };
    for it in picked {
        println!(
            "iteration {} | parent {} | selected {}",
            it.index,
            it.parent,
            it.selected.as_deref().unwrap_or("parent kept")
        );
        if let Some(g) = &it.group_stats {
            println!("  group mean {:.4} stddev {:.4}", g.mean, g.stddev);
        }
        for c in &it.candidates {
            match c.status {
                CandidateStatus::Skipped => println!("  {} skipped: {}", c.id, c.rationale),
                CandidateStatus::EvalError => println!(
                    "  {} eval-error: {}",
                    c.id,
                    c.error.as_deref().unwrap_or("unknown")
                ),
                CandidateStatus::Evaluated => {
                    let e = c.eval.as_ref().expect("evaluated candidate has a result");
                    println!(
                        "  {} {:?} sec={} wns={:.3} tns={:.3} area={} score={} adv={}",
                        c.id,
                        c.proposer.expect("evaluated candidate has a proposer"),
                        if e.sec_pass { "pass" } else { "fail" },
                        e.metrics.wns,
                        e.metrics.tns,
                        e.metrics.area,
                        c.score.map_or("-".into(), |s| format!("{:.4}", s.score)),
                        c.advantage.map_or("-".into(), |a| format!("{a:.3}")),
                    );
                }
            }
            for ev in &c.path_events {
                println!(
                    "    path {} -> {} slack {:.3}: {} ({}) -> {} at lines {}-{}: {}",
                    ev.diagnosis.path.startpoint,
                    ev.diagnosis.path.endpoint,
                    ev.diagnosis.path.slack_ns,
                    ev.diagnosis.root_cause,
                    ev.diagnosis.pattern,
                    ev.transformation.strategy,
                    ev.transformation.region.start_line,
                    ev.transformation.region.end_line,
                    ev.outcome
                );
            }
        }
    }
    Ok(())
}

fn skills(action: SkillsAction) -> Result<()> {
    match action {
        SkillsAction::List { skills } => {
            let lib = load_library(&skills)?;
            println!(
                "{:<8} {:<52} {:>5} {:>6} {:>9}",
                "tier", "skill", "occ", "pass", "mean_adv"
            );
            for tier in [Tier::High, Tier::Medium, Tier::Low, Tier::Avoid] {
                for s in lib.skills().filter(|s| s.tier == tier) {
                    println!(
                        "{:<8} {:<52} {:>5} {:>6.2} {:>9.3}",
                        tier.to_string(),
                        s.id,
                        s.occurrence_count,
                        s.pass_rate(),
                        s.mean_advantage
                    );
                }
            }
        }
        SkillsAction::Export { skills, out } => {
            let lib = SkillLibrary::import(&skills)
                .with_context(|| format!("cannot import {}", skills.display()))?;
            lib.export(&out)?;
        }
        SkillsAction::Import { skills, from } => {
            let local = load_library(&skills)?;
            let other = SkillLibrary::import(&from)
                .with_context(|| format!("cannot import {}", from.display()))?;
            SkillLibrary::merge([&local, &other])?.export(&skills)?;
        }
        SkillsAction::Merge { out, inputs } => {
            let libs = inputs
                .iter()
                .map(|p| {
                    SkillLibrary::import(p)
                        .with_context(|| format!("cannot import {}", p.display()))
                })
                .collect::<Result<Vec<_>>>()?;
            SkillLibrary::merge(&libs)?.export(&out)?;
        }
    }
    Ok(())
}

fn report(dir: &Path, format: Format) -> Result<()> {
    let state = load_run(dir)?;
    let rows = orchestrator::series(&state);
    match format {
        Format::Csv => {
            println!("t,best_wns,best_tns,best_area,best_score,sec_pass_rate_cum");
            for r in rows {
                println!(
                    "{},{},{},{},{},{}",
                    r.t, r.best_wns, r.best_tns, r.best_area, r.best_score, r.sec_pass_rate_cum
                );
            }
        }
        Format::Json => {
            let epsilon = state
                .config
                .pointer("/run/epsilon")
                .and_then(serde_json::Value::as_f64)
                .unwrap_or(rtlopt::trajectory::DEFAULT_EPSILON);
            let v = serde_json::json!({
                "result": RunResult::from_state(&state, epsilon),
                "series": rows,
            });
            println!("{}", rtlopt::canon::to_string(&v)?);
        }
    }
    Ok(())
}
