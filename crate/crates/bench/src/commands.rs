//! Subcommands. Each returns an [`Outcome`]; the binary prints the report
//! and exits with its code.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use mda_core::analysis::rate_fit;
use mda_core::problems::Problem;
use mda_core::runner::{mda_path_summary, run, theorem_eta, BetaRule, Method, RunOptions};
use mda_core::schedules::ScheduleSpec;
use mda_core::{Error as CoreError, RunTrace};
use rayon::prelude::*;

use crate::config::{OptimizerSpec, RunConfig};
use crate::output::{describe_schedule, fmt_f64, pm, write_trace, Table, TraceMeta, SINGLE_SEED_NOTE};
use crate::stats::{mean_se, MeanSe};
use crate::suites::{self, VerifyOptions};
use crate::{BenchError, Exit};

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Globals {
    pub config: Option<PathBuf>,
    /// Overrides `[run] output_dir`.
    pub out: Option<PathBuf>,
    /// Worker threads; `None` lets the pool decide.
    pub jobs: Option<usize>,
    /// Added to every seed.
    pub seed_offset: u64,
}

#[derive(Debug)]
pub struct Outcome {
    pub exit: Exit,
    pub report: String,
}

fn load(g: &Globals) -> Result<RunConfig, BenchError> {
    match &g.config {
        Some(p) => RunConfig::load(p),
        None => Err(BenchError::Config("--config <path> is required".into())),
    }
}

fn output_dir(g: &Globals, cfg: &RunConfig) -> Result<PathBuf, BenchError> {
    let dir = g.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    fs::create_dir_all(&dir)
        .map_err(|e| BenchError::Config(format!("cannot create output dir {}: {e}", dir.display())))?;
    Ok(dir)
}

fn pool(g: &Globals) -> Result<rayon::ThreadPool, BenchError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(g.jobs.unwrap_or(0))
        .build()
        .map_err(|e| BenchError::Config(format!("cannot start worker pool: {e}")))
}

fn seeds(g: &Globals, cfg: &RunConfig) -> Vec<u64> {
    cfg.seeds.iter().map(|s| s.wrapping_add(g.seed_offset)).collect()
}

/// One finished run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub label: String,
    pub seed: u64,
    pub schedule: ScheduleSpec,
    pub method: Method,
    pub trace: RunTrace,
}

/// A unit of work: method, schedule and options for one seed.
#[derive(Debug, Clone)]
struct Job {
    label: String,
    method: Method,
    schedule: ScheduleSpec,
    weight_decay: f64,
    skip_trace: bool,
    seed: u64,
}

fn execute(
    problem: &dyn Problem,
    jobs: Vec<Job>,
    cfg: &RunConfig,
    pool: &rayon::ThreadPool,
) -> Result<Vec<RunRecord>, BenchError> {
    let results: Vec<Result<RunRecord, CoreError>> = pool.install(|| {
        jobs.into_par_iter()
            .map(|j| {
                let opts = RunOptions {
                    return_mode: cfg.return_mode,
                    weight_decay: j.weight_decay,
                    skip_trace: j.skip_trace,
                    ..Default::default()
                };
                let trace = run(problem, &j.method, &j.schedule, cfg.total_steps, j.seed, &opts)?;
                Ok(RunRecord {
                    label: j.label,
                    seed: j.seed,
                    schedule: j.schedule,
                    method: j.method,
                    trace,
                })
            })
            .collect()
    });
    results.into_iter().map(|r| r.map_err(BenchError::from)).collect()
}

fn optimizer_jobs(cfg: &RunConfig, seeds: &[u64]) -> Vec<Job> {
    let mut jobs = Vec::new();
    for o in &cfg.optimizers {
        for &seed in seeds {
            jobs.push(job_for(o, cfg, seed));
        }
    }
    jobs
}

fn job_for(o: &OptimizerSpec, cfg: &RunConfig, seed: u64) -> Job {
    Job {
        label: o.name.clone(),
        method: o.method.clone(),
        schedule: o.schedule(&cfg.schedule),
        weight_decay: o.weight_decay,
        skip_trace: false,
        seed,
    }
}

fn write_traces(dir: &Path, problem: &str, cfg: &RunConfig, records: &[RunRecord]) -> Result<(), BenchError> {
    for r in records {
        let path = dir.join(format!("{}_seed{}.csv", r.label, r.seed));
        let meta = TraceMeta {
            problem,
            optimizer: &r.method.describe(),
            schedule: &describe_schedule(&r.schedule),
            total_steps: cfg.total_steps,
            seed: r.seed,
        };
        let mut w = BufWriter::new(File::create(&path)?);
        write_trace(&mut w, &meta, &r.trace)?;
        std::io::Write::flush(&mut w)?;
    }
    Ok(())
}

/// Per-label statistics in first-appearance order.
#[derive(Debug, Clone)]
pub struct GroupStats {
    pub label: String,
    pub final_loss: MeanSe,
    pub min_grad_norm_sq: MeanSe,
    pub aborted: usize,
}

pub fn group(records: &[RunRecord]) -> Vec<GroupStats> {
    let mut labels: Vec<&str> = Vec::new();
    for r in records {
        if !labels.contains(&r.label.as_str()) {
            labels.push(&r.label);
        }
    }
    labels
        .into_iter()
        .map(|label| {
            let rs: Vec<&RunRecord> = records.iter().filter(|r| r.label == label).collect();
            let loss: Vec<f64> = rs.iter().map(|r| r.trace.final_loss).collect();
            let grad: Vec<f64> = rs.iter().map(|r| r.trace.min_grad_norm_sq()).collect();
            GroupStats {
                label: label.to_string(),
                final_loss: mean_se(&loss),
                min_grad_norm_sq: mean_se(&grad),
                aborted: rs.iter().filter(|r| r.trace.aborted()).count(),
            }
        })
        .collect()
}

fn summary_tables(stats: &[GroupStats]) -> (Table, Table) {
    let mut text = Table::new(&["optimizer", "seeds", "final_loss (mean ± se)", "min_grad_norm_sq (mean ± se)", "aborted"]);
    let mut csv = Table::new(&[
        "optimizer",
        "seeds",
        "final_loss_mean",
        "final_loss_se",
        "min_grad_norm_sq_mean",
        "min_grad_norm_sq_se",
        "aborted",
    ]);
    for s in stats {
        text.push(vec![
            s.label.clone(),
            s.final_loss.n.to_string(),
            pm(&s.final_loss),
            pm(&s.min_grad_norm_sq),
            s.aborted.to_string(),
        ]);
        csv.push(vec![
            s.label.clone(),
            s.final_loss.n.to_string(),
            fmt_f64(s.final_loss.mean),
            fmt_f64(s.final_loss.se),
            fmt_f64(s.min_grad_norm_sq.mean),
            fmt_f64(s.min_grad_norm_sq.se),
            s.aborted.to_string(),
        ]);
    }
    if stats.iter().any(|s| s.final_loss.n == 1) {
        text.footnotes.push(SINGLE_SEED_NOTE.into());
        csv.footnotes.push(SINGLE_SEED_NOTE.into());
    }
    (text, csv)
}

fn write_pair(dir: &Path, stem: &str, text: &Table, csv: &Table) -> Result<(), BenchError> {
    fs::write(dir.join(format!("{stem}.txt")), text.to_text())?;
    fs::write(dir.join(format!("{stem}.csv")), csv.to_csv())?;
    Ok(())
}

fn abort_note(records: &[RunRecord]) -> Option<String> {
    records.iter().find_map(|r| {
        r.trace.abort.as_ref().map(|a| {
            format!("numeric abort: {} seed {} at step {} ({})", r.label, r.seed, a.step, a.reason)
        })
    })
}

fn run_grid(g: &Globals, cfg: &RunConfig, stem: &str) -> Result<Outcome, BenchError> {
    let problem = cfg.problem.build()?;
    let dir = output_dir(g, cfg)?;
    let pool = pool(g)?;
    let seeds = seeds(g, cfg);
    let records = execute(problem.as_ref(), optimizer_jobs(cfg, &seeds), cfg, &pool)?;
    write_traces(&dir, &problem.describe(), cfg, &records)?;
    let stats = group(&records);
    let (text, csv) = summary_tables(&stats);
    write_pair(&dir, stem, &text, &csv)?;
    let mut report = format!("{}\n{}", problem.describe(), text.to_text());
    let exit = match abort_note(&records) {
        Some(note) => {
            report.push_str(&note);
            report.push('\n');
            Exit::NumericAbort
        }
        None => Exit::Success,
    };
    Ok(Outcome { exit, report })
}

pub fn cmd_run(g: &Globals) -> Result<Outcome, BenchError> {
    let cfg = load(g)?;
    run_grid(g, &cfg, "summary")
}

pub fn cmd_compare(g: &Globals) -> Result<Outcome, BenchError> {
    let cfg = load(g)?;
    if cfg.optimizers.len() < 2 {
        return Err(BenchError::Config("compare needs at least two optimizers in [optimizer] id".into()));
    }
    run_grid(g, &cfg, "compare")
}

/// One rung of the ablation ladder after its learning-rate sweep.
#[derive(Debug, Clone)]
pub struct Rung {
    pub name: &'static str,
    pub method: Method,
    pub c: f64,
    pub best_lr: f64,
    pub final_loss: MeanSe,
    /// Worse than the previous rung by more than one standard error.
    pub flagged: bool,
    pub records: Vec<RunRecord>,
}

#[derive(Debug, Clone)]
pub struct AblationReport {
    pub rungs: Vec<Rung>,
    pub short_horizon: bool,
}

impl AblationReport {
    pub fn monotone(&self) -> bool {
        !self.rungs.iter().any(|r| r.flagged)
    }
}

/// Plain DA with `β_{k+1} = β_k + 1/β_k` and `λ_k = η`; the same with
/// iterate averaging; then full MDA. Each rung keeps the learning rate with
/// the lowest mean final loss over the grid.
pub fn ablation(problem: &dyn Problem, cfg: &RunConfig, seeds: &[u64], pool: &rayon::ThreadPool) -> Result<AblationReport, BenchError> {
    let nesterov = BetaRule::Nesterov { beta0: cfg.ablate.beta0 };
    let ladder: [(&'static str, Method, f64); 3] = [
        ("da", Method::Da { beta_rule: nesterov, averaging: false }, 1.0),
        ("da+momentum", Method::Da { beta_rule: nesterov, averaging: true }, cfg.ablate.c),
        ("mda", Method::Mda, cfg.ablate.c),
    ];
    let mut jobs = Vec::new();
    for (name, method, c) in &ladder {
        for &lr in &cfg.ablate.lr_grid {
            for &seed in seeds {
                let mut schedule = cfg.schedule.clone();
                schedule.base_lr = lr;
                schedule.c0 = *c;
                jobs.push(Job {
                    label: format!("{name}@{lr}"),
                    method: method.clone(),
                    schedule,
                    weight_decay: 0.0,
                    skip_trace: true,
                    seed,
                });
            }
        }
    }
    let records = execute(problem, jobs, cfg, pool)?;
    let per_lr = cfg.ablate.lr_grid.len() * seeds.len();
    let mut rungs: Vec<Rung> = Vec::new();
    for (i, (name, method, c)) in ladder.into_iter().enumerate() {
        let chunk = &records[i * per_lr..(i + 1) * per_lr];
        let mut best: Option<(f64, MeanSe, Vec<RunRecord>)> = None;
        for (j, &lr) in cfg.ablate.lr_grid.iter().enumerate() {
            let rs = &chunk[j * seeds.len()..(j + 1) * seeds.len()];
            let losses: Vec<f64> = rs
                .iter()
                .map(|r| if r.trace.aborted() || !r.trace.final_loss.is_finite() { f64::INFINITY } else { r.trace.final_loss })
                .collect();
            let s = mean_se(&losses);
            let better = match &best {
                None => true,
                Some((_, b, _)) => s.mean < b.mean || (b.mean.is_nan() && !s.mean.is_nan()),
            };
            if better {
                best = Some((lr, s, rs.to_vec()));
            }
        }
        let (best_lr, final_loss, recs) = best.expect("nonempty grid");
        let flagged = rungs.last().is_some_and(|prev: &Rung| {
            final_loss.mean > prev.final_loss.mean + prev.final_loss.se.max(final_loss.se)
        });
        rungs.push(Rung {
            name,
            method,
            c,
            best_lr,
            final_loss,
            flagged,
            records: recs,
        });
    }
    Ok(AblationReport {
        rungs,
        short_horizon: cfg.total_steps < 10,
    })
}

pub fn cmd_ablate(g: &Globals) -> Result<Outcome, BenchError> {
    let cfg = load(g)?;
    let problem = cfg.problem.build()?;
    let dir = output_dir(g, &cfg)?;
    let pool = pool(g)?;
    let seeds = seeds(g, &cfg);
    let report = ablation(problem.as_ref(), &cfg, &seeds, &pool)?;

    let mut text = Table::new(&["rung", "method", "lr", "c", "final_loss (mean ± se)", "flag"]);
    let mut csv = Table::new(&["rung", "method", "lr", "c", "final_loss_mean", "final_loss_se", "flag"]);
    for r in &report.rungs {
        let flag = if r.flagged { "non-monotone" } else { "" };
        text.push(vec![r.name.into(), r.method.describe(), r.best_lr.to_string(), r.c.to_string(), pm(&r.final_loss), flag.into()]);
        csv.push(vec![
            r.name.into(),
            r.method.describe().replace(',', ";"),
            r.best_lr.to_string(),
            r.c.to_string(),
            fmt_f64(r.final_loss.mean),
            fmt_f64(r.final_loss.se),
            flag.into(),
        ]);
    }
    let mut notes = Vec::new();
    if report.short_horizon {
        notes.push(format!("T = {}: horizon too short for the ladder to be informative", cfg.total_steps));
    }
    if seeds.len() == 1 {
        notes.push(SINGLE_SEED_NOTE.to_string());
    }
    notes.push(format!("lr grid: {:?}; best mean final loss kept per rung", cfg.ablate.lr_grid));
    text.footnotes = notes.clone();
    csv.footnotes = notes;
    write_pair(&dir, "ablate", &text, &csv)?;
    Ok(Outcome {
        exit: Exit::Success,
        report: format!("{}\n{}", problem.describe(), text.to_text()),
    })
}

#[derive(Debug, Clone)]
pub struct RatePoint {
    pub t: usize,
    pub metric: MeanSe,
}

#[derive(Debug, Clone)]
pub struct RateReport {
    pub points: Vec<RatePoint>,
    pub slope: f64,
}

/// MDA with `η = 1/√T` at each horizon; the metric is the trajectory mean
/// of `½(‖∇f(x_k)‖² + ‖∇f(z_k)‖²)`, averaged over seeds.
pub fn rate(problem: &dyn Problem, horizons: &[usize], c: f64, seeds: &[u64], pool: &rayon::ThreadPool) -> Result<RateReport, BenchError> {
    let mut sorted = horizons.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() < 3 || sorted[0] == 0 {
        return Err(BenchError::Config(format!(
            "[rate] T_values needs at least 3 distinct positive horizons, got {horizons:?}"
        )));
    }
    let work: Vec<(usize, u64)> = horizons.iter().flat_map(|&t| seeds.iter().map(move |&s| (t, s))).collect();
    let results: Vec<Result<f64, CoreError>> = pool.install(|| {
        work.par_iter()
            .map(|&(t, s)| mda_path_summary(problem, t, theorem_eta(t), c, s, 64).map(|m| m.mean_half_grad_sq))
            .collect()
    });
    let values = results.into_iter().collect::<Result<Vec<f64>, _>>()?;
    let points: Vec<RatePoint> = horizons
        .iter()
        .enumerate()
        .map(|(i, &t)| RatePoint {
            t,
            metric: mean_se(&values[i * seeds.len()..(i + 1) * seeds.len()]),
        })
        .collect();
    let fit: Vec<(f64, f64)> = points.iter().map(|p| (p.t as f64, p.metric.mean)).collect();
    let slope = rate_fit(&fit)?;
    Ok(RateReport { points, slope })
}

pub fn cmd_rate(g: &Globals) -> Result<Outcome, BenchError> {
    let cfg = load(g)?;
    let problem = cfg.problem.build()?;
    let pool = pool(g)?;
    let seeds = seeds(g, &cfg);
    let report = match rate(problem.as_ref(), &cfg.rate.horizons, cfg.rate.c, &seeds, &pool) {
        Ok(r) => r,
        Err(BenchError::Core(CoreError::NonFinite { what, step })) => {
            return Ok(Outcome {
                exit: Exit::NumericAbort,
                report: format!("numeric abort: {what} at step {step}\n"),
            })
        }
        Err(e) => return Err(e),
    };
    let dir = output_dir(g, &cfg)?;
    let mut text = Table::new(&["T", "eta", "metric (mean ± se)"]);
    let mut csv = Table::new(&["T", "eta", "metric_mean", "metric_se"]);
    for p in &report.points {
        let eta = theorem_eta(p.t);
        text.push(vec![p.t.to_string(), format!("{eta:.6e}"), pm(&p.metric)]);
        csv.push(vec![p.t.to_string(), fmt_f64(eta), fmt_f64(p.metric.mean), fmt_f64(p.metric.se)]);
    }
    let note = format!("fitted log-log slope: {:.6}", report.slope);
    text.footnotes.push(note.clone());
    csv.footnotes.push(note);
    if seeds.len() == 1 {
        text.footnotes.push(SINGLE_SEED_NOTE.into());
        csv.footnotes.push(SINGLE_SEED_NOTE.into());
    }
    write_pair(&dir, "rate", &text, &csv)?;
    Ok(Outcome {
        exit: Exit::Success,
        report: format!("{}\n{}", problem.describe(), text.to_text()),
    })
}

pub fn cmd_verify(g: &Globals) -> Result<Outcome, BenchError> {
    let mut opts = VerifyOptions::default();
    if g.config.is_some() {
        opts.audit_eta_scale = load(g)?.audit.eta_scale;
    }
    let results = pool(g)?.install(|| suites::run_all(&opts));
    let mut report = String::new();
    for r in &results {
        report.push_str(&r.to_string());
        report.push('\n');
    }
    let exit = match results.iter().find(|r| !r.passed) {
        Some(first) => {
            report.push_str(&format!(
                "verification failed: {} ({})\n",
                first.name,
                first.failure.as_deref().unwrap_or("")
            ));
            Exit::VerifyFailure
        }
        None => Exit::Success,
    };
    Ok(Outcome { exit, report })
}
