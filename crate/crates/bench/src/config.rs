//! Flat `key = value` configuration with `[section]` headers.
//!
//! Every key has a default. Keys that are not listed here, or that do not
//! apply to the chosen problem, are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use ini::Ini;
use mda_core::problems::{Logistic, Problem, Quadratic, Rosenbrock, TinyMlp};
use mda_core::runner::{BetaRule, Method, ReturnMode};
use mda_core::schedules::{LrShape, ScheduleSpec, Stage};

use crate::BenchError;

type Section = BTreeMap<String, String>;

/// Parsed file contents: section name to key/value pairs. Keys before any
/// header are rejected.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    sections: BTreeMap<String, Section>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, BenchError> {
        let ini = Ini::load_from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        let mut sections: BTreeMap<String, Section> = BTreeMap::new();
        for (name, props) in ini.iter() {
            let Some(name) = name else {
                if let Some((key, _)) = props.iter().next() {
                    return Err(BenchError::Config(format!(
                        "unknown key `{key}` outside any [section]"
                    )));
                }
                continue;
            };
            let sec = sections.entry(name.trim().to_string()).or_default();
            for (k, v) in props.iter() {
                if sec.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                    return Err(BenchError::Config(format!("duplicate key `{k}` in [{name}]")));
                }
            }
        }
        Ok(RawConfig { sections })
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn section(&self, name: &str) -> Option<&Section> {
        self.sections.get(name)
    }
}

/// Reads typed values out of one section and remembers which keys were used.
struct Reader<'a> {
    name: &'a str,
    sec: Option<&'a Section>,
    allowed: Vec<&'static str>,
}

impl<'a> Reader<'a> {
    fn new(raw: &'a RawConfig, name: &'a str) -> Self {
        Reader {
            name,
            sec: raw.section(name),
            allowed: Vec::new(),
        }
    }

    fn raw(&mut self, key: &'static str) -> Option<&'a str> {
        self.allowed.push(key);
        self.sec.and_then(|s| s.get(key)).map(String::as_str)
    }

    fn has(&self, key: &str) -> bool {
        self.sec.is_some_and(|s| s.contains_key(key))
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &'static str, default: T) -> Result<T, BenchError>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| {
                BenchError::Config(format!("[{}] {key} = {v:?}: {e}", self.name))
            }),
        }
    }

    fn opt<T: std::str::FromStr>(&mut self, key: &'static str) -> Result<Option<T>, BenchError>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e| {
                BenchError::Config(format!("[{}] {key} = {v:?}: {e}", self.name))
            }),
        }
    }

    fn list<T: std::str::FromStr>(&mut self, key: &'static str) -> Result<Option<Vec<T>>, BenchError>
    where
        T::Err: fmt::Display,
    {
        let Some(v) = self.raw(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|e| {
                    BenchError::Config(format!("[{}] {key}: item {s:?}: {e}", self.name))
                })
            })
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }

    /// Fails on the first key that was never asked for.
    fn finish(self) -> Result<(), BenchError> {
        if let Some(sec) = self.sec {
            for key in sec.keys() {
                if !self.allowed.contains(&key.as_str()) {
                    return Err(BenchError::Config(format!(
                        "unknown key `{key}` in [{}]",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Quadratic { n: usize, cond: f64, sigma: f64, seed: u64 },
    Logistic { n_samples: usize, n_features: usize, batch: usize, l2: f64, seed: u64 },
    Rosenbrock { n: usize },
    TinyMlp { n_hidden: usize, n_samples: usize, batch: usize, seed: u64 },
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Box<dyn Problem>, BenchError> {
        Ok(match *self {
            ProblemSpec::Quadratic { n, cond, sigma, seed } => Box::new(Quadratic::new(n, cond, sigma, seed)?),
            ProblemSpec::Logistic { n_samples, n_features, batch, l2, seed } => {
                Box::new(Logistic::with_l2(n_samples, n_features, batch, seed, l2)?)
            }
            ProblemSpec::Rosenbrock { n } => Box::new(Rosenbrock::new(n)?),
            ProblemSpec::TinyMlp { n_hidden, n_samples, batch, seed } => {
                Box::new(TinyMlp::new(n_hidden, n_samples, batch, seed)?)
            }
        })
    }

    fn read(raw: &RawConfig) -> Result<Self, BenchError> {
        let mut r = Reader::new(raw, "problem");
        let id: String = r.parse("id", "quadratic".to_string())?;
        let spec = match id.as_str() {
            "quadratic" => ProblemSpec::Quadratic {
                n: r.parse("n", 10)?,
                cond: r.parse("cond", 10.0)?,
                sigma: r.parse("sigma", 0.0)?,
                seed: r.parse("seed", 0)?,
            },
            "logistic" => {
                let n_samples = r.parse("n_samples", 200)?;
                ProblemSpec::Logistic {
                    n_samples,
                    n_features: r.parse("n_features", 10)?,
                    batch: r.parse("batch", n_samples)?,
                    l2: r.parse("l2", mda_core::problems::LOGISTIC_DEFAULT_L2)?,
                    seed: r.parse("seed", 0)?,
                }
            }
            "rosenbrock" => ProblemSpec::Rosenbrock { n: r.parse("n", 2)? },
            "tiny_mlp" => ProblemSpec::TinyMlp {
                n_hidden: r.parse("n_hidden", 16)?,
                n_samples: r.parse("n_samples", 500)?,
                batch: r.parse("batch", 32)?,
                seed: r.parse("seed", 0)?,
            },
            other => {
                return Err(BenchError::Config(format!(
                    "[problem] id = {other:?}: expected quadratic, logistic, rosenbrock or tiny_mlp"
                )))
            }
        };
        r.finish()?;
        Ok(spec)
    }
}

/// One optimizer with its own step size and momentum overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSpec {
    pub name: String,
    pub method: Method,
    /// Replaces `[schedule] base_lr` for this optimizer.
    pub lr: Option<f64>,
    /// Replaces `[schedule] c0` for this optimizer.
    pub c: Option<f64>,
    pub weight_decay: f64,
}

impl OptimizerSpec {
    pub fn schedule(&self, base: &ScheduleSpec) -> ScheduleSpec {
        let mut s = base.clone();
        if let Some(lr) = self.lr {
            s.base_lr = lr;
        }
        if let Some(c) = self.c {
            s.c0 = c;
        }
        s
    }

    fn read(raw: &RawConfig, name: &str) -> Result<Self, BenchError> {
        let mut r = Reader::new(raw, name);
        let lr = r.opt("lr")?;
        let mut c = None;
        let (method, wd_default) = match name {
            "sgd" => (Method::Sgd, 1e-4),
            "sgdm" => (Method::Sgdm { momentum: r.parse("momentum", 0.9)? }, 1e-4),
            "spa" => {
                c = r.opt("c")?;
                (Method::Spa, 1e-4)
            }
            "reg_sgd" => (Method::RegSgd, 0.0),
            "da" => {
                c = r.opt("c")?;
                let rule: String = r.parse("beta_rule", "sqrt".to_string())?;
                let beta0 = r.parse("beta0", 1.0)?;
                let beta_rule = match rule.as_str() {
                    "sqrt" => BetaRule::Sqrt,
                    "nesterov" => BetaRule::Nesterov { beta0 },
                    other => {
                        return Err(BenchError::Config(format!(
                            "[da] beta_rule = {other:?}: expected sqrt or nesterov"
                        )))
                    }
                };
                (Method::Da { beta_rule, averaging: r.parse("averaging", false)? }, 0.0)
            }
            "mda" => {
                c = r.opt("c")?;
                (Method::Mda, 0.0)
            }
            "adam" => {
                let Method::Adam { beta1, beta2, eps } = Method::adam_default() else {
                    unreachable!()
                };
                (
                    Method::Adam {
                        beta1: r.parse("beta1", beta1)?,
                        beta2: r.parse("beta2", beta2)?,
                        eps: r.parse("eps", eps)?,
                    },
                    1e-4,
                )
            }
            other => {
                return Err(BenchError::Config(format!(
                    "[optimizer] unknown id {other:?}: expected sgd, sgdm, spa, reg_sgd, da, mda or adam"
                )))
            }
        };
        let weight_decay = r.parse("weight_decay", wd_default)?;
        r.finish()?;
        Ok(OptimizerSpec {
            name: name.to_string(),
            method,
            lr,
            c,
            weight_decay,
        })
    }
}

pub const OPTIMIZER_IDS: [&str; 7] = ["sgd", "sgdm", "spa", "reg_sgd", "da", "mda", "adam"];

fn read_schedule(raw: &RawConfig, total_steps: usize) -> Result<ScheduleSpec, BenchError> {
    let mut r = Reader::new(raw, "schedule");
    let base_lr = r.parse("base_lr", 0.1)?;
    let c0 = r.parse("c0", 1.0)?;
    let compensate_momentum = r.parse("compensate_momentum", false)?;
    let shape: String = r.parse("lr_shape", "flat".to_string())?;
    let at: Option<Vec<f64>> = r.list("stage_at")?;
    let mult: Option<Vec<f64>> = r.list("stage_multiplier")?;
    let ramp: Option<Vec<f64>> = r.list("stage_ramp")?;
    let warmup: Option<usize> = r.opt("warmup_steps")?;
    let decay: Option<usize> = r.opt("decay_steps")?;
    let lr_shape = match shape.as_str() {
        "flat" => LrShape::Flat,
        "stagewise_linear" => {
            let at = at.unwrap_or_default();
            let mult = mult.unwrap_or_default();
            let ramp = ramp.unwrap_or_else(|| vec![0.0; at.len()]);
            if at.len() != mult.len() || at.len() != ramp.len() {
                return Err(BenchError::Config(
                    "[schedule] stage_at, stage_multiplier and stage_ramp must have equal length".into(),
                ));
            }
            LrShape::StagewiseLinear(
                at.iter()
                    .zip(&mult)
                    .zip(&ramp)
                    .map(|((&at, &multiplier), &ramp)| Stage { at, multiplier, ramp })
                    .collect(),
            )
        }
        "warmup_linear_decay" => LrShape::WarmupLinearDecay {
            warmup_steps: warmup.unwrap_or((total_steps / 10).max(1)),
            total_steps: decay.unwrap_or(total_steps + 1),
        },
        other => {
            return Err(BenchError::Config(format!(
                "[schedule] lr_shape = {other:?}: expected flat, stagewise_linear or warmup_linear_decay"
            )))
        }
    };
    r.finish()?;
    let spec = ScheduleSpec {
        base_lr,
        lr_shape,
        c0,
        compensate_momentum,
        total_steps,
    };
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub optimizers: Vec<OptimizerSpec>,
    pub schedule: ScheduleSpec,
    pub total_steps: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub return_mode: ReturnMode,
    pub ablate: AblateConfig,
    pub rate: RateConfig,
    pub audit: AuditConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblateConfig {
    /// Momentum weight for the averaged rungs.
    pub c: f64,
    pub beta0: f64,
    /// Learning rates tried on every rung; the best mean final loss is kept.
    pub lr_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateConfig {
    pub horizons: Vec<usize>,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditConfig {
    /// Step size as a multiple of the admissible maximum.
    pub eta_scale: f64,
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, BenchError> {
        for name in raw.sections.keys() {
            let known = ["problem", "optimizer", "schedule", "run", "ablate", "rate", "audit"];
            if !known.contains(&name.as_str()) && !OPTIMIZER_IDS.contains(&name.as_str()) {
                return Err(BenchError::Config(format!("unknown section [{name}]")));
            }
        }
        let problem = ProblemSpec::read(raw)?;

        let mut r = Reader::new(raw, "run");
        let total_steps: usize = r.parse("T", 100)?;
        let seeds: Option<Vec<u64>> = r.list("seeds")?;
        let n_seeds: Option<u64> = r.opt("n_seeds")?;
        let output_dir: PathBuf = r.parse("output_dir", PathBuf::from("out"))?;
        let mode: String = r.parse("return_mode", "last_iterate".to_string())?;
        let has_both = r.has("seeds") && r.has("n_seeds");
        r.finish()?;
        if has_both {
            return Err(BenchError::Config("[run] give either seeds or n_seeds, not both".into()));
        }
        let seeds = match (seeds, n_seeds) {
            (Some(s), _) => s,
            (None, Some(n)) => (0..n).collect(),
            (None, None) => vec![0],
        };
        if seeds.is_empty() {
            return Err(BenchError::Config("[run] seeds must be nonempty".into()));
        }
        if total_steps == 0 {
            return Err(BenchError::Config("[run] T must be >= 1".into()));
        }
        let return_mode = match mode.as_str() {
            "last_iterate" => ReturnMode::LastIterate,
            "average_iterate" => ReturnMode::AverageIterate,
            other => {
                return Err(BenchError::Config(format!(
                    "[run] return_mode = {other:?}: expected last_iterate or average_iterate"
                )))
            }
        };

        let mut r = Reader::new(raw, "optimizer");
        let ids: Vec<String> = r.list("id")?.unwrap_or_else(|| vec!["sgd".to_string()]);
        r.finish()?;
        if ids.is_empty() {
            return Err(BenchError::Config("[optimizer] id must name at least one optimizer".into()));
        }
        let mut optimizers = Vec::with_capacity(ids.len());
        for id in &ids {
            if optimizers.iter().any(|o: &OptimizerSpec| &o.name == id) {
                return Err(BenchError::Config(format!("[optimizer] id lists {id:?} twice")));
            }
            optimizers.push(OptimizerSpec::read(raw, id)?);
        }
        // sections for optimizers that are not selected are still checked
        for id in OPTIMIZER_IDS {
            if raw.section(id).is_some() && !ids.iter().any(|s| s == id) {
                OptimizerSpec::read(raw, id)?;
            }
        }

        let schedule = read_schedule(raw, total_steps)?;
        schedule.validate()?;
        for o in &optimizers {
            o.schedule(&schedule).validate()?;
        }

        let mut r = Reader::new(raw, "ablate");
        let ablate = AblateConfig {
            c: r.parse("c", 0.1)?,
            beta0: r.parse("beta0", 1.0)?,
            lr_grid: r.list("lr_grid")?.unwrap_or_else(|| vec![0.3, 1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0]),
        };
        r.finish()?;
        if !(ablate.c > 0.0 && ablate.c < 1.0) {
            return Err(BenchError::Config(format!("[ablate] c = {}: must lie in (0, 1)", ablate.c)));
        }
        if ablate.lr_grid.is_empty() || ablate.lr_grid.iter().any(|v| !(*v > 0.0)) {
            return Err(BenchError::Config("[ablate] lr_grid must list positive values".into()));
        }

        let mut r = Reader::new(raw, "rate");
        let rate = RateConfig {
            horizons: r.list("T_values")?.unwrap_or_else(|| vec![100, 1000, 10_000]),
            c: r.parse("c", 0.5)?,
        };
        r.finish()?;
        if !(rate.c > 0.0 && rate.c <= 1.0) {
            return Err(BenchError::Config(format!("[rate] c = {}: must lie in (0, 1]", rate.c)));
        }

        let mut r = Reader::new(raw, "audit");
        let audit = AuditConfig {
            eta_scale: r.parse("eta_scale", 1.0)?,
        };
        r.finish()?;
        if !(audit.eta_scale > 0.0) {
            return Err(BenchError::Config("[audit] eta_scale must be > 0".into()));
        }

        Ok(RunConfig {
            problem,
            optimizers,
            schedule,
            total_steps,
            seeds,
            output_dir,
            return_mode,
            ablate,
            rate,
            audit,
        })
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        Self::from_raw(&RawConfig::load(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, BenchError> {
        Self::from_raw(&RawConfig::parse(text)?)
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::parse("").expect("defaults are valid")
    }
}
