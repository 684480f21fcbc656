//! Run configuration and its flat `key = value` text format.

use std::fmt::Write as _;
use std::path::Path;

use crate::envs::EnvKind;
use crate::error::{Result, TdlError};
use crate::targets::{AdvantageGate, TargetAlgo, TdlHyper};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    TdlDirect,
    TdlEs,
    TdlEsr,
    PpoClip,
    CaclaLike,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::TdlDirect,
        Algorithm::TdlEs,
        Algorithm::TdlEsr,
        Algorithm::PpoClip,
        Algorithm::CaclaLike,
    ];

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::TdlDirect => "tdl-direct",
            Algorithm::TdlEs => "tdl-es",
            Algorithm::TdlEsr => "tdl-esr",
            Algorithm::PpoClip => "ppo",
            Algorithm::CaclaLike => "cacla",
        }
    }

    /// The target rule behind a TDL variant.
    pub fn target_algo(self) -> Option<TargetAlgo> {
        match self {
            Algorithm::TdlDirect => Some(TargetAlgo::Direct),
            Algorithm::TdlEs | Algorithm::CaclaLike => Some(TargetAlgo::Es),
            Algorithm::TdlEsr => Some(TargetAlgo::Esr),
            Algorithm::PpoClip => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerChoice {
    Adam,
    Sgd,
}

impl OptimizerChoice {
    fn name(self) -> &'static str {
        match self {
            OptimizerChoice::Adam => "adam",
            OptimizerChoice::Sgd => "sgd",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub env: EnvKind,
    pub algorithm: Algorithm,
    pub seeds: Vec<u64>,
    /// Transitions per iteration (T).
    pub steps: usize,
    /// Minibatch size (M).
    pub minibatch: usize,
    /// Passes over each batch (E).
    pub epochs: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub lr: f64,
    pub optimizer: OptimizerChoice,
    pub hidden: Vec<usize>,
    pub sigma0: f64,
    /// Initial output bias of the mean head.
    pub init_mean: f64,
    pub tdl: TdlHyper,
    /// Overrides the target rule's default gate.
    pub gate: Option<AdvantageGate>,
    pub ppo_clip: f64,
    pub entropy_coef: f64,
    pub min_std: f64,
    pub iterations: usize,
    pub holdout_size: usize,
    /// Write real elapsed time into the CSV; off keeps reruns byte-identical.
    pub record_wallclock: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            name: "run".into(),
            env: EnvKind::PointMass,
            algorithm: Algorithm::TdlDirect,
            seeds: vec![1],
            steps: 2048,
            minibatch: 256,
            epochs: 60,
            gamma: 0.995,
            lambda: 0.97,
            lr: 1e-4,
            optimizer: OptimizerChoice::Adam,
            hidden: vec![64, 64, 64],
            sigma0: 0.3,
            init_mean: 0.0,
            tdl: TdlHyper::default(),
            gate: None,
            ppo_clip: 0.2,
            entropy_coef: 0.0,
            min_std: 0.0,
            iterations: 100,
            holdout_size: 256,
            record_wallclock: false,
        }
    }
}

/// Every key accepted by [`RunConfig::set`], in file order.
pub const CONFIG_KEYS: &[&str] = &[
    "name",
    "env",
    "algorithm",
    "seeds",
    "steps",
    "minibatch",
    "epochs",
    "gamma",
    "lambda",
    "lr",
    "optimizer",
    "hidden",
    "sigma0",
    "init_mean",
    "alpha",
    "nu",
    "revise_ratio",
    "window",
    "varphi",
    "gate",
    "ppo_clip",
    "entropy_coef",
    "min_std",
    "iterations",
    "holdout_size",
    "record_wallclock",
];

fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.parse()
        .map_err(|_| format!("invalid value {v:?} for {key}"))
}

fn usize_list(key: &str, v: &str) -> std::result::Result<Vec<usize>, String> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|p| num(key, p.trim())).collect()
}

/// `"1..5"` is inclusive; otherwise a comma list.
fn parse_seeds(v: &str) -> std::result::Result<Vec<u64>, String> {
    if let Some((a, b)) = v.split_once("..") {
        let a: u64 = num("seeds", a.trim())?;
        let b: u64 = num("seeds", b.trim())?;
        if b < a {
            return Err(format!("empty seed range {v:?}"));
        }
        return Ok((a..=b).collect());
    }
    v.split(',').map(|p| num("seeds", p.trim())).collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        match key {
            "name" => self.name = v.to_string(),
            "env" => self.env = EnvKind::parse(v).map_err(|e| e.to_string())?,
            "algorithm" => {
                self.algorithm =
                    Algorithm::parse(v).ok_or_else(|| format!("unknown algorithm {v:?}"))?
            }
            "seeds" => self.seeds = parse_seeds(v)?,
            "steps" => self.steps = num(key, v)?,
            "minibatch" => self.minibatch = num(key, v)?,
            "epochs" => self.epochs = num(key, v)?,
            "gamma" => self.gamma = num(key, v)?,
            "lambda" => self.lambda = num(key, v)?,
            "lr" => self.lr = num(key, v)?,
            "optimizer" => {
                self.optimizer = match v {
                    "adam" => OptimizerChoice::Adam,
                    "sgd" => OptimizerChoice::Sgd,
                    _ => return Err(format!("unknown optimizer {v:?}")),
                }
            }
            "hidden" => self.hidden = usize_list(key, v)?,
            "sigma0" => self.sigma0 = num(key, v)?,
            "init_mean" => self.init_mean = num(key, v)?,
            "alpha" => self.tdl.alpha = num(key, v)?,
            "nu" => self.tdl.nu = num(key, v)?,
            "revise_ratio" => self.tdl.revise_ratio = num(key, v)?,
            "window" => self.tdl.window = num(key, v)?,
            "varphi" => self.tdl.varphi = num(key, v)?,
            "gate" => {
                self.gate = match v {
                    "default" => None,
                    other => Some(
                        AdvantageGate::parse(other)
                            .ok_or_else(|| format!("unknown gate {other:?}"))?,
                    ),
                }
            }
            "ppo_clip" => self.ppo_clip = num(key, v)?,
            "entropy_coef" => self.entropy_coef = num(key, v)?,
            "min_std" => self.min_std = num(key, v)?,
            "iterations" => self.iterations = num(key, v)?,
            "holdout_size" => self.holdout_size = num(key, v)?,
            "record_wallclock" => self.record_wallclock = num(key, v)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "name" => self.name.clone(),
            "env" => self.env.name().into(),
            "algorithm" => self.algorithm.name().into(),
            "seeds" => join(&self.seeds),
            "steps" => self.steps.to_string(),
            "minibatch" => self.minibatch.to_string(),
            "epochs" => self.epochs.to_string(),
            "gamma" => self.gamma.to_string(),
            "lambda" => self.lambda.to_string(),
            "lr" => self.lr.to_string(),
            "optimizer" => self.optimizer.name().into(),
            "hidden" => join(&self.hidden),
            "sigma0" => self.sigma0.to_string(),
            "init_mean" => self.init_mean.to_string(),
            "alpha" => self.tdl.alpha.to_string(),
            "nu" => self.tdl.nu.to_string(),
            "revise_ratio" => self.tdl.revise_ratio.to_string(),
            "window" => self.tdl.window.to_string(),
            "varphi" => self.tdl.varphi.to_string(),
            "gate" => self.gate.map_or("default", AdvantageGate::name).into(),
            "ppo_clip" => self.ppo_clip.to_string(),
            "entropy_coef" => self.entropy_coef.to_string(),
            "min_std" => self.min_std.to_string(),
            "iterations" => self.iterations.to_string(),
            "holdout_size" => self.holdout_size.to_string(),
            "record_wallclock" => self.record_wallclock.to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| TdlError::Config { line: line_no, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key {key:?}")));
            }
            self.set(key, value).map_err(err)?;
        }
        self.validate()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| TdlError::io(path, e))?;
        Self::parse(&text)
    }

    /// Every key, one per line; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in CONFIG_KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).unwrap());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| {
            Err(TdlError::Config {
                line: 0,
                msg: msg.to_string(),
            })
        };
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        if self.steps == 0 || self.minibatch == 0 || self.iterations == 0 {
            return bad("steps, minibatch and iterations must be positive");
        }
        if self.minibatch > self.steps {
            return bad("minibatch must not exceed steps");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return bad("sigma0 must be positive");
        }
        if !self.init_mean.is_finite() {
            return bad("init_mean must be finite");
        }
        if !(self.ppo_clip > 0.0) {
            return bad("ppo_clip must be positive");
        }
        if !(self.entropy_coef >= 0.0) || !(self.min_std >= 0.0) {
            return bad("entropy_coef and min_std must be non-negative");
        }
        if self.holdout_size == 0 {
            return bad("holdout_size must be positive");
        }
        self.tdl.validate().map_err(|e| TdlError::Config {
            line: 0,
            msg: e.to_string(),
        })
    }

    /// The gate actually used by a TDL variant.
    pub fn effective_gate(&self) -> AdvantageGate {
        self.gate.unwrap_or_else(|| {
            self.algorithm
                .target_algo()
                .map_or(AdvantageGate::Indicator, TargetAlgo::default_gate)
        })
    }
}
