use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::ConceptTree;
use crate::error::{Error, Result};
use crate::fusion::DEFAULT_HEADS;

/// Bounds applied to the temperature after every update.
pub const TAU_RANGE: (f64, f64) = (0.01, 1.0);
/// Bounds applied to the curvature after every update.
pub const CURVATURE_RANGE: (f64, f64) = (0.1, 10.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Box + classification + hyperbolic contrastive + entailment.
    Hyper,
    /// Box + classification + Euclidean contrastive.
    Baseline,
    /// Box + classification.
    DetOnly,
}

impl Objective {
    pub const ALL: [Objective; 3] = [Objective::Hyper, Objective::Baseline, Objective::DetOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Hyper => "hyper",
            Objective::Baseline => "baseline",
            Objective::DetOnly => "det-only",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hyper" => Ok(Objective::Hyper),
            "baseline" => Ok(Objective::Baseline),
            "det-only" | "det_only" => Ok(Objective::DetOnly),
            _ => Err(Error::invalid("objective", format!("`{s}` is not hyper, baseline, or det-only"))),
        }
    }
}

/// Everything that determines a run. Field names double as CLI flags and
/// config-file keys (kebab-case).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ExperimentConfig {
    pub objective: Objective,
    pub dim: usize,
    pub heads: usize,
    pub batch: usize,
    pub steps: usize,
    pub lr: f64,
    pub gamma: f64,
    pub cone_k: f64,
    pub tau_init: f64,
    pub curvature_init: f64,
    pub noise_rate: f64,
    pub grid_k: usize,
    pub scenes: usize,
    pub branching: Vec<usize>,
    pub novel_every: usize,
    pub eval_every: usize,
    pub seed: u64,
    pub corpus: Option<PathBuf>,
    pub synonyms: Option<PathBuf>,
    pub tree: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            objective: Objective::Hyper,
            dim: 16,
            heads: DEFAULT_HEADS,
            batch: 32,
            steps: 5000,
            lr: 0.01,
            gamma: 0.1,
            cone_k: 0.1,
            tau_init: 0.07,
            curvature_init: 1.0,
            noise_rate: 0.0,
            grid_k: 3,
            scenes: 800,
            branching: vec![4, 4, 4],
            novel_every: 5,
            eval_every: 500,
            seed: 0,
            corpus: None,
            synonyms: None,
            tree: None,
            out_dir: None,
        }
    }
}

fn parse<T: FromStr>(field: &'static str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::invalid(field, format!("cannot parse `{value}`")))
}

impl ExperimentConfig {
    /// Set one field from its textual form. Keys may use `-` or `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim().replace('_', "-").as_str() {
            "objective" => self.objective = v.parse()?,
            "dim" => self.dim = parse("dim", v)?,
            "heads" => self.heads = parse("heads", v)?,
            "batch" => self.batch = parse("batch", v)?,
            "steps" => self.steps = parse("steps", v)?,
            "lr" => self.lr = parse("lr", v)?,
            "gamma" => self.gamma = parse("gamma", v)?,
            "cone-k" => self.cone_k = parse("cone_k", v)?,
            "tau-init" => self.tau_init = parse("tau_init", v)?,
            "curvature-init" => self.curvature_init = parse("curvature_init", v)?,
            "noise-rate" => self.noise_rate = parse("noise_rate", v)?,
            "grid-k" => self.grid_k = parse("grid_k", v)?,
            "scenes" => self.scenes = parse("scenes", v)?,
            "branching" => {
                self.branching = v
                    .split(',')
                    .map(|b| parse("branching", b))
                    .collect::<Result<_>>()?
            }
            "novel-every" => self.novel_every = parse("novel_every", v)?,
            "eval-every" => self.eval_every = parse("eval_every", v)?,
            "seed" => self.seed = parse("seed", v)?,
            "corpus" => self.corpus = Some(v.into()),
            "synonyms" => self.synonyms = Some(v.into()),
            "tree" => self.tree = Some(v.into()),
            "out-dir" => self.out_dir = Some(v.into()),
            other => return Err(Error::invalid("config", format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Apply a `key = value` file. Blank lines and `#` comments are skipped.
    pub fn apply_file_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("config line {}: expected key = value", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_file_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Check every numeric field against its documented range.
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &'static str, reason: String| {
            if ok {
                Ok(())
            } else {
                Err(Error::invalid(field, reason))
            }
        };
        check(
            self.dim >= 8 && self.dim <= 1024 && self.dim.is_multiple_of(8),
            "dim",
            format!("{} must be a multiple of 8 in [8, 1024]", self.dim),
        )?;
        check(
            self.heads >= 1 && self.dim.is_multiple_of(self.heads),
            "heads",
            format!("{} must divide dim {}", self.heads, self.dim),
        )?;
        check(self.batch >= 2, "batch", format!("{} must be at least 2", self.batch))?;
        check(self.steps >= 1, "steps", "must be at least 1".into())?;
        check(
            self.lr.is_finite() && (0.0..=1.0).contains(&self.lr),
            "lr",
            format!("{} outside [0, 1]", self.lr),
        )?;
        check(
            self.gamma.is_finite() && (0.0..std::f64::consts::PI).contains(&self.gamma),
            "gamma",
            format!("{} outside [0, pi)", self.gamma),
        )?;
        check(
            self.cone_k.is_finite() && self.cone_k > 0.0 && self.cone_k <= 1.0,
            "cone_k",
            format!("{} outside (0, 1]", self.cone_k),
        )?;
        check(
            self.tau_init >= TAU_RANGE.0 && self.tau_init <= TAU_RANGE.1,
            "tau_init",
            format!("{} outside [{}, {}]", self.tau_init, TAU_RANGE.0, TAU_RANGE.1),
        )?;
        check(
            self.curvature_init >= CURVATURE_RANGE.0 && self.curvature_init <= CURVATURE_RANGE.1,
            "curvature_init",
            format!(
                "{} outside [{}, {}]",
                self.curvature_init, CURVATURE_RANGE.0, CURVATURE_RANGE.1
            ),
        )?;
        check(
            (0.0..1.0).contains(&self.noise_rate),
            "noise_rate",
            format!("{} outside [0, 1)", self.noise_rate),
        )?;
        check(
            (1..=16).contains(&self.grid_k),
            "grid_k",
            format!("{} outside [1, 16]", self.grid_k),
        )?;
        check(self.scenes >= 1, "scenes", "must be at least 1".into())?;
        check(
            self.branching.len() >= 2 && self.branching.iter().all(|&b| (1..=64).contains(&b)),
            "branching",
            "need at least two levels, each in [1, 64]".into(),
        )?;
        check(self.eval_every >= 1, "eval_every", "must be at least 1".into())?;
        Ok(())
    }

    pub fn tree(&self) -> Result<ConceptTree> {
        ConceptTree::balanced(&self.branching, self.novel_every)
    }

    pub fn corpus_config(&self) -> crate::data::CorpusConfig {
        crate::data::CorpusConfig {
            scenes: self.scenes,
            noise_rate: self.noise_rate,
            seed: self.seed,
            grid_k: self.grid_k,
            ..Default::default()
        }
    }
}
