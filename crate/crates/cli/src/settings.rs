//! Flat `key = value` configuration shared by all subcommands.
//!
//! Blank lines and lines starting with `#` are ignored. List values are
//! comma separated (`widths = 16,32,64`). Unknown keys are rejected.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use patchq::neuralq::{ModelConfig, ModelKind, TrainConfig, ROI_GRID};
use patchq::psychlab::{RejectionPolicy, CONSISTENCY_SPLITS, GOLDS_PER_HIT, HIT_SIZES, REPEATS_PER_HIT};
use patchq::qmap::{DEFAULT_ALPHA, DEFAULT_GRID};
use patchq::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub policy: RejectionPolicy,
    pub consistency_splits: usize,
    pub hit_size: usize,
    pub grid: usize,
    pub alpha: f64,
    /// Keys that were set explicitly, in file order.
    pub explicit: Vec<String>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            train: TrainConfig::default(),
            model: ModelConfig::default(),
            policy: RejectionPolicy::default(),
            consistency_splits: CONSISTENCY_SPLITS,
            hit_size: HIT_SIZES[0],
            grid: DEFAULT_GRID,
            alpha: DEFAULT_ALPHA,
            explicit: Vec::new(),
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| Error::Config(format!("{key}: cannot parse {v:?}: {e}")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|s| parse(key, s.trim())).collect()
}

fn list(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl Settings {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("{}: {e}", path.as_ref().display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Settings::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            s.set(k.trim(), v.trim())?;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let t = &mut self.train;
        let m = &mut self.model;
        let b = &mut m.backbone;
        match key {
            "batch_size" => t.batch_size = parse(key, v)?,
            "epochs" => t.epochs = parse(key, v)?,
            "beta1" => t.beta1 = parse(key, v)?,
            "beta2" => t.beta2 = parse(key, v)?,
            "adam_eps" => t.adam_eps = parse(key, v)?,
            "weight_decay" => t.weight_decay = parse(key, v)?,
            "lr_backbone" => t.lr_backbone = parse(key, v)?,
            "lr_head" => t.lr_head = parse(key, v)?,
            "pad_side" => t.pad_side = parse(key, v)?,
            "seed" => t.seed = parse(key, v)?,
            "model" => m.kind = v.parse::<ModelKind>()?,
            "head_hidden" => m.head_hidden = parse(key, v)?,
            "patches" => m.patches = parse(key, v)?,
            "score_center" => m.score_center = parse(key, v)?,
            "score_scale" => m.score_scale = parse(key, v)?,
            "stem_channels" => b.stem_channels = parse(key, v)?,
            "stem_stride" => b.stem_stride = parse(key, v)?,
            "widths" => b.widths = parse_list(key, v)?,
            "blocks_per_stage" => b.blocks_per_stage = parse_list(key, v)?,
            "strides" => b.strides = parse_list(key, v)?,
            "min_acceptance_rate" => self.policy.min_acceptance_rate = parse(key, v)?,
            "repeat_threshold" => self.policy.repeat_threshold = parse(key, v)?,
            "max_identical_fraction" => self.policy.max_identical_fraction = parse(key, v)?,
            "consistency_splits" => self.consistency_splits = parse(key, v)?,
            "hit_size" => self.hit_size = parse(key, v)?,
            "grid" => self.grid = parse(key, v)?,
            "alpha" => self.alpha = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        self.explicit.push(key.to_string());
        Ok(())
    }

    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.iter().any(|k| k == key)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.model.validate()?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.grid == 0 || self.consistency_splits == 0 {
            return Err(Error::Config("grid and consistency_splits must be positive".into()));
        }
        Ok(())
    }

    /// Every effective setting as `key = value` lines, followed by the fixed
    /// study and pooling constants as comments.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let m = &self.model;
        let b = &m.backbone;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("write to string");
        kv("batch_size", t.batch_size.to_string());
        kv("epochs", t.epochs.to_string());
        kv("beta1", t.beta1.to_string());
        kv("beta2", t.beta2.to_string());
        kv("adam_eps", t.adam_eps.to_string());
        kv("weight_decay", t.weight_decay.to_string());
        kv("lr_backbone", t.lr_backbone.to_string());
        kv("lr_head", t.lr_head.to_string());
        kv("pad_side", t.pad_side.to_string());
        kv("seed", t.seed.to_string());
        kv("model", m.kind.to_string());
        kv("head_hidden", m.head_hidden.to_string());
        kv("patches", m.patches.to_string());
        kv("score_center", m.score_center.to_string());
        kv("score_scale", m.score_scale.to_string());
        kv("stem_channels", b.stem_channels.to_string());
        kv("stem_stride", b.stem_stride.to_string());
        kv("widths", list(&b.widths));
        kv("blocks_per_stage", list(&b.blocks_per_stage));
        kv("strides", list(&b.strides));
        kv("min_acceptance_rate", self.policy.min_acceptance_rate.to_string());
        kv("repeat_threshold", self.policy.repeat_threshold.to_string());
        kv("max_identical_fraction", self.policy.max_identical_fraction.to_string());
        kv("consistency_splits", self.consistency_splits.to_string());
        kv("hit_size", self.hit_size.to_string());
        kv("grid", self.grid.to_string());
        kv("alpha", self.alpha.to_string());
        writeln!(s, "# fixed: roi_grid = {ROI_GRID}x{ROI_GRID}").expect("write to string");
        writeln!(s, "# fixed: hit_sizes = {}", list(&HIT_SIZES)).expect("write to string");
        writeln!(s, "# fixed: repeats_per_hit = {REPEATS_PER_HIT}").expect("write to string");
        writeln!(s, "# fixed: golds_per_hit = {GOLDS_PER_HIT}").expect("write to string");
        s
    }
}
