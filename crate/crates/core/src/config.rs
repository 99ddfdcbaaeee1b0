//! Plain-text `key=value` configuration for the classification task. Files
//! are newline-separated assignments with `#` comments; every key is typed
//! and range-checked, unknown keys are rejected, and command-line overrides
//! reuse the same assignment syntax so precedence is just application order.

use crate::error::{Error, Result};
use crate::grad::TrainMode;
use crate::network::{BlockConfig, NetConfig, NormKind, TrainTaskConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskConfig {
    pub depth: usize,
    pub h: usize,
    pub n: usize,
    pub norm: NormKind,
    pub prenorm: bool,
    pub dropout: f64,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub wd: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub tau: f64,
    pub v_th: f64,
    pub learnable_vth: bool,
    pub alpha: f64,
    pub mode: TrainMode,
    pub seed: u64,
    pub classes: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            depth: 2,
            h: 64,
            n: 64,
            norm: NormKind::Layer,
            prenorm: false,
            dropout: 0.1,
            lr: 4e-3,
            batch: 50,
            epochs: 10,
            wd: 0.01,
            delta_min: 1e-3,
            delta_max: 1e-1,
            tau: 0.2,
            v_th: 1.0,
            learnable_vth: true,
            alpha: 1.0,
            mode: TrainMode::Sdn,
            seed: 42,
            classes: 10,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| Error::invalid(format!("config key '{key}': cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::invalid(format!("config key '{key}': expected a boolean, got '{value}'"))),
    }
}

impl TaskConfig {
    /// Apply one `key=value` assignment. Used for both file lines and
    /// command-line overrides.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "depth" => self.depth = parse_num(key, value)?,
            "h" => self.h = parse_num(key, value)?,
            "n" => self.n = parse_num(key, value)?,
            "norm" => self.norm = NormKind::parse(value)?,
            "prenorm" => self.prenorm = parse_bool(key, value)?,
            "dropout" => self.dropout = parse_num(key, value)?,
            "lr" => self.lr = parse_num(key, value)?,
            "batch" => self.batch = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "wd" => self.wd = parse_num(key, value)?,
            "delta_min" => self.delta_min = parse_num(key, value)?,
            "delta_max" => self.delta_max = parse_num(key, value)?,
            "tau" => self.tau = parse_num(key, value)?,
            "v_th" => self.v_th = parse_num(key, value)?,
            "learnable_vth" => self.learnable_vth = parse_bool(key, value)?,
            "alpha" => self.alpha = parse_num(key, value)?,
            "mode" => self.mode = TrainMode::parse(value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "classes" => self.classes = parse_num(key, value)?,
            other => return Err(Error::invalid(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Parse a whole config text on top of the defaults, then range-check.
    pub fn parse(text: &str) -> Result<TaskConfig> {
        let mut cfg = TaskConfig::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply assignments from config text without final validation (so
    /// overrides can still follow).
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::invalid(format!("config line {}: expected key=value, got '{line}'", lineno + 1))
            })?;
            self.apply(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Apply `key=value` override strings (command-line precedence).
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let s = o.as_ref();
            let (key, value) = s
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("override '{s}': expected key=value")))?;
            self.apply(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.net_config().validate()?;
        if self.batch == 0 || self.epochs == 0 {
            return Err(Error::invalid("batch and epochs must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("lr {} must be positive and finite", self.lr)));
        }
        if !(self.wd >= 0.0 && self.wd.is_finite()) {
            return Err(Error::invalid(format!("wd {} must be non-negative", self.wd)));
        }
        Ok(())
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig {
            depth: self.depth,
            classes: self.classes,
            block: BlockConfig {
                h: self.h,
                n: self.n,
                norm: self.norm,
                prenorm: self.prenorm,
                dropout: self.dropout,
                tau: self.tau,
                v_th_init: self.v_th,
                learnable_vth: self.learnable_vth,
                delta_min: self.delta_min,
                delta_max: self.delta_max,
                alpha: self.alpha,
            },
        }
    }

    pub fn train_config(&self) -> TrainTaskConfig {
        TrainTaskConfig {
            net: self.net_config(),
            mode: self.mode,
            epochs: self.epochs,
            batch: self.batch,
            lr: self.lr,
            weight_decay: self.wd,
            seed: self.seed,
        }
    }

    /// Canonical serialization; `parse(echo(cfg)) == cfg`.
    pub fn echo(&self) -> String {
        format!(
            "depth={}\nh={}\nn={}\nnorm={}\nprenorm={}\ndropout={}\nlr={}\nbatch={}\nepochs={}\n\
             wd={}\ndelta_min={}\ndelta_max={}\ntau={}\nv_th={}\nlearnable_vth={}\nalpha={}\n\
             mode={}\nseed={}\nclasses={}\n",
            self.depth,
            self.h,
            self.n,
            self.norm.name(),
            self.prenorm,
            self.dropout,
            self.lr,
            self.batch,
            self.epochs,
            self.wd,
            self.delta_min,
            self.delta_max,
            self.tau,
            self.v_th,
            self.learnable_vth,
            self.alpha,
            self.mode.name(),
            self.seed,
            self.classes,
        )
    }

    /// One-line summary for machine-readable command output.
    pub fn summary_line(&self) -> String {
        self.echo().trim_end().replace('\n', " ")
    }
}
