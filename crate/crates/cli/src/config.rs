//! JSON run configuration. Command-line flags override file values field by
//! field; the resolved configuration is echoed into every output file and can
//! be fed back through `--config`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use hypcoop::pointprocess::{Boundary, Window};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Analytic,
    Sim,
    Both,
}

impl Mode {
    pub fn analytic(self) -> bool {
        matches!(self, Mode::Analytic | Mode::Both)
    }

    pub fn sim(self) -> bool {
        matches!(self, Mode::Sim | Mode::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum VolumeMethodArg {
    Slice,
    Paper,
    Mc,
    All,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub marks: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub control: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Boundary>,
    /// Not echoed: results do not depend on it.
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variances: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub excl_radius: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outer_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ztilde: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<VolumeMethodArg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

macro_rules! overlay_fields {
    ($base:ident, $top:ident; $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f; } )*
    };
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: FileConfig =
            serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        Ok(cfg)
    }

    /// `self` with every field that is set in `top` replaced.
    pub fn overlay(mut self, top: FileConfig) -> Self {
        overlay_fields!(self, top; command, lambda, marks, control, mode, nodes, seed, reps, window,
            boundary, workers, mean, variances, beta, excl_radius, outer_radius, input, s, z, ztilde,
            method, samples);
        self
    }

    /// Clears every field not in `keep` (plus `command` and `workers`),
    /// returning the names of the dropped ones.
    pub fn retain(&mut self, keep: &[&str]) -> Vec<&'static str> {
        let mut dropped = Vec::new();
        macro_rules! keep_only {
            ($($f:ident),*) => {
                $( if !keep.contains(&stringify!($f)) && self.$f.take().is_some() {
                    dropped.push(stringify!($f));
                } )*
            };
        }
        keep_only!(
            lambda,
            marks,
            control,
            mode,
            nodes,
            seed,
            reps,
            window,
            boundary,
            mean,
            variances,
            beta,
            excl_radius,
            outer_radius,
            input,
            s,
            z,
            ztilde,
            method,
            samples
        );
        dropped
    }

    /// Checks a `command` field against the subcommand being run.
    pub fn check_command(&mut self, name: &str) -> Result<()> {
        match self.command.as_deref() {
            Some(c) if c != name => bail!("config is for `{c}`, not `{name}`"),
            _ => {
                self.command = Some(name.to_string());
                Ok(())
            }
        }
    }

    pub fn echo(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Window from `WxH` and a boundary.
pub fn window_from(spec: &str, boundary: Boundary) -> Result<Window> {
    let w: Window = spec.parse()?;
    Ok(Window::new(w.width(), w.height(), boundary)?)
}
