//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # Figure-2 style sweep
//! experiment.kind = mse_vs_m
//! experiment.replicates = 50
//! npmc.M = 50, 100, 200, 500
//! npmc.K = 10
//! npmc.N = 400
//! ```
//!
//! Blank lines and `#` comments are ignored. Lists are comma-separated. Every
//! key can be overridden after loading with [`ExperimentConfig::set`].
//! `model.m` is accepted as another name for `model.horizon`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ssm::{Region, SensorGrid, TrackingConstants, TrackingModel, TrackingParams};
use crate::verify::Suite;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    MseVsM,
    PmhChainSweep,
    NSweep,
    SingleRun,
    Verify,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::MseVsM => "mse_vs_m",
            ExperimentKind::PmhChainSweep => "pmh_chain_sweep",
            ExperimentKind::NSweep => "n_sweep",
            ExperimentKind::SingleRun => "single_run",
            ExperimentKind::Verify => "verify",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use ExperimentKind::*;
        [MseVsM, PmhChainSweep, NSweep, SingleRun, Verify]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::usage(format!("experiment.kind: unknown kind `{s}`")))
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SamplerKind {
    Npmc,
    Pmc,
    Pmh,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Npmc => "npmc",
            SamplerKind::Pmc => "pmc",
            SamplerKind::Pmh => "pmh",
        }
    }

    pub(crate) fn code(self) -> u64 {
        match self {
            SamplerKind::Npmc => 1,
            SamplerKind::Pmc => 2,
            SamplerKind::Pmh => 3,
        }
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "npmc" => Ok(SamplerKind::Npmc),
            "pmc" => Ok(SamplerKind::Pmc),
            "pmh" => Ok(SamplerKind::Pmh),
            _ => Err(Error::usage(format!("unknown sampler `{s}`"))),
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub id: String,
    pub seed: u64,
    pub replicates: usize,
    /// Empty means the default set for the kind.
    pub samplers: Vec<SamplerKind>,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub output: Option<PathBuf>,
    /// Adds a wall-clock column to the results. Off by default because
    /// timings differ between runs.
    pub timing: bool,
    pub horizon: usize,
    pub sensor_cols: usize,
    pub sensor_rows: usize,
    pub truth: TrackingParams,
    pub m_values: Vec<usize>,
    pub iterations: usize,
    /// `None` uses `⌊√M⌋`.
    pub clip: Option<usize>,
    pub n_values: Vec<usize>,
    pub l_values: Vec<usize>,
    pub pmh_scale: f64,
    pub burn_in: f64,
    pub suites: Vec<Suite>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kind: ExperimentKind::MseVsM,
            id: "experiment".into(),
            seed: 1,
            replicates: 50,
            samplers: Vec::new(),
            workers: 0,
            output: None,
            timing: false,
            horizon: 50,
            sensor_cols: 4,
            sensor_rows: 4,
            truth: TrackingParams::ground_truth(),
            m_values: vec![50, 100, 200, 500],
            iterations: 10,
            clip: None,
            n_values: vec![400],
            l_values: vec![1_000, 2_000, 5_000],
            pmh_scale: 0.2,
            burn_in: 0.5,
            suites: Suite::ALL.to_vec(),
        }
    }
}

/// Every recognised key, in canonical order.
pub const KEYS: [&str; 21] = [
    "experiment.kind",
    "experiment.id",
    "experiment.seed",
    "experiment.replicates",
    "experiment.samplers",
    "experiment.workers",
    "output.path",
    "output.timing",
    "model.horizon",
    "model.sensors",
    "model.log_pt",
    "model.nu",
    "model.log_rho",
    "npmc.M",
    "npmc.K",
    "npmc.Mc",
    "npmc.N",
    "pmh.L",
    "pmh.scale",
    "pmh.burn_in",
    "verify.suites",
];

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut config = ExperimentConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            config.set(key.trim(), value.trim()).map_err(|e| match e {
                Error::Usage(message) => Error::Parse {
                    line: idx + 1,
                    message,
                },
                other => other,
            })?;
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::usage(format!("override `{assignment}` is not key=value")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::usage(format!("{key}: {what} `{value}`"));
        match key {
            "experiment.kind" => self.kind = value.parse()?,
            "experiment.id" => {
                if value.is_empty() || value.contains([',', '\n']) {
                    return Err(bad("invalid identifier"));
                }
                self.id = value.to_string();
            }
            "experiment.seed" => {
                self.seed = value.parse().map_err(|_| bad("not an unsigned integer"))?
            }
            "experiment.replicates" => {
                self.replicates =
                    parse_positive(value).map_err(|_| bad("not a positive integer"))?
            }
            "experiment.samplers" => {
                self.samplers = split_list(value).map(str::parse).collect::<Result<_>>()?;
            }
            "experiment.workers" => {
                self.workers = value.parse().map_err(|_| bad("not an unsigned integer"))?
            }
            "output.path" => self.output = (!value.is_empty()).then(|| PathBuf::from(value)),
            "output.timing" => self.timing = value.parse().map_err(|_| bad("not true/false"))?,
            "model.horizon" | "model.m" => {
                self.horizon = parse_positive(value).map_err(|_| bad("not a positive integer"))?
            }
            "model.sensors" => {
                let (c, r) = value
                    .split_once('x')
                    .ok_or_else(|| bad("expected COLSxROWS, got"))?;
                self.sensor_cols = parse_positive(c.trim()).map_err(|_| bad("invalid lattice"))?;
                self.sensor_rows = parse_positive(r.trim()).map_err(|_| bad("invalid lattice"))?;
            }
            "model.log_pt" => {
                self.truth.log_pt = parse_finite(value).map_err(|_| bad("not a finite number"))?
            }
            "model.nu" => {
                self.truth.nu = parse_finite(value).map_err(|_| bad("not a finite number"))?
            }
            "model.log_rho" => {
                self.truth.log_rho = parse_finite(value).map_err(|_| bad("not a finite number"))?
            }
            "npmc.M" => {
                self.m_values =
                    parse_grid(value).map_err(|_| bad("not a list of positive integers"))?
            }
            "npmc.K" => {
                self.iterations = value.parse().map_err(|_| bad("not an unsigned integer"))?
            }
            "npmc.Mc" => {
                self.clip = match value {
                    "sqrt" | "" => None,
                    v => Some(
                        parse_positive(v)
                            .map_err(|_| bad("expected `sqrt` or a positive integer, got"))?,
                    ),
                }
            }
            "npmc.N" => {
                self.n_values =
                    parse_grid(value).map_err(|_| bad("not a list of positive integers"))?
            }
            "pmh.L" => {
                self.l_values =
                    parse_grid(value).map_err(|_| bad("not a list of positive integers"))?
            }
            "pmh.scale" => {
                self.pmh_scale = parse_finite(value)
                    .ok()
                    .filter(|s| *s > 0.0)
                    .ok_or_else(|| bad("not a positive number"))?
            }
            "pmh.burn_in" => {
                self.burn_in = parse_finite(value)
                    .ok()
                    .filter(|f| (0.0..1.0).contains(f))
                    .ok_or_else(|| bad("not in [0, 1)"))?
            }
            "verify.suites" => {
                self.suites = split_list(value).map(str::parse).collect::<Result<_>>()?;
            }
            _ => return Err(Error::usage(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// The samplers to run, resolving the empty default for the kind.
    pub fn effective_samplers(&self) -> Vec<SamplerKind> {
        if !self.samplers.is_empty() {
            return self.samplers.clone();
        }
        match self.kind {
            ExperimentKind::MseVsM => vec![SamplerKind::Npmc, SamplerKind::Pmc, SamplerKind::Pmh],
            ExperimentKind::PmhChainSweep => vec![SamplerKind::Pmh],
            ExperimentKind::NSweep | ExperimentKind::SingleRun => vec![SamplerKind::Npmc],
            ExperimentKind::Verify => Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let empty = |name: &str, v: &[usize]| {
            if v.is_empty() {
                Err(Error::usage(format!("{name}: grid is empty")))
            } else {
                Ok(())
            }
        };
        empty("npmc.M", &self.m_values)?;
        empty("npmc.N", &self.n_values)?;
        if self.kind == ExperimentKind::PmhChainSweep {
            empty("pmh.L", &self.l_values)?;
            if self
                .effective_samplers()
                .iter()
                .any(|s| *s != SamplerKind::Pmh)
            {
                return Err(Error::usage(
                    "experiment.samplers: pmh_chain_sweep runs pmh only",
                ));
            }
        }
        if let Some(l) = self.l_values.iter().find(|l| **l < 2) {
            return Err(Error::usage(format!("pmh.L: chain length {l} is below 2")));
        }
        if let Some(mc) = self.clip {
            if let Some(m) = self.m_values.iter().find(|m| mc * mc > **m) {
                return Err(Error::usage(format!(
                    "npmc.Mc: {mc} exceeds √M for M = {m}"
                )));
            }
        }
        if self.kind == ExperimentKind::Verify && self.suites.is_empty() {
            return Err(Error::usage("verify.suites: no suites selected"));
        }
        self.tracking_model().map(|_| ())
    }

    pub fn tracking_model(&self) -> Result<TrackingModel> {
        let region = Region::default();
        let sensors = SensorGrid::uniform(&region, self.sensor_cols, self.sensor_rows)?;
        Ok(TrackingModel::new(
            region,
            sensors,
            TrackingConstants::default(),
        ))
    }

    /// Canonical text: every key in [`KEYS`] order with resolved defaults.
    /// Two configs that behave identically render identically.
    pub fn to_text(&self) -> String {
        let list = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let names = |v: Vec<&str>| v.join(",");
        let values = [
            self.kind.to_string(),
            self.id.clone(),
            self.seed.to_string(),
            self.replicates.to_string(),
            names(self.effective_samplers().iter().map(|s| s.name()).collect()),
            self.workers.to_string(),
            self.output
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            self.timing.to_string(),
            self.horizon.to_string(),
            format!("{}x{}", self.sensor_cols, self.sensor_rows),
            self.truth.log_pt.to_string(),
            self.truth.nu.to_string(),
            self.truth.log_rho.to_string(),
            list(&self.m_values),
            self.iterations.to_string(),
            self.clip.map_or("sqrt".to_string(), |c| c.to_string()),
            list(&self.n_values),
            list(&self.l_values),
            self.pmh_scale.to_string(),
            self.burn_in.to_string(),
            names(self.suites.iter().map(|s| s.name()).collect()),
        ];
        KEYS.iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// SHA-256 of the canonical text, skipping settings that cannot change
    /// the results (worker count and output path).
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.workers = 0;
        canonical.output = None;
        let digest = Sha256::digest(canonical.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Stable 64-bit key for the experiment identifier.
    pub(crate) fn id_key(&self) -> u64 {
        let digest = Sha256::digest(self.id.as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_positive(value: &str) -> std::result::Result<usize, ()> {
    value.parse::<usize>().ok().filter(|v| *v > 0).ok_or(())
}

fn parse_finite(value: &str) -> std::result::Result<f64, ()> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or(())
}

fn parse_grid(value: &str) -> std::result::Result<Vec<usize>, ()> {
    let v: Vec<usize> = split_list(value)
        .map(parse_positive)
        .collect::<std::result::Result<_, _>>()?;
    if v.is_empty() {
        Err(())
    } else {
        Ok(v)
    }
}
