//! Run configuration files.
//!
//! A run file is TOML. Physical quantities are given in the units of the
//! decay rate; the feedback delay may be given as a time and is converted to a
//! whole number of steps. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use colltraj::{
    CountingWindow, CouplingVariant, InitialState, MeasurementScheme, ModeLayout, PropagatorConfig, RecordSettings,
    SystemHamiltonianSpec, TrajectoryConfig,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Trajectory,
    Ensemble,
    Oracle,
    Compare,
    Spectrum,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Trajectory => "trajectory",
            Mode::Ensemble => "ensemble",
            Mode::Oracle => "oracle",
            Mode::Compare => "compare",
            Mode::Spectrum => "spectrum",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplingSpec {
    Point {
        rate: f64,
    },
    /// Two coupling points closing a loop; give exactly one of `delay` (time) or `delay_steps`.
    Feedback {
        rate: f64,
        phase: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delay: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delay_steps: Option<usize>,
    },
    Exponential {
        rate: f64,
        memory_rate: f64,
    },
    Raw {
        gammas: Vec<[f64; 2]>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SchemeSpec {
    Photodetection,
    /// `alpha` is the square root of a rate; the oscillator dimension is the top-level `lo_dim`.
    Homodyne {
        alpha: f64,
        #[serde(default)]
        theta: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleSpec {
    /// Lindblad equation with a single collapse operator `√γ a`.
    Markovian,
    /// Lindblad equation with both feedback ports acting independently.
    TwoPort,
    /// Driven qubit coupled to a damped cavity that reproduces the exponential memory.
    Pseudomode {
        #[serde(default = "default_cavity_dim")]
        cavity_dim: usize,
    },
    /// Exact single-excitation dynamics of the full chain.
    SingleExcitation,
    /// Calibrated delay equation for the feedback loop.
    Dde,
    /// Jump unraveling of the Markovian master equation.
    Mcwf,
}

fn default_cavity_dim() -> usize {
    2
}

fn default_trajectories() -> usize {
    1
}

fn default_system_dim() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    /// Trajectories of an ensemble run also written as NDJSON.
    #[serde(default)]
    pub sample_trajectories: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    #[serde(default = "default_system_dim")]
    pub system_dim: usize,
    #[serde(default)]
    pub env_cap: usize,
    /// Chain length; derived from the coupling when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_count: Option<usize>,
    #[serde(default)]
    pub lo_dim: usize,
    pub coupling: CouplingSpec,
    pub scheme: SchemeSpec,
    #[serde(default)]
    pub system: SystemHamiltonianSpec,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub record: RecordSettings,
    #[serde(default)]
    pub propagator: PropagatorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counting: Option<CountingWindow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSpec>,
}

fn invalid(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("`{key}`: {msg}"))
}

impl RunConfigFile {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }

    /// Applies `key=value` overrides; values are TOML literals, falling back to strings.
    pub fn with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        for (key, raw) in overrides {
            let value = parse_value(raw);
            let mut parts: Vec<&str> = key.split('.').collect();
            let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| invalid(key, "empty key"))?;
            let mut table = &mut doc;
            for p in parts {
                let entry = table
                    .entry(p.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()));
                table = entry.as_table_mut().ok_or_else(|| invalid(key, format!("`{p}` is not a table")))?;
            }
            table.insert(last.to_string(), value);
        }
        let text = toml::to_string(&doc).map_err(|e| CliError::Config(e.to_string()))?;
        Self::from_toml(&text)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::with_overrides(&text, overrides)
    }

    pub fn n_steps(&self) -> Result<usize, CliError> {
        match (self.duration, self.n_steps) {
            (Some(_), Some(_)) => Err(invalid("duration", "give either `duration` or `n_steps`, not both")),
            (None, None) => Err(invalid("n_steps", "missing; give `n_steps` or `duration`")),
            (None, Some(n)) => Ok(n),
            (Some(t), None) => {
                if !(t > 0.0) || !t.is_finite() {
                    return Err(invalid("duration", format!("expected a positive number, got {t}")));
                }
                Ok(whole_steps("duration", t, self.dt)?)
            }
        }
    }

    pub fn coupling_variant(&self) -> Result<CouplingVariant, CliError> {
        Ok(match &self.coupling {
            CouplingSpec::Point { rate } => CouplingVariant::Point { rate: *rate },
            CouplingSpec::Feedback {
                rate,
                phase,
                delay,
                delay_steps,
            } => {
                let steps = match (delay, delay_steps) {
                    (Some(_), Some(_)) => {
                        return Err(invalid("coupling.delay", "give either `delay` or `delay_steps`, not both"))
                    }
                    (None, None) => return Err(invalid("coupling.delay", "missing; give `delay` or `delay_steps`")),
                    (None, Some(m)) => *m,
                    (Some(tau), None) => {
                        if !(*tau >= 0.0) || !tau.is_finite() {
                            return Err(invalid("coupling.delay", format!("expected a non-negative number, got {tau}")));
                        }
                        whole_steps("coupling.delay", *tau, self.dt)?
                    }
                };
                CouplingVariant::TwoPointFeedback {
                    rate: *rate,
                    phase: *phase,
                    delay_steps: steps,
                }
            }
            CouplingSpec::Exponential { rate, memory_rate } => CouplingVariant::Exponential {
                rate: *rate,
                memory_rate: *memory_rate,
            },
            CouplingSpec::Raw { gammas } => CouplingVariant::Raw { gammas: gammas.clone() },
        })
    }

    pub fn env_count(&self) -> Result<usize, CliError> {
        match (self.env_count, self.coupling_variant()?.minimal_env_count()) {
            (Some(n), _) => Ok(n),
            (None, Some(n)) => Ok(n),
            (None, None) => Err(invalid("env_count", "required for this coupling")),
        }
    }

    pub fn scheme(&self) -> MeasurementScheme {
        match self.scheme {
            SchemeSpec::Photodetection => MeasurementScheme::Photodetection,
            SchemeSpec::Homodyne { alpha, theta } => MeasurementScheme::Homodyne {
                alpha,
                theta,
                lo_dim: self.lo_dim,
            },
        }
    }

    /// The engine configuration, fully validated.
    pub fn trajectory_config(&self) -> Result<TrajectoryConfig, CliError> {
        let layout = ModeLayout {
            system_dim: self.system_dim,
            env_count: self.env_count()?,
            env_cap: self.env_cap,
            lo_dim: self.lo_dim,
        };
        let config = TrajectoryConfig {
            layout,
            coupling: self.coupling_variant()?,
            system: self.system,
            scheme: self.scheme(),
            dt: self.dt,
            n_steps: self.n_steps()?,
            master_seed: self.seed,
            initial: self.initial.clone(),
            record: self.record.clone(),
            propagator: self.propagator.clone(),
        };
        config.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(config)
    }

    fn check(&self) -> Result<(), CliError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid("dt", format!("expected a positive number, got {}", self.dt)));
        }
        if self.trajectories == 0 {
            return Err(invalid("trajectories", "expected at least 1"));
        }
        if matches!(self.mode, Mode::Oracle | Mode::Compare) && self.oracle.is_none() {
            return Err(invalid("oracle", format!("required in {} mode", self.mode.name())));
        }
        if let Some(c) = &self.counting {
            for (key, v) in [("counting.window", c.window), ("counting.bin_width", c.bin_width)] {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(invalid(key, format!("expected a positive number, got {v}")));
                }
            }
            if !(c.burn_in >= 0.0) || !c.burn_in.is_finite() {
                return Err(invalid("counting.burn_in", format!("expected a non-negative number, got {}", c.burn_in)));
            }
        }
        self.trajectory_config()?;
        Ok(())
    }
}

fn whole_steps(key: &str, t: f64, dt: f64) -> Result<usize, CliError> {
    let m = (t / dt).round();
    if (m * dt - t).abs() > 1e-9 * t.abs().max(1.0) {
        return Err(invalid(key, format!("{t} is not a whole number of steps of {dt}")));
    }
    Ok(m as usize)
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
