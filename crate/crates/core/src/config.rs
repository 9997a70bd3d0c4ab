//! Run configuration: a JSON tree layered over built-in defaults, with
//! dotted-key overrides and a single place where dB values become linear.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::baseline::BlpOptions;
use crate::channel::{Dims, Variances};
use crate::error::{Error, Result};
use crate::sca::ScaConfig;
use crate::units::db_to_linear;
use crate::waveform::PulseConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub frame_len: usize,
    pub mod_order: usize,
    pub sigma2_c_dbm: f64,
    pub sigma2_r_dbm: f64,
    pub sigma2_h_dbm: f64,
    /// Per-entry variance of the communication channel.
    pub channel_dbm: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n_tx: 16,
            n_rx: 20,
            frame_len: 30,
            mod_order: 4,
            sigma2_c_dbm: 0.0,
            sigma2_r_dbm: 0.0,
            sigma2_h_dbm: 20.0,
            channel_dbm: 0.0,
        }
    }
}

/// One figure's sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub n_users: usize,
    pub energy_dbm: f64,
    pub gamma_db: Vec<f64>,
    pub tau: Vec<f64>,
    pub trials: usize,
    /// Also run the block-level baseline.
    pub blp: bool,
    /// Drop the communication noise (detection experiments).
    pub noiseless: bool,
    /// Count a user's bits only when its whole frame is detected correctly.
    pub frame_success: bool,
    /// Radar noise draws per trial for the empirical MMSE; 0 disables it.
    pub empirical_trials: usize,
}

impl SweepConfig {
    fn new(n_users: usize, energy_dbm: f64, gamma_db: &[f64], tau: &[f64]) -> Self {
        Self {
            n_users,
            energy_dbm,
            gamma_db: gamma_db.to_vec(),
            tau: tau.to_vec(),
            trials: 100,
            blp: true,
            noiseless: false,
            frame_success: false,
            empirical_trials: 0,
        }
    }
}

/// The single point used by `solve`; τ comes from `pulse.tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub n_users: usize,
    pub gamma_db: f64,
    pub energy_dbm: f64,
    pub trial: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self { n_users: 12, gamma_db: 15.0, energy_dbm: 40.0, trial: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub pulse: PulseConfig,
    pub sca: ScaConfig,
    pub baseline: BlpOptions,
    pub solve: SolveConfig,
    pub fig2: SweepConfig,
    pub fig3: SweepConfig,
    pub fig4: SweepConfig,
    pub fig5: SweepConfig,
    pub base_seed: u64,
    /// Worker threads; 0 uses the available parallelism.
    pub workers: usize,
    pub output_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let taus = [0.8, 0.9, 1.0];
        Self {
            system: SystemConfig::default(),
            pulse: PulseConfig::default(),
            sca: ScaConfig::default(),
            baseline: BlpOptions::default(),
            solve: SolveConfig::default(),
            fig2: SweepConfig::new(12, 40.0, &[15.0], &[0.8]),
            fig3: SweepConfig::new(12, 35.0, &[15.0], &[0.8]),
            fig4: SweepConfig::new(12, 40.0, &[5.0, 10.0, 15.0, 20.0], &taus),
            fig5: SweepConfig::new(8, 30.0, &[4.0, 8.0, 12.0], &taus),
            base_seed: 2024,
            workers: 0,
            output_dir: "out".into(),
        }
    }
}

/// One dB quantity and its linear value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitRow {
    pub key: String,
    pub value: f64,
    pub unit: &'static str,
    pub linear: f64,
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = root;
    for part in key.split('.') {
        node = node
            .get_mut(part)
            .ok_or_else(|| Error::Config(format!("unknown key '{key}'")))?;
    }
    if node.is_object() {
        return Err(Error::Config(format!("'{key}' is a section, not a leaf key")));
    }
    *node = value;
    Ok(())
}

fn merge(base: &mut Value, patch: Value, path: &str) -> Result<()> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let sub = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                let slot = b.get_mut(&k).ok_or_else(|| Error::Config(format!("unknown key '{sub}'")))?;
                merge(slot, v, &sub)?;
            }
            Ok(())
        }
        (b, p) => {
            *b = p;
            Ok(())
        }
    }
}

/// Parses `key=value`; the value is read as JSON when it parses, else as a string.
pub fn parse_override(arg: &str) -> Result<(String, Value)> {
    let (k, v) = arg
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{arg}' is not of the form key=value")))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

impl ExperimentConfig {
    /// Defaults, then the file (if any), then the overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[(String, Value)]) -> Result<Self> {
        let mut tree = serde_json::to_value(Self::default())?;
        if let Some(p) = path {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", p.display())))?;
            let file: Value = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("cannot parse config file {}: {e}", p.display())))?;
            merge(&mut tree, file, "")?;
        }
        for (k, v) in overrides {
            set_path(&mut tree, k, v.clone())?;
        }
        serde_json::from_value(tree).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn sweep(&self, name: &str) -> Option<&SweepConfig> {
        match name {
            "fig2" => Some(&self.fig2),
            "fig3" => Some(&self.fig3),
            "fig4" => Some(&self.fig4),
            "fig5" => Some(&self.fig5),
            _ => None,
        }
    }

    pub fn sweeps_mut(&mut self) -> [&mut SweepConfig; 4] {
        [&mut self.fig2, &mut self.fig3, &mut self.fig4, &mut self.fig5]
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        if s.n_tx == 0 || s.n_rx == 0 || s.frame_len == 0 {
            return Err(Error::Config("n_tx, n_rx and frame_len must be at least 1".into()));
        }
        if ![2, 4, 8, 16].contains(&s.mod_order) {
            return Err(Error::UnsupportedModulation(s.mod_order));
        }
        for row in self.unit_table() {
            if !row.value.is_finite() {
                return Err(Error::Config(format!("{} must be finite", row.key)));
            }
        }
        self.pulse.validate()?;
        self.sca.validate()?;
        if !(self.baseline.tol > 0.0) {
            return Err(Error::Config("baseline.tol must be positive".into()));
        }
        check_users("solve", self.solve.n_users, s.n_tx)?;
        for name in ["fig2", "fig3", "fig4", "fig5"] {
            let sw = self.sweep(name).expect("known sweep");
            check_users(name, sw.n_users, s.n_tx)?;
            if sw.trials < 1 {
                return Err(Error::Config(format!("{name}.trials must be at least 1")));
            }
            if sw.gamma_db.is_empty() || sw.tau.is_empty() {
                return Err(Error::Config(format!("{name} needs at least one gamma_db and one tau")));
            }
            for &t in &sw.tau {
                PulseConfig { tau: t, ..self.pulse }.validate()?;
            }
        }
        Ok(())
    }

    /// Every dB-valued key with its linear value.
    pub fn unit_table(&self) -> Vec<UnitRow> {
        let mut rows = Vec::new();
        let mut push = |key: String, value: f64, unit: &'static str| {
            rows.push(UnitRow { key, value, unit, linear: db_to_linear(value) });
        };
        let s = &self.system;
        push("system.sigma2_c_dbm".into(), s.sigma2_c_dbm, "dBm");
        push("system.sigma2_r_dbm".into(), s.sigma2_r_dbm, "dBm");
        push("system.sigma2_h_dbm".into(), s.sigma2_h_dbm, "dBm");
        push("system.channel_dbm".into(), s.channel_dbm, "dBm");
        push("solve.gamma_db".into(), self.solve.gamma_db, "dB");
        push("solve.energy_dbm".into(), self.solve.energy_dbm, "dBm");
        for name in ["fig2", "fig3", "fig4", "fig5"] {
            let sw = self.sweep(name).expect("known sweep");
            push(format!("{name}.energy_dbm"), sw.energy_dbm, "dBm");
            for (i, g) in sw.gamma_db.iter().enumerate() {
                push(format!("{name}.gamma_db[{i}]"), *g, "dB");
            }
        }
        rows
    }

    pub fn variances(&self) -> Variances {
        let s = &self.system;
        Variances {
            sigma2_c: db_to_linear(s.sigma2_c_dbm),
            sigma2_r: db_to_linear(s.sigma2_r_dbm),
            sigma2_h: db_to_linear(s.sigma2_h_dbm),
            channel: db_to_linear(s.channel_dbm),
        }
    }

    pub fn dims(&self, n_users: usize) -> Dims {
        Dims { n_tx: self.system.n_tx, n_rx: self.system.n_rx, n_users, frame_len: self.system.frame_len }
    }
}

fn check_users(section: &str, k: usize, n_tx: usize) -> Result<()> {
    if k == 0 || k >= n_tx {
        return Err(Error::Config(format!("{section}.n_users must satisfy 1 <= K < n_tx = {n_tx}, got {k}")));
    }
    Ok(())
}
