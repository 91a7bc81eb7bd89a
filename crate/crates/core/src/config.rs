//! TOML configuration covering every timing, energy and threshold constant.
//!
//! Every table is optional and falls back to the built-in defaults. NVM
//! timing is taken from `[timings.<tech>]` for whichever technology a run
//! selects; `machine.nvm` is overwritten.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compiler::CompileOptions;
use crate::machine::{MachineConfig, NvmTech, NvmTiming};
use crate::memory::CheckpointKind;
use crate::power::{PowerError, SynthParams, ThresholdSet};
use crate::recovery::{EnergyModel, RecoveryError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("bad config: {0}")]
    Parse(String),
    #[error(transparent)]
    Thresholds(#[from] PowerError),
    #[error(transparent)]
    Energy(#[from] RecoveryError),
    #[error("bad config: {0}")]
    Invalid(String),
}

/// Per-technology timing; fields left out keep that technology's default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PartialTable")]
pub struct TimingTable {
    pub reram: NvmTiming,
    pub sttram: NvmTiming,
    pub pcm: NvmTiming,
}

impl Default for TimingTable {
    fn default() -> Self {
        TimingTable { reram: NvmTiming::reram(), sttram: NvmTiming::sttram(), pcm: NvmTiming::pcm() }
    }
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct PartialTable {
    reram: PartialTiming,
    sttram: PartialTiming,
    pcm: PartialTiming,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct PartialTiming {
    tech: Option<NvmTech>,
    t_ck: Option<f64>,
    t_burst: Option<f64>,
    t_rcd: Option<f64>,
    t_cl: Option<f64>,
    t_wtr: Option<f64>,
    t_wr: Option<f64>,
    t_xaw: Option<f64>,
}

impl PartialTiming {
    fn over(self, d: NvmTiming) -> Result<NvmTiming, String> {
        if self.tech.is_some_and(|t| t != d.tech) {
            return Err(format!("timings.{} names a different technology", d.tech.name()));
        }
        let t = NvmTiming {
            tech: d.tech,
            t_ck: self.t_ck.unwrap_or(d.t_ck),
            t_burst: self.t_burst.unwrap_or(d.t_burst),
            t_rcd: self.t_rcd.unwrap_or(d.t_rcd),
            t_cl: self.t_cl.unwrap_or(d.t_cl),
            t_wtr: self.t_wtr.unwrap_or(d.t_wtr),
            t_wr: self.t_wr.unwrap_or(d.t_wr),
            t_xaw: self.t_xaw.unwrap_or(d.t_xaw),
        };
        let all = [t.t_ck, t.t_burst, t.t_rcd, t.t_cl, t.t_wtr, t.t_wr, t.t_xaw];
        if all.iter().all(|x| *x >= 0.0) {
            Ok(t)
        } else {
            Err(format!("timings.{}: negative latency", d.tech.name()))
        }
    }
}

impl TryFrom<PartialTable> for TimingTable {
    type Error = String;

    fn try_from(p: PartialTable) -> Result<Self, String> {
        Ok(TimingTable {
            reram: p.reram.over(NvmTiming::reram())?,
            sttram: p.sttram.over(NvmTiming::sttram())?,
            pcm: p.pcm.over(NvmTiming::pcm())?,
        })
    }
}

impl TimingTable {
    pub fn get(&self, tech: NvmTech) -> NvmTiming {
        match tech {
            NvmTech::Reram => self.reram,
            NvmTech::Sttram => self.sttram,
            NvmTech::Pcm => self.pcm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub machine: MachineConfig,
    pub timings: TimingTable,
    pub thresholds: ThresholdSet,
    /// Recovery energy model and capacitor budget used by the compiler.
    pub recovery: EnergyModel,
    pub synth: SynthParams,
    /// Trace time to cycle conversion; the core clock when left out.
    pub cycles_per_ns: Option<f64>,
    /// Golden runs longer than this are rejected by the crash sweep.
    pub sweep_bound: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 1,
            machine: MachineConfig::default(),
            timings: TimingTable::default(),
            thresholds: ThresholdSet::default(),
            recovery: EnergyModel::default(),
            synth: SynthParams::default(),
            cycles_per_ns: None,
            sweep_bound: crate::oracle::DEFAULT_SWEEP_BOUND,
        }
    }
}

impl SimConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let c: SimConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        c.check()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let p = path.as_ref();
        let text = std::fs::read_to_string(p)
            .map_err(|e| ConfigError::Io { path: p.display().to_string(), reason: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        self.thresholds.check()?;
        self.recovery.check()?;
        let m = &self.machine;
        if !(m.clock_ns > 0.0) {
            return Err(ConfigError::Invalid("machine.clock_ns must be positive".into()));
        }
        if m.k < 4 {
            return Err(ConfigError::Invalid("machine.k must be at least 4".into()));
        }
        m.cache.check().map_err(ConfigError::Invalid)?;
        if self.cycles_per_ns.is_some_and(|c| !(c > 0.0)) {
            return Err(ConfigError::Invalid("cycles_per_ns must be positive".into()));
        }
        Ok(())
    }

    /// Machine for one NVM technology and checkpoint flavour.
    pub fn machine_for(&self, tech: NvmTech, kind: CheckpointKind) -> MachineConfig {
        let mut m = self.machine.clone().with_checkpoint(kind);
        m.nvm = self.timings.get(tech);
        m
    }

    pub fn cycles_per_ns(&self) -> f64 {
        self.cycles_per_ns.unwrap_or(1.0 / self.machine.clock_ns)
    }

    pub fn compile_options(&self, kind: CheckpointKind) -> CompileOptions {
        CompileOptions {
            regfile: crate::isa::RegFile::new(self.machine.k),
            energy: self.recovery,
            checkpoint: kind,
            ..CompileOptions::default()
        }
    }
}
