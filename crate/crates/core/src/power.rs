//! Supply-voltage traces and the outage schedule they induce.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::machine::{Design, Outage};
use crate::memory::CheckpointKind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PowerError {
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: time does not increase")]
    NonMonotonicTime { line: usize },
    #[error("line {line}: negative voltage")]
    NegativeVoltage { line: usize },
    #[error("trace has no samples")]
    EmptyTrace,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("thresholds must satisfy vmin < v_ckpt < v_restore <= vmax")]
    InvalidThresholds,
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoltageThresholds {
    pub vmax: f64,
    pub vmin: f64,
    pub v_ckpt: f64,
    pub v_restore: f64,
}

impl VoltageThresholds {
    pub fn nvp() -> Self {
        VoltageThresholds { vmax: 3.3, vmin: 2.8, v_ckpt: 2.9, v_restore: 3.2 }
    }

    pub fn nvsram() -> Self {
        VoltageThresholds { vmax: 3.5, vmin: 2.8, v_ckpt: 3.2, v_restore: 3.4 }
    }

    pub fn quickrecall() -> Self {
        VoltageThresholds { vmax: 3.5, vmin: 2.8, v_ckpt: 3.1, v_restore: 3.3 }
    }

    /// Defaults for a design and checkpoint flavour.
    pub fn for_design(design: Design, kind: CheckpointKind) -> Self {
        match (design, kind) {
            (Design::NvSram, _) => Self::nvsram(),
            (_, CheckpointKind::Nvp) => Self::nvp(),
            (_, CheckpointKind::QuickRecall) => Self::quickrecall(),
        }
    }

    pub fn check(&self) -> Result<(), PowerError> {
        if self.vmin < self.v_ckpt && self.v_ckpt < self.v_restore && self.v_restore <= self.vmax {
            Ok(())
        } else {
            Err(PowerError::InvalidThresholds)
        }
    }
}

/// Thresholds for every checkpointing flavour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdSet {
    pub nvp: VoltageThresholds,
    pub nvsram: VoltageThresholds,
    pub quickrecall: VoltageThresholds,
}

impl Default for ThresholdSet {
    fn default() -> Self {
        ThresholdSet {
            nvp: VoltageThresholds::nvp(),
            nvsram: VoltageThresholds::nvsram(),
            quickrecall: VoltageThresholds::quickrecall(),
        }
    }
}

impl ThresholdSet {
    pub fn for_design(&self, design: Design, kind: CheckpointKind) -> VoltageThresholds {
        match (design, kind) {
            (Design::NvSram, _) => self.nvsram,
            (_, CheckpointKind::Nvp) => self.nvp,
            (_, CheckpointKind::QuickRecall) => self.quickrecall,
        }
    }

    pub fn check(&self) -> Result<(), PowerError> {
        self.nvp.check()?;
        self.nvsram.check()?;
        self.quickrecall.check()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t_ns: u64,
    pub volts: f64,
}

/// Piecewise-linear supply voltage over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTrace {
    samples: Vec<Sample>,
}

impl PowerTrace {
    pub fn new(samples: Vec<Sample>) -> Result<Self, PowerError> {
        if samples.is_empty() {
            return Err(PowerError::EmptyTrace);
        }
        for (i, s) in samples.iter().enumerate() {
            if !(s.volts >= 0.0) {
                return Err(PowerError::NegativeVoltage { line: i + 1 });
            }
            if i > 0 && s.t_ns <= samples[i - 1].t_ns {
                return Err(PowerError::NonMonotonicTime { line: i + 1 });
            }
        }
        Ok(PowerTrace { samples })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    /// Parses `t_ns,volts` rows. Blank lines, `#` comments and a
    /// `t_ns,volts` header are skipped.
    pub fn parse(text: &str) -> Result<Self, PowerError> {
        let mut samples = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let row = raw.trim();
            if row.is_empty() || row.starts_with('#') || row.replace(' ', "") == "t_ns,volts" {
                continue;
            }
            let bad = |reason: &str| PowerError::MalformedRow { line, reason: reason.into() };
            let (t, v) = row.split_once(',').ok_or_else(|| bad("expected `t_ns,volts`"))?;
            let t_ns: u64 = t.trim().parse().map_err(|_| bad("time is not an unsigned integer"))?;
            let volts: f64 = v.trim().parse().map_err(|_| bad("voltage is not a number"))?;
            if volts < 0.0 {
                return Err(PowerError::NegativeVoltage { line });
            }
            if samples.last().is_some_and(|s: &Sample| t_ns <= s.t_ns) {
                return Err(PowerError::NonMonotonicTime { line });
            }
            samples.push(Sample { t_ns, volts });
        }
        PowerTrace::new(samples)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t_ns,volts\n");
        for x in &self.samples {
            writeln!(s, "{},{}", x.t_ns, x.volts).unwrap();
        }
        s
    }

    pub fn duration_ns(&self) -> u64 {
        self.samples.last().map_or(0, |s| s.t_ns)
    }
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<PowerTrace, PowerError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| PowerError::Io(format!("{}: {e}", path.display())))?;
    PowerTrace::parse(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PowerEventKind {
    Checkpoint,
    PowerOff,
    PowerOn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PowerEvent {
    pub cycle: u64,
    pub kind: PowerEventKind,
}

/// A dip reaching `vmin` before the checkpoint could finish.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct UncheckpointedOutage {
    pub ckpt_cycle: u64,
    pub off_cycle: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Schedule {
    pub events: Vec<PowerEvent>,
    pub uncheckpointed: Vec<UncheckpointedOutage>,
}

impl Schedule {
    /// Groups events into checkpoint/off/on triples.
    pub fn outages(&self) -> Vec<Outage> {
        let mut out = Vec::new();
        let mut ckpt = None;
        let mut off = None;
        for e in &self.events {
            match e.kind {
                PowerEventKind::Checkpoint => ckpt = Some(e.cycle),
                PowerEventKind::PowerOff => off = Some(e.cycle),
                PowerEventKind::PowerOn => {
                    if let (Some(c), Some(o)) = (ckpt.take(), off.take()) {
                        out.push(Outage { ckpt_at: c, off_at: o, on_at: e.cycle, forced: false });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Crossing {
    CkptDown,
    MinDown,
    RestoreUp,
}

fn crossings(trace: &PowerTrace, th: &VoltageThresholds) -> Vec<(f64, Crossing)> {
    let mut out = Vec::new();
    for w in trace.samples.windows(2) {
        let (a, b) = (w[0], w[1]);
        let at = |v: f64| {
            let frac = (a.volts - v) / (a.volts - b.volts);
            a.t_ns as f64 + frac * (b.t_ns - a.t_ns) as f64
        };
        if b.volts < a.volts {
            if a.volts > th.v_ckpt && b.volts <= th.v_ckpt {
                out.push((at(th.v_ckpt), Crossing::CkptDown));
            }
            if a.volts > th.vmin && b.volts <= th.vmin {
                out.push((at(th.vmin), Crossing::MinDown));
            }
        } else if b.volts > a.volts && a.volts < th.v_restore && b.volts >= th.v_restore {
            out.push((at(th.v_restore), Crossing::RestoreUp));
        }
    }
    out
}

/// Derives power events from a trace.
///
/// A checkpoint starts where the voltage falls through `v_ckpt`. Power is
/// lost where it falls through `vmin`; on a shallow dip the core powers
/// itself down once the checkpoint is written, `ckpt_cycles` later. Power
/// returns where the voltage next rises through `v_restore`, or at the end
/// of the trace if it never does.
pub fn schedule_events(
    trace: &PowerTrace,
    th: &VoltageThresholds,
    cycles_per_ns: f64,
    ckpt_cycles: u64,
) -> Schedule {
    enum State {
        On,
        Armed(u64),
        Off,
    }
    // After checkpointing the core idles until power is lost.
    let cyc = |t: f64| (t * cycles_per_ns).floor() as u64;
    let mut s = Schedule::default();
    let push = |s: &mut Schedule, cycle: u64, kind: PowerEventKind| s.events.push(PowerEvent { cycle, kind });
    let mut state = State::On;
    for (t, c) in crossings(trace, th) {
        let now = cyc(t);
        state = match (state, c) {
            (State::On, Crossing::CkptDown) => {
                push(&mut s, now, PowerEventKind::Checkpoint);
                State::Armed(now)
            }
            (State::Armed(tc), Crossing::MinDown) => {
                let done = tc + ckpt_cycles;
                if now < done {
                    s.uncheckpointed.push(UncheckpointedOutage { ckpt_cycle: tc, off_cycle: now });
                }
                push(&mut s, now, PowerEventKind::PowerOff);
                State::Off
            }
            (State::Armed(tc), Crossing::RestoreUp) => {
                let off = (tc + ckpt_cycles).min(now);
                push(&mut s, off, PowerEventKind::PowerOff);
                push(&mut s, now, PowerEventKind::PowerOn);
                State::On
            }
            (State::Off, Crossing::RestoreUp) => {
                push(&mut s, now, PowerEventKind::PowerOn);
                State::On
            }
            (st, _) => st,
        };
    }
    let end = cyc(trace.duration_ns() as f64);
    match state {
        State::Armed(tc) => {
            push(&mut s, tc + ckpt_cycles, PowerEventKind::PowerOff);
            push(&mut s, end.max(tc + ckpt_cycles), PowerEventKind::PowerOn);
        }
        State::Off => push(&mut s, end, PowerEventKind::PowerOn),
        State::On => {}
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    /// `dips` evenly spaced dips, one per period.
    Square,
    /// Dips arriving as a Poisson process at `rate_per_us`.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub high_v: f64,
    pub low_v: f64,
    /// Square: length of one period.
    pub period_ns: u64,
    /// Square: number of periods.
    pub dips: u32,
    /// Poisson: trace length.
    pub duration_ns: u64,
    pub rate_per_us: f64,
    /// Time spent at `low_v` per dip.
    pub dip_ns: u64,
    /// Duration of each falling or rising edge.
    pub ramp_ns: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        // Edges slow enough for a QuickRecall checkpoint on PCM to finish
        // between v_ckpt and vmin, and a peak above every restore threshold.
        SynthParams {
            high_v: 3.5,
            low_v: 2.5,
            period_ns: 55_000,
            dips: 10,
            duration_ns: 600_000,
            rate_per_us: 0.02,
            dip_ns: 2_000,
            ramp_ns: 25_000,
        }
    }
}

fn dip(samples: &mut Vec<Sample>, start: u64, p: &SynthParams) {
    let t = start;
    samples.push(Sample { t_ns: t + p.ramp_ns, volts: p.low_v });
    samples.push(Sample { t_ns: t + p.ramp_ns + p.dip_ns, volts: p.low_v });
    samples.push(Sample { t_ns: t + 2 * p.ramp_ns + p.dip_ns, volts: p.high_v });
}

/// Builds a synthetic trace. Equal seeds give equal traces.
pub fn synthesize_trace(kind: SynthKind, p: &SynthParams, seed: u64) -> Result<PowerTrace, PowerError> {
    let bad = |m: &str| Err(PowerError::InvalidParams(m.into()));
    if !(p.low_v >= 0.0 && p.high_v > p.low_v) {
        return bad("need 0 <= low_v < high_v");
    }
    if p.ramp_ns == 0 || p.dip_ns == 0 {
        return bad("ramp_ns and dip_ns must be positive");
    }
    let dip_len = 2 * p.ramp_ns + p.dip_ns;
    let mut samples = vec![Sample { t_ns: 0, volts: p.high_v }];
    match kind {
        SynthKind::Square => {
            if p.period_ns <= dip_len {
                return bad("period_ns must exceed the dip length");
            }
            for i in 0..p.dips as u64 {
                let start = i * p.period_ns + (p.period_ns - dip_len);
                samples.push(Sample { t_ns: start, volts: p.high_v });
                dip(&mut samples, start, p);
            }
            if p.dips == 0 {
                samples.push(Sample { t_ns: p.period_ns, volts: p.high_v });
            }
        }
        SynthKind::Poisson => {
            if !(p.rate_per_us >= 0.0) || !p.rate_per_us.is_finite() {
                return bad("rate_per_us must be a finite non-negative number");
            }
            if p.duration_ns == 0 {
                return bad("duration_ns must be positive");
            }
            if p.rate_per_us > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let gap = Exp::new(p.rate_per_us / 1000.0).map_err(|e| PowerError::InvalidParams(e.to_string()))?;
                let mut t = 0u64;
                loop {
                    let wait = (gap.sample(&mut rng) as u64).max(1) + rng.gen_range(0..2);
                    let start = t + wait;
                    if start + dip_len >= p.duration_ns {
                        break;
                    }
                    samples.push(Sample { t_ns: start, volts: p.high_v });
                    dip(&mut samples, start, p);
                    t = start + dip_len;
                }
            }
            if samples.last().unwrap().t_ns < p.duration_ns {
                samples.push(Sample { t_ns: p.duration_ns, volts: p.high_v });
            }
        }
    }
    PowerTrace::new(samples)
}
