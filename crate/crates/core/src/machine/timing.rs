use serde::{Deserialize, Serialize};

/// Default core clock period. With it the ReRAM write-back latency comes out
/// at 31 cycles.
pub const DEFAULT_CLOCK_NS: f64 = 5.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NvmTech {
    Reram,
    Sttram,
    Pcm,
}

impl NvmTech {
    pub const ALL: [NvmTech; 3] = [NvmTech::Reram, NvmTech::Sttram, NvmTech::Pcm];

    pub fn name(self) -> &'static str {
        match self {
            NvmTech::Reram => "reram",
            NvmTech::Sttram => "sttram",
            NvmTech::Pcm => "pcm",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == s)
    }
}

/// Memory timing parameters in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NvmTiming {
    pub tech: NvmTech,
    pub t_ck: f64,
    pub t_burst: f64,
    pub t_rcd: f64,
    pub t_cl: f64,
    pub t_wtr: f64,
    pub t_wr: f64,
    pub t_xaw: f64,
}

impl NvmTiming {
    pub fn reram() -> Self {
        NvmTiming { tech: NvmTech::Reram, t_ck: 0.94, t_burst: 7.5, t_rcd: 18.0, t_cl: 15.0, t_wtr: 7.5, t_wr: 150.0, t_xaw: 30.0 }
    }

    pub fn sttram() -> Self {
        NvmTiming { tech: NvmTech::Sttram, t_ck: 1.5, t_burst: 6.0, t_rcd: 35.0, t_cl: 15.0, t_wtr: 12.5, t_wr: 25.0, t_xaw: 50.0 }
    }

    pub fn pcm() -> Self {
        NvmTiming { tech: NvmTech::Pcm, t_ck: 1.88, t_burst: 7.5, t_rcd: 48.0, t_cl: 15.0, t_wtr: 7.5, t_wr: 300.0, t_xaw: 50.0 }
    }

    pub fn for_tech(tech: NvmTech) -> Self {
        match tech {
            NvmTech::Reram => Self::reram(),
            NvmTech::Sttram => Self::sttram(),
            NvmTech::Pcm => Self::pcm(),
        }
    }

    /// Row activation, column access and one burst.
    pub fn read_cycles(&self, clock_ns: f64) -> u64 {
        ((self.t_rcd + self.t_cl + self.t_burst) / clock_ns).ceil() as u64
    }

    /// Row activation plus write recovery: the time until a write is durable.
    pub fn write_persist_cycles(&self, clock_ns: f64) -> u64 {
        ((self.t_rcd + self.t_wr) / clock_ns).ceil() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_cycles() {
        let c = DEFAULT_CLOCK_NS;
        assert_eq!(NvmTiming::reram().write_persist_cycles(c), 31);
        assert_eq!(NvmTiming::reram().read_cycles(c), 8);
        assert_eq!((NvmTiming::sttram().read_cycles(c), NvmTiming::sttram().write_persist_cycles(c)), (11, 11));
        assert_eq!((NvmTiming::pcm().read_cycles(c), NvmTiming::pcm().write_persist_cycles(c)), (13, 64));
    }
}
