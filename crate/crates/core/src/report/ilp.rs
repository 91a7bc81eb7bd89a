use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::machine::RunReport;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IlpError {
    #[error("no stores")]
    NoStores,
    #[error("not applicable: the run retired no stores in any region")]
    NotApplicable,
    #[error("persist latency must be positive")]
    ZeroLatency,
    #[error("stall {stall} exceeds persist latency {latency}")]
    StallOutOfRange { stall: u64, latency: u64 },
}

/// Efficiency of one set of stores, in percent: each store that did not
/// stall counts 1 and each stalled store `1 - S/C`.
pub fn ilp_efficiency(stalls: &[u64], c: u64) -> Result<f64, IlpError> {
    if c == 0 {
        return Err(IlpError::ZeroLatency);
    }
    if stalls.is_empty() {
        return Err(IlpError::NoStores);
    }
    let mut sum = 0.0;
    for &s in stalls {
        if s > c {
            return Err(IlpError::StallOutOfRange { stall: s, latency: c });
        }
        sum += if s == 0 { 1.0 } else { 1.0 - s as f64 / c as f64 };
    }
    Ok(sum / stalls.len() as f64 * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionIlp {
    pub region_start: u64,
    pub stores: usize,
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IlpReport {
    pub latency: u64,
    pub n_stores: usize,
    /// Store-weighted over regions.
    pub efficiency: f64,
    pub regions: Vec<RegionIlp>,
}

/// Per-region efficiency for every store that retired in normal execution,
/// grouped by region start and aggregated store-weighted. Regions that
/// retired no stores do not appear.
pub fn compute_ilp_efficiency(report: &RunReport, c: u64) -> Result<IlpReport, IlpError> {
    if c == 0 {
        return Err(IlpError::ZeroLatency);
    }
    let mut by_region: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for s in &report.store_stalls {
        by_region.entry(s.region_start).or_default().push(s.stall);
    }
    if by_region.is_empty() {
        return Err(IlpError::NotApplicable);
    }
    let mut regions = Vec::with_capacity(by_region.len());
    for (start, stalls) in by_region {
        regions.push(RegionIlp { region_start: start, stores: stalls.len(), efficiency: ilp_efficiency(&stalls, c)? });
    }
    let n: usize = regions.iter().map(|r| r.stores).sum();
    let efficiency = regions.iter().map(|r| r.efficiency * r.stores as f64).sum::<f64>() / n as f64;
    Ok(IlpReport { latency: c, n_stores: n, efficiency, regions })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_values() {
        assert_eq!(ilp_efficiency(&[0, 0, 0], 31).unwrap(), 100.0);
        assert_eq!(ilp_efficiency(&[31], 31).unwrap(), 0.0);
        assert_eq!(ilp_efficiency(&[], 31), Err(IlpError::NoStores));
        assert_eq!(ilp_efficiency(&[1], 0), Err(IlpError::ZeroLatency));
        assert!(matches!(ilp_efficiency(&[32], 31), Err(IlpError::StallOutOfRange { .. })));
    }
}
