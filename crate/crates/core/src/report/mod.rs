//! Derived metrics: ILP efficiency, region statistics and design comparison
//! tables.

mod bench;
mod ilp;
mod stats;

pub use bench::{bench_csv, cmd_bench, outages_for, BenchConfig, BenchRow, PowerSetup, BENCH_COLUMNS, BENCH_VERSION};
pub use ilp::{compute_ilp_efficiency, ilp_efficiency, IlpError, IlpReport, RegionIlp};
pub use stats::{aggregate, cmd_stats, region_stat, RegionStat, RegionStats};
