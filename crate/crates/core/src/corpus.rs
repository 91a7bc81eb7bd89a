//! Bundled micro-programs used by tests, benchmarks and examples.

use crate::isa::{parse_assembly, Program};

macro_rules! corpus {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../corpus/", $name, ".s")))),*]
    };
}

/// `(name, assembly source)` pairs in a fixed order.
pub const PROGRAMS: &[(&str, &str)] = corpus![
    "two_stores",
    "array_sum",
    "locality_loop",
    "diamond",
    "nested_calls",
    "spill_pressure",
    "memcpy",
    "fib",
    "bubble_sort",
    "histogram",
    "counter_calls",
    "matvec",
];

/// The load-heavy loop used for design comparisons.
pub const LOCALITY_LOOP: &str = "locality_loop";

pub fn source(name: &str) -> Option<&'static str> {
    PROGRAMS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Parses a bundled program. Panics if `name` is unknown.
pub fn program(name: &str) -> Program {
    let src = source(name).unwrap_or_else(|| panic!("no corpus program `{name}`"));
    parse_assembly(src).expect("corpus programs parse")
}

pub fn names() -> impl Iterator<Item = &'static str> {
    PROGRAMS.iter().map(|(n, _)| *n)
}

/// The locality loop with a different pass count, for runs long enough to
/// see many outages.
pub fn locality_loop(passes: u32) -> Program {
    let src = source(LOCALITY_LOOP).expect("bundled").replacen("li v11, 48", &format!("li v11, {passes}"), 1);
    parse_assembly(&src).expect("corpus programs parse")
}
