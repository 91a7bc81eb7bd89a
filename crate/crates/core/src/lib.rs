pub mod cli;
pub mod compiler;
pub mod config;
pub mod corpus;
pub mod isa;
pub mod machine;
pub mod memory;
pub mod oracle;
pub mod power;
pub mod recovery;
pub mod report;
