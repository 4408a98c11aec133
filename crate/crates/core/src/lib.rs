pub mod analysis;
pub mod context;
pub mod features;
pub mod hijack;
pub mod ingest;
pub mod pipeline;
pub mod scanner;
pub mod skill;
pub mod stats;
