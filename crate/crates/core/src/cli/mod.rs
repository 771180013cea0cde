//! Ingestion, batch execution, multiple-testing adjustment and output.

pub mod batch;
pub mod bh;
pub mod ingest;
pub mod report;

pub use batch::{run_batch, run_batch_on, BatchConfig, PvalueTable};
pub use bh::bh_adjust;
pub use ingest::{ingest_csv, ingest_reader, IngestOptions, InputKind, ReturnsTable};
pub use report::{emit_csv, emit_json, parse_csv, parse_json};
