pub mod cli;
pub mod codec;
pub mod container;
pub mod error;
pub mod ingest;
pub mod memory;
pub mod model;
pub mod pyramid;
pub mod reader;
pub mod synthetic;
