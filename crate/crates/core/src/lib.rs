pub mod aggregation;
pub mod calibration;
pub mod components;
pub mod discrimination;
pub mod impact;
pub mod ingest;
pub mod pipeline;
pub mod report;
pub mod robustness;
pub mod saturation;
pub mod stats;
pub mod synthetic;
