//! File formats: point clouds, map chains, traces and run reports.

mod cloud;
mod map_file;
mod report;

pub use cloud::{
    format_ply, format_text, parse_cloud, parse_ply, parse_text, read_cloud, write_cloud, CloudFormat,
};
pub use map_file::{load_map, read_map, save_map, write_map, MAP_FORMAT, MAP_VERSION};
pub use report::{trace_csv, FinalRmse, RunReport, TRACE_HEADER};
