//! Sensor-frame ingestion, NoC labeling and synthetic data generation.

mod csv_io;
mod frame;
mod noc;
mod synth;

pub use csv_io::{
    format_change_points, load_csv, load_noc, parse_change_points, parse_frame_str, parse_noc_str,
    parse_timestamp, read_frame, read_noc, save_csv, save_noc, write_frame, write_noc,
    DEFAULT_TIMESTAMP_COLUMN, LABEL_COLUMN,
};
pub use frame::TimeSeriesFrame;
pub use noc::{label_from_noc, NocIntervals};
pub use synth::{generate_synthetic, SynthConfig, SyntheticData};
