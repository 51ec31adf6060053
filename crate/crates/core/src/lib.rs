//! Climate-driven performance maps for building systems.
//!
//! Hourly climate files for three periods drive a linear state-space model
//! per station; each run is reduced to one number and the per-station
//! numbers are interpolated onto a lon/lat grid and drawn as maps.

pub mod climate;
pub mod error;
pub mod linalg;
pub mod maprender;
pub mod numfmt;
pub mod perf;
pub mod pipeline;
pub mod statespace;
pub mod systems;

pub use climate::{
    generate_dataset, generate_station, parse_climate_file, parse_climate_str, write_climate_file, ClampCounts,
    ClimateSeries, GeoHeader, PeriodDataset, PeriodKey, ScenarioOffsets, VarCode,
};
pub use error::{Error, Result};
pub use linalg::Mat;
pub use maprender::{interpolate, ColorScale, GridSpec, IdwPlan, MapGrid};
pub use perf::{
    assemble_map_table, climate_stat, run_station, MapColumn, MapRow, MapTable, PerformanceIndicator, PreparedSystem,
    StationResult, Statistic,
};
pub use pipeline::{run_pipeline, PipelineConfig, RunManifest, RunMode};
pub use statespace::{
    dc_gain, discretize_zoh, expm, simulate, steady_state, DiscreteModel, InputSource, StateSpaceModel,
};
pub use systems::{
    build_from_config, build_hvac, build_solar_collector, Binding, HvacConstants, ModelConfig, ScConstants, SystemSpec,
    X0Policy,
};
