//! File formats, configuration, parallel simulation and the command-line
//! driver around [`riesz_core`].

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use commands::{cmd_estimate, cmd_simulate, cmd_truth, run_parallel, sim_config};
pub use config::RunConfig;
pub use error::{CliError, Result};
pub use io::{load_csv, read_csv, save_csv, write_csv};
