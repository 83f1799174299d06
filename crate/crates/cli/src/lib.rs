//! Command-line front end for the `mdp-lab` experiments: spec parsing,
//! subcommands and CSV/SVG output.

pub mod commands;
pub mod error;
pub mod spec;
pub mod svg;

pub use commands::{cmd_robustness, cmd_simulate, solve_report, CurveSet, Outputs, Overrides};
pub use error::CliError;
pub use spec::{ExperimentSpec, PAPER_EXAMPLE};
