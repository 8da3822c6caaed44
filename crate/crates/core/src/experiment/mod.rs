//! Experiment orchestration: configuration, accuracy sweeps, dataset
//! export and plotting.

pub mod config;
pub mod dataset;
pub mod plot;
pub mod run;

pub use config::{ChiSpec, ExperimentConfig, ProfileSource, SchemeKind};
pub use dataset::{gen_dataset, DatasetFile, Manifest};
pub use plot::{aggregate, plot, render_svg, Series};
pub use run::{mean_accuracy, run_experiment, write_results, ResultRecord, RESULTS_HEADER};
