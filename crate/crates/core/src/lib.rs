pub mod accelerator;
pub mod bus;
pub mod config;
pub mod dram;
pub mod dse;
pub mod error;
pub mod estimator;
pub mod memmap;
pub mod sim;
pub mod workload;
