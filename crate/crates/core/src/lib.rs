pub mod bandwidth;
pub mod config;
pub mod error;
pub mod failure;
pub mod montecarlo;
pub mod structure;
pub mod topology;
pub mod verify;
