pub mod pmf;
pub mod info;
pub mod region;
pub mod instance;
pub mod polytope;
pub mod config;
pub mod sim;
