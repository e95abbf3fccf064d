//! Slotted wireless scheduling with base-station activation and switching costs.

pub mod cli;
pub mod lp;
pub mod markov;
pub mod model;
pub mod policy;
pub mod region;
pub mod sim;
