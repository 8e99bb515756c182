//! Front end for the self-triggered control pipeline: problem configs,
//! persisted offline tables, CSV traces and the validation suites.

pub mod config;
pub mod csvout;
pub mod run;
pub mod suites;
pub mod tables;
