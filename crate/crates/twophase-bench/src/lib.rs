//! Rising-bubble benchmark driver for the two-phase flow solvers.
//!
//! The library half hosts the run configuration, the fitted mesh generator,
//! the time loop with its CSV/VTK/JSON reporting, and the extraction of the
//! standard benchmark quantities (circularity, centroid, rise velocity,
//! relative volume change). The `bubble-bench` binary is a thin CLI over
//! [`run::run`].

pub mod bench;
pub mod config;
pub mod meshgen;
pub mod output;
pub mod run;
