//! Thresholded gravity accessibility with fitted power-exponential impedance.
//!
//! The crate computes zonal and regional accessibility to opportunities over
//! a sparse travel-time matrix, along with the analyses built on it:
//! contour overestimation, transport efficiency against a straight-line
//! ideal, and disadvantage-weighted opportunity improvement potential.
//! Synthetic cities make every analysis runnable without external data.
//!
//! | module | contents |
//! |---|---|
//! | [`model`] | zones, regions, weights, sparse cost matrix, opportunity table |
//! | [`impedance`] | `exp(−α·t^β)` evaluation, fitting from trip records, duration CDFs |
//! | [`access`] | zonal accessibility, aggregation, threshold sweeps, contour comparison |
//! | [`efficiency`] | ideal accessibility and the efficiency ratio |
//! | [`equity`] | disadvantage index, weighted populations, improvement potential |
//! | [`netgen`] | synthetic cities and bounded shortest paths |
//! | [`io`] | CSV, JSON, GeoJSON and binary matrix formats |
//! | [`cli`] | the `gravcat` command line |
//!
//! Runnable walkthroughs live in `crates/core/examples/`.
//!
//! All parallel work is split by origin row and every sum runs in a fixed
//! order, so results are bit-identical for any thread count.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod access;
pub mod cli;
pub mod efficiency;
pub mod equity;
pub mod error;
pub mod impedance;
pub mod io;
pub mod model;
pub mod netgen;

pub use access::{aggregate, threshold_sweep, zonal_accessibility, AccessibilityResult, Intrazonal};
pub use error::{Error, Result};
pub use impedance::{ImpedanceParams, ParamsRegistry, TripRecord};
pub use model::{population_weights, Basis, CostMatrix, LatLon, Mode, OpportunityTable, Region, Weights, Zone, ZoneSet};
