//! Multi-band cellular load balancing laboratory.
//!
//! - [`model`]: domain types, load vectors, the max-load and handover
//!   objectives, and the load balancing index.
//! - [`lp`]: revised simplex LP solver and branch-and-bound MILP solver.
//! - [`balancer`]: the probabilistic balancing pipeline (prefilter, windowed
//!   load estimation, LP construction, rounding) and the baseline policies.
//! - [`sim`]: time-stepped per-cell simulator with proportional-fair service.
//! - [`kpi`]: per-window KPI aggregation, report serialization and comparison.

pub mod balancer;
pub mod kpi;
pub mod lp;
pub mod model;
pub mod sim;
