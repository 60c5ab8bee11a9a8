//! Axially symmetric volume-preserving mean curvature flow.
//!
//! A surface of revolution in `R^{n+1}` is represented by its generating
//! curve in the meridian half-plane. The crate evolves that curve under
//! the nonlocal law `∂x/∂t = -(H - h)ν`, checks a ledger of a-priori bounds
//! while it runs, and decides convergence to a sphere or hemisphere.
//!
//! Everything here is `no_std` with `alloc`; file formats and the command
//! line live in the `vpmcf` crate.

#![no_std]

extern crate alloc;

pub mod convergence;
pub mod curve;
pub mod flow;
pub mod geometry;
pub mod math;
pub mod monitor;
pub mod oracle;

pub use convergence::{ConvergenceReport, ConvergenceObserver};
pub use curve::{build_profile, validate, InitialShapeSpec, Point, ProfileCurve, ShapeKind, Topology};
pub use flow::{run, step, FlowError, FlowMode, FlowState, RunSummary, StepPolicy};
pub use geometry::{frames, PointFrame};
pub use monitor::{BoundLedger, MonitorReport};
