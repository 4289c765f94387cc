//! Chain recurrence, Smale order and constructive Morse energy functions
//! for flows with finitely many hyperbolic fixed points on circles, tori,
//! spheres and trapped planar disks.

pub mod error;
pub mod chain;
pub mod contour;
pub mod energy;
pub mod fixed_points;
pub mod flow;
pub mod grid;
pub mod order;
pub mod pipeline;
pub mod verify;

pub use error::{Error, Result};
pub use flow::{Catalog, ChartPoint, Direction, FlowSpecFile, FlowSystem, ManifoldKind, ManifoldSpec, VectorField};
pub use energy::{build, BuildOptions, EnergyField, Region};
pub use order::OrderedSpectrum;
pub use pipeline::{analyze, Analysis, AnalysisOptions};
pub use verify::{verify, MorseCheckReport, VerifyOptions};
