//! Manifolds, vector fields and their flows.

pub mod expr;
pub mod field;
pub mod integrate;
pub mod manifold;
pub mod spec_file;

pub use field::{Catalog, VectorField};
pub use integrate::{Direction, FlowSystem, Hit, TrajectorySegment};
pub use manifold::{ChartPoint, ManifoldKind, ManifoldSpec};
pub use spec_file::FlowSpecFile;
