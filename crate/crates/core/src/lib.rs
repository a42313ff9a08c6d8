//! Numerical models of incompressible flows that carry a segment onto a
//! self-similar fractal in finite time, and of active scalar systems whose
//! solutions collapse or stay regular.

pub mod activescalar;
pub mod error;
pub mod fields;
pub mod flow;
pub mod geometry;
pub mod measures;
pub mod profiles;
pub mod quad;
pub mod table;

pub use activescalar::{CollapseVerdict, RibbonHistory, SlitHistory, SolverConfig};
pub use error::{Error, Result};
pub use fields::{Field2, Field3, FieldHandle, FieldKind, FieldSpec, GridSample};
pub use flow::{IntegratorConfig, Method, ParticleCloud, Trajectory};
pub use geometry::{AffineSimilarity, BinaryWord, FractalApprox, IfsParams, Rect};
pub use measures::{BoxCountReport, MeasureSeries, ParticleMeasure, TestFunction, WeakResidualReport};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;
