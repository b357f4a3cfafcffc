//! Single-view structure from motion for rolling-shutter cameras: camera
//! model, image curves of lines, minimal solvers, benchmarks and RANSAC.

pub mod bench;
pub mod camera;
pub mod curvespace;
pub mod io;
pub mod poly;
pub mod robust;
pub mod solvers;

pub use bench::{BenchConfig, BenchError, ErrorRecord, SampleResult, Scene};
pub use camera::{CameraError, ImagePoint, PluckerLine, RSCamera};
pub use curvespace::{CurveError, CurveHD, PlaneRep};
pub use io::{IoError, Metadata};
pub use poly::{PolyError, TrackerConfig, C64};
pub use robust::{ransac, RansacConfig, RansacResult, RobustError};
pub use solvers::{
    catalog, lookup, solve, Candidate, LineStrategy, Motion, ObservationSet, PointObs, ProblemSpec, SolutionSet,
    SolverError, Structure,
};
