//! Harmonic-map geometry: image lengths and curvature read off the Bochner
//! solution, a mesh solver for maps into the Poincaré disk, Hopf
//! differentials, and the partially free and twisted energy problems.

mod geometry;
mod hopf;
mod pipeline;
mod mesh;
mod solver;

pub use mesh::{Mesh, MeshRecord, MIN_ANGLE_DEG};
pub use solver::{
    energy, pfd_solve, reflect_mesh, solve_dirichlet, twist_delta, vertex_gradient,
    DirichletOptions, DiscreteMap, Initial, PfdSolution,
};
pub use hopf::{
    hopf_extract, loop_boundary_data, truncated_polygon_corners, GeodesicLoop, HopfSample,
    Orientation,
};
pub use geometry::{
    curvature_estimate, horizontal_segment_near_zero, image_length, image_metric_residue,
    image_side_lengths, side_images, SideImage,
};
pub use pipeline::{
    assemble, model_pipeline, CurvatureSample, LevelReport, PipelineConfig, PipelineReport,
};
