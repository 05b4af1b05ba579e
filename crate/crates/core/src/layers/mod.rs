//! Point clouds, neighborhoods and edge features, the CoFD and MoFD
//! interaction layers, and the energy model built from them.

mod cofd;
mod geometry;
mod model;
mod mofd;
mod ops;
mod params;

pub use cofd::{cofd_fusion_diagrams, cofd_layer, CofdLayer, CofdPlan};
pub use geometry::{
    build_neighborhood, edge_features, record_geometry, EdgeNodes, Neighborhood, PointCloud, TapeGeometry,
};
pub use model::{Architecture, Layer, Model, ModelConfig, TapeEnergy};
pub use mofd::{mofd_diagrams, mofd_update, MofdLayer, MofdPlan, ScheduleMode, SpinSchedule};
pub use ops::{cg_nonlinearity, cg_nonlinearity_on_tape, gate_on_tape, invariant_gate, nonlinearity_terms, GateShape};
pub use params::{Bound, ParamSet};
