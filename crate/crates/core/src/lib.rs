//! Engine for an interactive external-beam radiotherapy treatment-room
//! simulator: linac kinematics, triangle-level collision and clearance
//! queries, CT surface reconstruction and the measurement/scenario harness.

pub mod geometry;
pub mod collision;
pub mod ct;
pub mod linac;
pub mod measure;
pub mod wire;
