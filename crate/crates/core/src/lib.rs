//! Motion-primitive receding-horizon navigation for center-articulated
//! vehicles: offline primitive-library compilation, online planning with
//! heuristic scoring and bi-directional recovery, pose-stabilizing path
//! tracking, and a benchmark harness over procedurally generated worlds.

pub mod geom;
pub mod kinematics;
pub mod library_io;
pub mod planner;
pub mod sim;
pub mod collision;
pub mod controller;
pub mod primitives;
