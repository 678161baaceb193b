//! Simulation of a quadruped follower carrying a payload with a robot or
//! human leader: terrain, coupling, world stepping, scenarios, traces.

pub mod coupling;
pub mod leader;
pub mod run;
pub mod scenario;
pub mod summary;
pub mod terrain;
pub mod trace;
pub mod world;
