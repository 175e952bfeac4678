//! Gromov-Wasserstein transport between finite gauged measure spaces,
//! multi-marginal gluings, and the tangential fixpoint iteration for
//! free-support GW barycenters.

pub mod barycenter;
pub mod embed;
pub mod error;
pub mod gaussian;
pub mod gluing;
pub mod gmspace;
pub mod gw;
pub mod io;
pub mod mesh;
pub mod metrics;
pub mod ot;

pub use barycenter::{iterate, BaryOptions, BarycenterState, GlueRule, StepSolver, StopRule};
pub use error::{Error, Result};
pub use gluing::{Gluing, MultiCoupling};
pub use gmspace::{GaugeKind, GmSpace};
pub use gw::{solve_gw, GwInit, GwOptions, GwResult};
pub use mesh::TriMesh;
pub use ot::{Coupling, OtMethod, OtOptions};
