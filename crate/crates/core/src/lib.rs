//! Exact laboratory for batch value-function approximation in tabular MDPs.
//!
//! The crate implements fitted Q-iteration, the minimax squared-Bellman
//! objective (MSBO) and the minimax average-Bellman objective (MABO) over
//! finite function classes, and evaluates every error and concentrability
//! quantity that enters their performance bounds in closed form.

pub mod classes;
pub mod constructions;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod lp;
pub mod mdp;
pub mod rng;
pub mod solvers;
pub mod table;

pub use classes::{ClassSpec, LinearQClass, QClass, SpanCoefficients, WClass};
pub use constructions::{LowRankMdpSpec, SpannerSelection};
pub use data::{BatchDataset, DataDistribution, Transition};
pub use diagnostics::BoundReport;
pub use error::{Error, Result};
pub use mdp::{DeterministicPolicy, OccupancyKind, OccupancyMeasure, TabularMdp};
pub use solvers::{Algorithm, LossSource, SolverResult};
pub use table::{QFunction, Table, WeightFunction};
