//! Exact forward physics: the EIT conductivity problem with first- and
//! second-order adjoints, a Dirichlet Laplace lift, a periodic
//! vorticity solver, noise injection and synthetic datasets.

pub mod data;
pub mod eit;
pub mod grid;
pub mod harmonic;
pub mod linalg;
pub mod noise;
pub mod ns;

pub use data::{gen_blobs, gen_dataset, gen_grf, pair_eit, pair_ns, BlobParams, Dataset, DatasetKind};
pub use eit::{EitSolution, EitSolver, EllipticOperator, SolverSettings};
pub use grid::{ConductivityField, CurrentPatternSet, Grid};
pub use harmonic::harmonic_extension;
pub use noise::{inject_noise, inject_noise_with, population_std};
pub use ns::{ns_forward, Forcing, NsConfig};
