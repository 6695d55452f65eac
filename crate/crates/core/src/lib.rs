//! Randomized and deterministic block orthogonalization for s-step GMRES.

pub mod block;
pub mod cost;
pub mod dense;
pub mod error;
pub mod gmres;
pub mod intra;
pub mod ledger;
pub mod matrix_market;
pub mod metrics;
pub mod problems;
pub mod sketch;
pub mod sparse;

#[cfg(test)]
mod solver_tests;
#[cfg(test)]
mod testutil;

pub use block::{
    bcgs2, bcgs_pip, bcgs_project, rand_bcgs_preproc, two_stage_cycle, BasisStore, IntraKind,
    Preprocess, TwoStage,
};
pub use cost::{cost_table, eval_cost, CostQuery, CostReport, CostScheme, Exact};
pub use dense::{householder_qr, DenseMatrix, MatRef, UpperTriangular};
pub use error::{Error, Result};
pub use gmres::{sstep_gmres_solve, Scheme, SolveReport, SolverConfig};
pub use intra::{cholqr, cholqr2, rand_cholqr, recursive_cholqr, QrFactors, RecursiveQr};
pub use ledger::{ReduceLedger, ReducePhase};
pub use matrix_market::{read_matrix_market, write_matrix_market};
pub use metrics::{condition_number, orthogonality_error};
pub use problems::{gen_glued, laplace_2d, laplace_3d};
pub use sketch::{apply_sketch, build_sketch, embedding_distortion, SketchKind, SketchOperator};
pub use sparse::{CsrMatrix, IdentityPreconditioner, Preconditioner};
