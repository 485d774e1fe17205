//! Mixed linear regression by convex fusion.
//!
//! Each measurement `(a_i, b_i)` gets its own coefficient estimate `z_i`,
//! constrained to the hyperplane `a_i^T z = b_i`; the sum of pairwise
//! distances `sum_{i,j} ||z_i - z_j||` pulls estimates of the same class onto
//! a common point. The crate provides
//!
//! * the data model and objective ([`model`]),
//! * the geometric recovery conditions ([`geometry`]),
//! * a closed-form dual certificate that proves exact recovery
//!   ([`certificate`]),
//! * an iteratively reweighted least-squares solver ([`irls`]),
//! * k-means clustering of the estimates and per-class refitting
//!   ([`cluster`]),
//! * synthetic ensembles ([`synth`]), file formats ([`io`]) and the
//!   pipelines used by the command-line tool ([`harness`]).

pub mod certificate;
pub mod cluster;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod irls;
pub mod linalg;
pub mod model;
pub mod synth;

pub use certificate::{
    build_certificate, certify, verify_certificate, Certificate, CertificateVerdict,
};
pub use cluster::{kmeans, match_labels, refit_regression, ClusteringResult, RefitResult};
pub use error::{MlrError, Result};
pub use geometry::{check_conditions, separation_ratio, ConditionReport, DirectionSet};
pub use irls::{irls_solve, weighted_ls_step, SolveTrace, SolverOptions, WeightMatrix};
pub use model::{
    candidate_solution, feasibility_residual, objective, recovery_error, Dataset, EstimateField,
    Measurement, MixtureModel,
};
pub use synth::{gen_sim1, gen_sim2, Sim1Config, Sim2Config};
