//! Structure-preserving simulation of the Koopman–von Neumann equation
//!
//! ∂ₜψ = −F·∇ψ − ½(div F)ψ
//!
//! on bounded domains under the no-outflow condition F·ν ≤ 0, together with
//! a method-of-characteristics oracle for both ψ and the Liouville density
//! ρ = |ψ|², and the diagnostics that turn skew-symmetry, dissipativity,
//! norm conservation and Green's formula into measurable residuals.

pub mod diagnostics;
pub mod fields;
pub mod geometry;
pub mod operators;
pub mod point;
pub mod propagators;
pub mod semiflow;
pub mod series;

pub use diagnostics::{
    measure_order, verify_run, DiagnosticsError, Order, RunArtifacts, VerificationReport,
};
pub use fields::{
    check_no_outflow, classify_boundary, lipschitz_estimate, BoundaryClassification, FieldKind,
    NoOutflowVerdict, Polynomial, VectorField,
};
pub use geometry::{build_grid, BoundaryFace, Domain, Grid};
pub use num_complex::Complex64;
pub use operators::{
    apply, assemble_koopman_generator, assemble_kvn_generator, assemble_pf_generator, pfs_norm,
    skewness_defect, ComplexField, RealField, SparseOperator,
};
pub use point::Point;
pub use semiflow::{check_semigroup, integrate, Trajectory};

pub use propagators::{
    cayley_step, characteristics_oracle_kvn, characteristics_oracle_liouville, dense_expm_step,
    propagate, rk4_step, Propagation, PropagatorConfig, Scheme,
};
pub use series::{read_series, write_series, Series, SeriesError};
