//! Strong Taylor–Itô and Taylor–Stratonovich one-step schemes, path and
//! ensemble simulation, and coupled convergence studies.

mod simulate;
mod step;
mod study;
mod table;

pub(crate) use simulate::{Accumulator, CHUNK};
pub use simulate::{simulate_ensemble, simulate_path, DivergedPath, Ensemble, Moments, Simulator};
pub use step::{step, steps_for, SchemeConfig, SchemeError, Stepper, Trajectory, Workspace};
pub use study::{
    fit_slope, gbm_solution, run_study, strong_error_study, ErrorStudy, ExactSolution, Reference,
    SchemeSlope, StudyRow, StudySpec, COUPLED_DEGREES, FINE_DEGREES,
};
pub use table::{
    integral_weights, scheme_terms, Base, Calculus, Op, Order, Part, Term, UnsupportedScheme,
};
