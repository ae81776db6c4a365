//! Small numerical toolkit: bracketing roots, adaptive quadrature and a
//! simplex minimizer.

pub mod nelder_mead;
pub mod quadrature;
pub mod roots;

pub use quadrature::QuadTolerance;
pub use roots::RootTolerance;
