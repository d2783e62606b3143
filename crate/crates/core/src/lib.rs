//! Orthogonality-constrained Wasserstein GAN critics on small synthetic
//! datasets, with the dense linear algebra, reverse-mode differentiation and
//! evaluation tooling they need.

pub mod autodiff;
pub mod eval;
pub mod linalg;
pub mod ortho;
pub mod wgan;
