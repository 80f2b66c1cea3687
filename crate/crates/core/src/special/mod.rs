//! Special functions: Γ, Gauss ₂F₁, Appell F1 and the implicit branch θ(ν; w).

pub mod gamma;
pub mod hypergeometric;
pub mod theta;

pub use gamma::{gamma, ln_gamma};
pub use hypergeometric::{appell_f1, appell_f1_scaled, gauss_2f1, gauss_2f1_euler_scaled};
pub use theta::ThetaContext;
