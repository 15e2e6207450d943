//! Perturbation estimates for positive semigroups on finite weighted measure spaces.
//!
//! Operators are matrices acting on functions over `n` atoms with weights
//! `m_i > 0`; pairings are `<f, g> = sum_i f_i g_i m_i`. Generators are
//! Metzler matrices `G`, the semigroups are `exp(tG)`.

pub mod convolution;
pub mod error;
pub mod estimates;
mod expm;
pub mod forms;
pub mod kernels;
pub mod operator;
pub mod quadrature;
pub mod random;
pub mod scenario;
pub mod space;
pub mod verdict;

pub use error::{Error, Result};
pub use expm::expm;
pub use operator::{
    euler_formula, growth_bound, positivity_check, resolvent_apply, semigroup_apply, weighted_adjoint, Generator,
    GrowthBound, PositivityReport, Resolvent,
};
pub use space::{dual_exponent, dual_pairing, lp_norm, Exponent, LpElement, MeasureSpace};
pub use verdict::{Exactness, Site, SiteMargin, Status, Verdict};
