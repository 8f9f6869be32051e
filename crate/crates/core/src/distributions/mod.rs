//! Univariate leaf distributions: piecewise-uniform QPDs for transformed
//! numeric components and multinomials for symbolic columns.

mod multinomial;
mod qpd;

pub use multinomial::Multinomial;
pub use qpd::{DensityInterval, Qpd};
