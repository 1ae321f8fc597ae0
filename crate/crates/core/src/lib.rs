#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod corpus;
pub mod error;
pub mod fiber;
pub mod hyperbolic;
pub mod lifting;
pub mod poly;
pub mod ratmap;
pub mod sphere;
pub mod tolerances;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use ratmap::RationalMap;
pub use sphere::{Configuration, MobiusTransform, SpherePoint};
pub use tolerances::Tolerances;
