pub mod aimd_net;
pub mod error;
pub mod numerics;
pub mod quad;
pub mod specfun;
pub mod tcp_finite;
pub mod tcp_infinite;
pub mod tree_analytic;
pub mod tree_gen;
pub mod window_sim;

pub use error::{Error, Result};
pub use numerics::NumericsConfig;
