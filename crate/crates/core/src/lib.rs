pub mod channel;
pub mod cvx;
pub mod error;
pub mod harness;
pub mod joint;
pub mod placement;
pub mod precoder;
pub mod signal;
pub mod trace;

pub use error::{Error, Result};
