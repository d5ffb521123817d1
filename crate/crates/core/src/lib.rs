pub mod channel;
pub mod combine;
pub mod de;
pub mod decoder;
pub mod error;
pub mod qla;

pub use error::{Error, Result};
