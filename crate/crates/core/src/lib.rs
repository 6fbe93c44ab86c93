pub mod channel;
pub mod de;
pub mod degree;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod llr;
pub mod optimizer;
pub mod simulator;
pub mod table1;

pub use error::{Error, Result};
