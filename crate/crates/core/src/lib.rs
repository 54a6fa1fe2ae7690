pub mod app;
pub mod error;
pub mod metrics;
pub mod nets;
pub mod preproc;
pub mod synth;
pub mod tensor;
pub use error::{Error, Result};
