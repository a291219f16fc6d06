pub mod config;
pub mod corpus;
pub mod error;
pub mod langid;
pub mod lm;
pub mod metrics;
pub mod minhash;
pub mod par;
pub mod pipeline;
pub mod refine;
pub mod threshold;
pub mod urldedup;
pub mod urlfilter;

pub use error::{Error, Result};
