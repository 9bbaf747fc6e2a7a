pub mod bench;
pub mod error;
pub mod harness;
pub mod learner;
pub mod model;
pub mod oracle;
pub mod partition;
pub mod sim;
