pub mod agents;
pub mod bench;
pub mod channel;
pub mod env;
pub mod error;
pub mod estimation;
pub mod fmt;
pub mod mdp;
pub mod structure;
pub mod nn;
