pub mod agents;
pub mod benchgen;
pub mod bus;
pub mod dcop;
pub mod harness;
pub mod model;
pub mod stream;
