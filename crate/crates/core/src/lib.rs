pub mod codec;
pub mod credentials;
pub mod crypto;
pub mod registry;
pub mod trace;
pub mod transport;
pub mod network;
pub mod anchors;
pub mod agent;
pub mod harness;
