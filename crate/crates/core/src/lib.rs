//! Distributed tuple spaces over unreliable broadcast media.

pub mod agent;
pub mod ble_sim;
pub mod cli;
pub mod codec;
pub mod fpe;
pub mod live;
pub mod node;
pub mod router;
pub mod rpc;
pub mod sim;
pub mod space;
pub mod udp;
pub mod util;
