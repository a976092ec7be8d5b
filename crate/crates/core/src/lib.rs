#![allow(clippy::result_large_err)]

pub mod appdir;
pub mod castore;
mod codec;
pub mod identity;
pub mod merklefs;
pub mod netsim;
pub mod scenefs;

pub use codec::DecodeError;
