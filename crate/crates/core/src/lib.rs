pub mod alphabet;
pub mod analysis;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod grid_ops;
pub mod pipeline;
pub mod signals;
