//! Image workflow: tiling, image files, the `.sdq` container, quantize and
//! reconstruct drivers, and the experiment harness.

pub mod container;
pub mod experiments;
pub mod image_io;
pub mod layout;
pub mod workflow;

pub use container::SdqContainer;
pub use image_io::{read_image, write_image, Image};
pub use layout::{segment, stack, Patch, PatchLayout, Remainder};
pub use workflow::{
    brighten, build_report, default_alphabet, quantize_image, reconstruct, QuantizeOptions,
    ReconClass, ReconstructOptions, ReconstructReport, Reconstruction,
};
