//! Distributed image feature extraction.
//!
//! The crate is organized around a simple pipeline: images are packed into a
//! single bundle file ([`bundle`]), per-image extraction tasks run as a
//! map-only job over a pluggable backend ([`engine`], [`netproto`]), and the
//! detected keypoints and descriptors ([`detect`], [`describe`]) are persisted
//! in a diffable text format ([`featio`]).

pub mod bundle;
pub mod codec;
pub mod describe;
pub mod detect;
pub mod engine;
pub mod featio;
pub mod netproto;
pub mod params;
pub mod raster;
pub mod synth;

pub use bundle::{Bundle, BundleHeader, EntryMeta, ImageFormat, Split};
pub use describe::{BinaryDescriptor, Descriptors, FloatDescriptor, SamplingPattern};
pub use detect::Keypoint;
pub use engine::{Algorithm, JobReport, JobSpec, Task, TaskResult};
pub use params::{DescriptorParams, DetectorParams};
pub use raster::{GrayImage, IntegralImage, PixelImage, Pyramid, ScalarGrid};
