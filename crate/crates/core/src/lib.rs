pub mod autograd;
pub mod bench;
pub mod blocks;
pub mod imageio;
pub mod metrics;
pub mod model;
pub mod params;
pub mod stereo;
pub mod synthetic;
pub mod tensor;
pub mod training;

pub use model::{ArchConfig, Model, Preset};
pub use stereo::StereoPair;
