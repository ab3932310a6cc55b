//! Alternating adversarial training of the transform, task and
//! discriminator networks.

pub mod adam;
pub mod checkpoint;
pub mod model;
pub mod run;
pub mod step;
pub mod variant;

pub use adam::Adam;
pub use checkpoint::{load_inference, Checkpoint, InferenceModel};
pub use model::{ArchConfig, Models};
pub use run::{run_training, RunOptions, TrainOutcome};
pub use step::{train_step, Hygiene, TrainConfig, Trainer};
pub use variant::{variant_wiring, InputLevel, OutputLevel, OutputMap, Variant, Wiring};
