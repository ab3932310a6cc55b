//! Datasets: on-disk adapters, augmentation, pair scheduling and the
//! procedural toy benchmark.

pub mod adapters;
pub mod augment;
pub mod pairs;
pub mod toy;

pub use adapters::{load_sample, write_toy_dataset, Dataset, DatasetSpec, Layout, Split, ToyManifest};
pub use augment::{augment, flip_horizontal};
pub use pairs::{make_pair_iterator, PairIterator, PairSchedule, SampleSource};
pub use toy::{generate_toy, ToyShift, ToyWorldConfig};
