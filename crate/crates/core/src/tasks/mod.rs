//! Task streams: synthetic odors, permuted image streams, class imbalance,
//! and ingestion of externally extracted feature files.

mod dataset;
mod digits;
mod flyf;
mod idx;
mod imbalance;
mod odor;
mod permute;
mod split;

pub use dataset::{class_mask, Dataset};
pub use digits::{gen_digits, DigitsConfig};
pub use flyf::{decode_features, encode_features, load_feature_file, write_feature_file, FEATURE_MAGIC};
pub use idx::{decode_idx, encode_idx_images, encode_idx_labels, load_idx};
pub use imbalance::{apply_imbalance, imbalance_sizes, ImbalanceOrder, ImbalanceSpec};
pub use odor::{gen_odor_dataset, OdorConfig, OdorData};
pub use permute::{make_permuted_stream, PermutationMode, PermutationSpec, PermutedStream};
pub use split::{split_cil, ClassOrder};

use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    ClassIncremental,
    Streaming,
}

/// One task: its training data, an optional held-out split and the classes
/// it declares.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub train: Dataset,
    pub test: Option<Dataset>,
    pub classes: Vec<usize>,
}

/// Anything that can hand out tasks in order. Permuted streams build each
/// task on demand instead of holding all of them in memory.
pub trait TaskSource {
    fn n_tasks(&self) -> usize;
    fn n_classes(&self) -> usize;
    fn dim(&self) -> usize;
    fn task(&self, index: usize) -> Result<Task>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskStream {
    pub tasks: Vec<Task>,
    pub protocol: Protocol,
    pub batch_size: usize,
    pub epochs_per_task: usize,
}

impl TaskStream {
    /// Every class declared by any task, in task order.
    pub fn all_classes(&self) -> Vec<usize> {
        self.tasks.iter().flat_map(|t| t.classes.iter().copied()).collect()
    }
}

impl TaskSource for TaskStream {
    fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    fn n_classes(&self) -> usize {
        self.tasks.first().map_or(0, |t| t.train.n_classes())
    }

    fn dim(&self) -> usize {
        self.tasks.first().map_or(0, |t| t.train.dim())
    }

    fn task(&self, index: usize) -> Result<Task> {
        self.tasks
            .get(index)
            .cloned()
            .ok_or_else(|| crate::Error::MissingData(format!("no task {index}")))
    }
}
