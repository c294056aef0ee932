use ndarray::Array2;
use rand::seq::{index, SliceRandom};
use rand::Rng as _;

use super::{Dataset, Protocol, Task, TaskSource, TaskStream};
use crate::rng::{stream, substream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PermutationMode {
    /// Shuffle feature coordinates (pixels).
    Input,
    /// Shuffle class labels.
    Label,
}

impl std::str::FromStr for PermutationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "input" => Ok(Self::Input),
            "label" => Ok(Self::Label),
            _ => Err(Error::Config(format!("unknown permutation mode {s:?}"))),
        }
    }
}

/// Per-task bijections derived from one seed. Task 0 is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PermutationSpec {
    pub mode: PermutationMode,
    pub seed: u64,
}

impl PermutationSpec {
    /// The bijection of task `task` over `size` items.
    pub fn permutation(&self, task: usize, size: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..size).collect();
        if task > 0 {
            p.shuffle(&mut substream(self.seed, &[stream::PERMUTATION, task as u64, 0]));
        }
        p
    }

    pub fn inverse(perm: &[usize]) -> Vec<usize> {
        let mut inv = vec![0; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        inv
    }

    /// Applies `perm` to a dataset under this spec's mode: input mode sets
    /// `x'[j] = x[perm[j]]`, label mode sets `y' = perm[y]`.
    pub fn apply(&self, data: &Dataset, perm: &[usize]) -> Result<Dataset> {
        match self.mode {
            PermutationMode::Input => {
                let x = data.features();
                let out = Array2::from_shape_fn(x.dim(), |(i, j)| x[[i, perm[j]]]);
                Dataset::new(out, data.labels().to_vec(), data.n_classes())
            }
            PermutationMode::Label => Dataset::new(
                data.features().to_owned(),
                data.labels().iter().map(|&y| perm[y]).collect(),
                data.n_classes(),
            ),
        }
    }
}

/// A streaming sequence of permuted tasks built on demand from a base pool.
/// Each task draws its own `samples_per_task` rows (without replacement when
/// the pool is large enough) and then applies its permutation.
#[derive(Debug, Clone)]
pub struct PermutedStream {
    pub base: Dataset,
    pub spec: PermutationSpec,
    pub n_tasks: usize,
    pub samples_per_task: usize,
}

impl PermutedStream {
    pub fn new(
        base: Dataset,
        spec: PermutationSpec,
        n_tasks: usize,
        samples_per_task: usize,
    ) -> Result<Self> {
        if base.is_empty() {
            return Err(Error::EmptyData("permuted stream needs a non-empty pool".into()));
        }
        if n_tasks == 0 || samples_per_task == 0 {
            return Err(Error::Config("task count and samples per task must be positive".into()));
        }
        Ok(Self {
            base,
            spec,
            n_tasks,
            samples_per_task,
        })
    }

    fn sample_rows(&self, task: usize) -> Vec<usize> {
        let n = self.base.len();
        let mut rng = substream(self.spec.seed, &[stream::PERMUTATION, task as u64, 1]);
        if self.samples_per_task <= n {
            index::sample(&mut rng, n, self.samples_per_task).into_vec()
        } else {
            (0..self.samples_per_task).map(|_| rng.gen_range(0..n)).collect()
        }
    }
}

impl TaskSource for PermutedStream {
    fn n_tasks(&self) -> usize {
        self.n_tasks
    }

    fn n_classes(&self) -> usize {
        self.base.n_classes()
    }

    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn task(&self, index: usize) -> Result<Task> {
        if index >= self.n_tasks {
            return Err(Error::MissingData(format!("no task {index}")));
        }
        let rows = self.base.select(&self.sample_rows(index));
        let size = match self.spec.mode {
            PermutationMode::Input => self.base.dim(),
            PermutationMode::Label => self.base.n_classes(),
        };
        let perm = self.spec.permutation(index, size);
        Ok(Task {
            train: self.spec.apply(&rows, &perm)?,
            test: None,
            classes: (0..self.base.n_classes()).collect(),
        })
    }
}

/// Materializes every task of a permuted stream.
pub fn make_permuted_stream(
    base: &Dataset,
    spec: PermutationSpec,
    n_tasks: usize,
    samples_per_task: usize,
    batch_size: usize,
) -> Result<TaskStream> {
    let source = PermutedStream::new(base.clone(), spec, n_tasks, samples_per_task)?;
    let tasks = (0..n_tasks).map(|t| source.task(t)).collect::<Result<_>>()?;
    Ok(TaskStream {
        tasks,
        protocol: Protocol::Streaming,
        batch_size,
        epochs_per_task: 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool() -> Dataset {
        let x = Array2::from_shape_fn((30, 6), |(i, j)| (i * 6 + j) as f64);
        Dataset::new(x, (0..30).map(|i| i % 3).collect(), 3).unwrap()
    }

    #[test]
    fn identity_task_and_bijection() {
        let spec = PermutationSpec {
            mode: PermutationMode::Input,
            seed: 4,
        };
        assert_eq!(spec.permutation(0, 6), (0..6).collect::<Vec<_>>());
        let p = spec.permutation(3, 6);
        let mut sorted = p.clone();
        sorted.sort();
        assert_eq!(sorted, (0..6).collect::<Vec<_>>());
        let d = pool();
        let back = spec.apply(&spec.apply(&d, &p).unwrap(), &PermutationSpec::inverse(&p)).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn stream_shapes() {
        let spec = PermutationSpec {
            mode: PermutationMode::Label,
            seed: 9,
        };
        let s = make_permuted_stream(&pool(), spec, 4, 10, 5).unwrap();
        assert_eq!(s.tasks.len(), 4);
        assert!(s.tasks.iter().all(|t| t.train.len() == 10 && t.test.is_none()));
        // Oversampling falls back to drawing with replacement.
        let big = make_permuted_stream(&pool(), spec, 1, 50, 5).unwrap();
        assert_eq!(big.tasks[0].train.len(), 50);
    }
}
