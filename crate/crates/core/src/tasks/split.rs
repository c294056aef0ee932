use rand::seq::SliceRandom;

use super::{Dataset, Protocol, Task, TaskStream};
use crate::rng::{stream, substream};
use crate::{Error, Result};

/// How classes are assigned to tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassOrder {
    /// Class 0 and 1 in the first task, and so on.
    Natural,
    /// A seeded shuffle of the class indices.
    Shuffled(u64),
}

/// Class-incremental split: consecutive groups of `classes_per_task` classes
/// (in the chosen order) form the tasks. Labels keep their global indices.
pub fn split_cil(
    train: &Dataset,
    test: &Dataset,
    classes_per_task: usize,
    order: ClassOrder,
    batch_size: usize,
    epochs_per_task: usize,
) -> Result<TaskStream> {
    let n_classes = train.n_classes();
    if classes_per_task == 0 || n_classes % classes_per_task != 0 {
        return Err(Error::InvalidSplit(format!(
            "{n_classes} classes cannot be split into tasks of {classes_per_task}"
        )));
    }
    if test.n_classes() != n_classes {
        return Err(Error::InvalidSplit(format!(
            "train has {n_classes} classes, test has {}",
            test.n_classes()
        )));
    }
    let mut classes: Vec<usize> = (0..n_classes).collect();
    if let ClassOrder::Shuffled(seed) = order {
        classes.shuffle(&mut substream(seed, &[stream::CLASS_ORDER]));
    }
    let tasks = classes
        .chunks(classes_per_task)
        .map(|group| Task {
            train: train.filter_classes(group),
            test: Some(test.filter_classes(group)),
            classes: group.to_vec(),
        })
        .collect();
    Ok(TaskStream {
        tasks,
        protocol: Protocol::ClassIncremental,
        batch_size,
        epochs_per_task,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn toy(n_classes: usize) -> Dataset {
        let labels: Vec<usize> = (0..n_classes * 3).map(|i| i % n_classes).collect();
        let x = Array2::from_shape_fn((labels.len(), 2), |(i, j)| (i * 2 + j) as f64);
        Dataset::new(x, labels, n_classes).unwrap()
    }

    #[test]
    fn partitions_classes() {
        let d = toy(10);
        let s = split_cil(&d, &d, 2, ClassOrder::Natural, 64, 1).unwrap();
        assert_eq!(s.tasks.len(), 5);
        let mut all = s.all_classes();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        for t in &s.tasks {
            assert!(t.train.labels().iter().all(|y| t.classes.contains(y)));
        }
        assert_eq!(s.tasks[1].classes, vec![2, 3]);
    }

    #[test]
    fn shuffled_order_is_seeded() {
        let d = toy(10);
        let a = split_cil(&d, &d, 2, ClassOrder::Shuffled(3), 64, 1).unwrap();
        let b = split_cil(&d, &d, 2, ClassOrder::Shuffled(3), 64, 1).unwrap();
        assert_eq!(a.all_classes(), b.all_classes());
    }

    #[test]
    fn rejects_uneven_split() {
        let d = toy(10);
        assert!(matches!(
            split_cil(&d, &d, 3, ClassOrder::Natural, 64, 1),
            Err(Error::InvalidSplit(_))
        ));
    }
}
