use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::{ClassId, Dataset, Sample};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// `B<init>-<steps>`: an initial task of `init` classes followed by
/// `steps` equally sized incremental tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Protocol {
    pub init: usize,
    pub steps: usize,
}

impl Protocol {
    pub fn new(init: usize, steps: usize) -> Self {
        Self { init, steps }
    }

    pub fn task_sizes(&self, n_classes: usize) -> Result<Vec<usize>> {
        if self.init == 0 || self.steps == 0 {
            return Err(Error::Config(format!(
                "protocol {self} needs B >= 1 and at least one step"
            )));
        }
        if self.init >= n_classes {
            return Err(Error::Protocol {
                init: self.init,
                steps: self.steps,
                classes: n_classes,
                remaining: n_classes.saturating_sub(self.init),
            });
        }
        let remaining = n_classes - self.init;
        if remaining % self.steps != 0 {
            return Err(Error::Protocol {
                init: self.init,
                steps: self.steps,
                classes: n_classes,
                remaining,
            });
        }
        let per_step = remaining / self.steps;
        Ok(std::iter::once(self.init)
            .chain(std::iter::repeat_n(per_step, self.steps))
            .collect())
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "B{}-{}", self.init, self.steps)
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("protocol must look like B<init>-<steps>, got '{s}'"));
        let rest = s.trim().strip_prefix(['B', 'b']).ok_or_else(bad)?;
        let (init, steps) = rest.split_once('-').ok_or_else(bad)?;
        Ok(Self {
            init: init.parse().map_err(|_| bad())?,
            steps: steps.parse().map_err(|_| bad())?,
        })
    }
}

impl TryFrom<String> for Protocol {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Protocol> for String {
    fn from(p: Protocol) -> String {
        p.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: usize,
    /// Classes of the task; a class's position is its local index.
    pub classes: Vec<ClassId>,
    pub train: Vec<usize>,
    pub heldout: Vec<usize>,
}

impl Task {
    pub fn local_index(&self, class: ClassId) -> Option<usize> {
        self.classes.iter().position(|&c| c == class)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskStream {
    pub protocol: Protocol,
    pub seed: u64,
    pub tasks: Vec<Task>,
}

impl TaskStream {
    pub fn sizes(&self) -> Vec<usize> {
        self.tasks.iter().map(|t| t.classes.len()).collect()
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Classes of tasks `0..=k`, in task order.
    pub fn seen_classes(&self, k: usize) -> Vec<ClassId> {
        self.tasks[..=k].iter().flat_map(|t| t.classes.iter().copied()).collect()
    }
}

/// Shuffles the class ids with `seed` and cuts them into the protocol's tasks.
pub fn split_tasks(dataset: &Dataset, init: usize, steps: usize, seed: u64) -> Result<TaskStream> {
    let protocol = Protocol::new(init, steps);
    let sizes = protocol.task_sizes(dataset.n_classes())?;
    let mut order: Vec<ClassId> = (0..dataset.n_classes()).collect();
    order.shuffle(&mut stream_rng(seed, "class-order", 0));

    let mut task_of = vec![0usize; dataset.n_classes()];
    let mut tasks = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for (id, &n) in sizes.iter().enumerate() {
        let classes = order[start..start + n].to_vec();
        for &c in &classes {
            task_of[c] = id;
        }
        tasks.push(Task {
            id,
            classes,
            train: Vec::new(),
            heldout: Vec::new(),
        });
        start += n;
    }
    for &i in dataset.train_indices() {
        tasks[task_of[dataset.sample(i).y]].train.push(i);
    }
    for &i in dataset.heldout_indices() {
        tasks[task_of[dataset.sample(i).y]].heldout.push(i);
    }
    Ok(TaskStream {
        protocol,
        seed,
        tasks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskPhase {
    Pending,
    Open,
    Closed,
}

/// Training data of one task, owned while the task is being trained.
#[derive(Debug)]
pub struct TrainingWindow {
    pub task: Task,
    pub samples: Vec<Sample>,
}

/// Hands out each task's training data exactly once, in order, and refuses
/// any later read: once a task is closed its data is gone. Held-out data
/// stays readable for evaluation.
#[derive(Debug)]
pub struct StreamSession<'a> {
    dataset: &'a Dataset,
    stream: &'a TaskStream,
    phases: Vec<TaskPhase>,
}

impl<'a> StreamSession<'a> {
    pub fn new(dataset: &'a Dataset, stream: &'a TaskStream) -> Self {
        Self {
            dataset,
            stream,
            phases: vec![TaskPhase::Pending; stream.len()],
        }
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn stream(&self) -> &'a TaskStream {
        self.stream
    }

    pub fn phases(&self) -> &[TaskPhase] {
        &self.phases
    }

    pub fn open_task(&mut self, t: usize) -> Result<TrainingWindow> {
        match self.phases.get(t) {
            None => return Err(Error::State(format!("no task {t} in stream"))),
            Some(TaskPhase::Closed) => {
                return Err(Error::ExemplarFree(format!(
                    "training data of task {t} was released and cannot be read again"
                )))
            }
            Some(TaskPhase::Open) => return Err(Error::State(format!("task {t} is already open"))),
            Some(TaskPhase::Pending) => {}
        }
        if let Some(prev) = self.phases[..t].iter().position(|p| *p != TaskPhase::Closed) {
            return Err(Error::State(format!(
                "task {t} opened before task {prev} was closed"
            )));
        }
        self.phases[t] = TaskPhase::Open;
        let task = self.stream.tasks[t].clone();
        let samples = task.train.iter().map(|&i| self.dataset.sample(i).clone()).collect();
        Ok(TrainingWindow { task, samples })
    }

    /// Ends a task's training window, dropping its data.
    pub fn close_task(&mut self, window: TrainingWindow) {
        self.phases[window.task.id] = TaskPhase::Closed;
    }

    pub fn heldout(&self, t: usize) -> Vec<&'a Sample> {
        self.stream.tasks[t]
            .heldout
            .iter()
            .map(|&i| self.dataset.sample(i))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};

    #[test]
    fn task_size_profiles() {
        assert_eq!(
            Protocol::new(100, 10).task_sizes(200).unwrap(),
            [vec![100], vec![10; 10]].concat()
        );
        assert_eq!(Protocol::new(50, 5).task_sizes(100).unwrap(), vec![50, 10, 10, 10, 10, 10]);
        assert_eq!(
            Protocol::new(50, 25).task_sizes(200).unwrap(),
            [vec![50], vec![6; 25]].concat()
        );
        match Protocol::new(4, 3).task_sizes(8) {
            Err(e @ Error::Protocol { .. }) => {
                let msg = e.to_string();
                assert!(msg.contains("B=4") && msg.contains("K=8") && msg.contains('3'));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn protocol_parse() {
        assert_eq!("B4-2".parse::<Protocol>().unwrap(), Protocol::new(4, 2));
        assert_eq!(Protocol::new(100, 10).to_string(), "B100-10");
        assert!("4-2".parse::<Protocol>().is_err());
        assert!("B4".parse::<Protocol>().is_err());
    }

    fn dataset() -> Dataset {
        generate_synthetic(&SyntheticSpec {
            samples_per_class: 10,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn split_is_a_disjoint_cover() {
        let ds = dataset();
        let s = split_tasks(&ds, 4, 2, 3).unwrap();
        assert_eq!(s.sizes(), vec![4, 2, 2]);
        let mut all: Vec<ClassId> = s.tasks.iter().flat_map(|t| t.classes.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..8).collect::<Vec<_>>());
        for t in &s.tasks {
            for &i in t.train.iter().chain(&t.heldout) {
                assert!(t.classes.contains(&ds.sample(i).y));
            }
        }
        assert_eq!(s, split_tasks(&ds, 4, 2, 3).unwrap());
        let other = (0..20u64)
            .map(|seed| split_tasks(&ds, 4, 2, seed).unwrap())
            .filter(|o| o.tasks[0].classes != s.tasks[0].classes)
            .count();
        assert!(other > 0);
    }

    #[test]
    fn session_releases_data() {
        let ds = dataset();
        let s = split_tasks(&ds, 4, 2, 0).unwrap();
        let mut session = StreamSession::new(&ds, &s);
        assert!(matches!(session.open_task(1), Err(Error::State(_))));
        let w = session.open_task(0).unwrap();
        assert_eq!(w.samples.len(), s.tasks[0].train.len());
        session.close_task(w);
        assert!(matches!(session.open_task(0), Err(Error::ExemplarFree(_))));
        assert_eq!(session.heldout(0).len(), s.tasks[0].heldout.len());
        let w = session.open_task(1).unwrap();
        session.close_task(w);
        assert_eq!(session.phases(), &[TaskPhase::Closed, TaskPhase::Closed, TaskPhase::Pending]);
    }
}
