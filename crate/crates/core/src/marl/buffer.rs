use ndarray::{Array1, Array2};
use rand::Rng;

use crate::env::AGENT_COUNT;

/// One step for all agents. `actions` are the executed (shielded) actions,
/// agent-major: `[u0x, u0y, u1x, u1y]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: [f64; AGENT_COUNT],
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity FIFO ring of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        Self {
            capacity,
            items: Vec::new(),
            head: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// `i`-th oldest stored transition.
    pub fn get(&self, i: usize) -> Option<&Transition> {
        if i >= self.items.len() {
            return None;
        }
        Some(&self.items[(self.head + i) % self.items.len()])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        (0..self.len()).filter_map(|i| self.get(i))
    }

    /// Uniform sampling with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<usize> {
        assert!(!self.is_empty(), "cannot sample an empty buffer");
        (0..n).map(|_| rng.random_range(0..self.items.len())).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Batch {
        let picks: Vec<&Transition> = self
            .sample_indices(rng, n)
            .into_iter()
            .map(|i| &self.items[i])
            .collect();
        Batch::from_transitions(&picks)
    }
}

/// Column-stacked minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array2<f64>,
    pub next_states: Array2<f64>,
    pub done: Array1<f64>,
}

impl Batch {
    pub fn from_transitions(ts: &[&Transition]) -> Self {
        let n = ts.len();
        let sd = ts.first().map_or(0, |t| t.state.len());
        let ad = ts.first().map_or(0, |t| t.actions.len());
        let mut states = Array2::zeros((n, sd));
        let mut next_states = Array2::zeros((n, sd));
        let mut actions = Array2::zeros((n, ad));
        let mut rewards = Array2::zeros((n, AGENT_COUNT));
        let mut done = Array1::zeros(n);
        for (r, t) in ts.iter().enumerate() {
            states.row_mut(r).assign(&ndarray::ArrayView1::from(&t.state));
            next_states.row_mut(r).assign(&ndarray::ArrayView1::from(&t.next_state));
            actions.row_mut(r).assign(&ndarray::ArrayView1::from(&t.actions));
            rewards.row_mut(r).assign(&ndarray::ArrayView1::from(&t.rewards[..]));
            done[r] = if t.done { 1.0 } else { 0.0 };
        }
        Self {
            states,
            actions,
            rewards,
            next_states,
            done,
        }
    }

    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
