use std::collections::VecDeque;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::netmodel::{NormalizedState, STATE_DIM};
use crate::nncore::{Checkpoint, Tensor};
use crate::seed::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: NormalizedState,
    pub a: f64,
    /// The raw episode reward; the baseline is subtracted at training time.
    pub r: f64,
    pub s_next: NormalizedState,
    pub terminal: bool,
}

/// Bounded FIFO of transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay buffer capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            items: VecDeque::with_capacity(capacity),
        })
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
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    /// Stores one episode's transitions, each carrying the episode reward.
    pub fn remember(&mut self, episode: impl IntoIterator<Item = Transition>, reward: f64) {
        for mut t in episode {
            t.r = reward;
            self.push(t);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// `n` distinct transitions, uniformly at random.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Result<Vec<&Transition>> {
        if n > self.items.len() || n == 0 {
            return Err(Error::Training(format!(
                "cannot sample {n} transitions from a buffer of {}",
                self.items.len()
            )));
        }
        Ok(index::sample(rng, self.items.len(), n)
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }

    pub(crate) fn save(&self, ckpt: &mut Checkpoint, prefix: &str) {
        let len = self.items.len();
        let mut s = Vec::with_capacity(len * STATE_DIM);
        let mut s_next = Vec::with_capacity(len * STATE_DIM);
        let mut scalars = Vec::with_capacity(len * 3);
        for t in &self.items {
            s.extend_from_slice(&t.s.0);
            s_next.extend_from_slice(&t.s_next.0);
            scalars.extend([t.a, t.r, if t.terminal { 1.0 } else { 0.0 }]);
        }
        ckpt.put_meta(&format!("{prefix}.capacity"), self.capacity);
        ckpt.put_meta(&format!("{prefix}.len"), len);
        ckpt.put_tensor(&format!("{prefix}.s"), Tensor::from_vec(&[len, STATE_DIM], s).unwrap());
        ckpt.put_tensor(
            &format!("{prefix}.s_next"),
            Tensor::from_vec(&[len, STATE_DIM], s_next).unwrap(),
        );
        ckpt.put_tensor(
            &format!("{prefix}.a_r_term"),
            Tensor::from_vec(&[len, 3], scalars).unwrap(),
        );
    }

    pub(crate) fn load(ckpt: &Checkpoint, prefix: &str) -> Result<Self> {
        let capacity: usize = ckpt.require_meta(&format!("{prefix}.capacity"))?;
        let len: usize = ckpt.require_meta(&format!("{prefix}.len"))?;
        let s = ckpt.tensor(&format!("{prefix}.s"))?.data();
        let s_next = ckpt.tensor(&format!("{prefix}.s_next"))?.data();
        let scalars = ckpt.tensor(&format!("{prefix}.a_r_term"))?.data();
        if s.len() != len * STATE_DIM || s_next.len() != len * STATE_DIM || scalars.len() != len * 3 {
            return Err(Error::Shape("replay buffer tensors disagree with its length".into()));
        }
        let mut buffer = Self::new(capacity)?;
        for i in 0..len {
            let state = |data: &[f64]| {
                let mut v = [0.0; STATE_DIM];
                v.copy_from_slice(&data[i * STATE_DIM..(i + 1) * STATE_DIM]);
                NormalizedState(v)
            };
            buffer.push(Transition {
                s: state(s),
                a: scalars[i * 3],
                r: scalars[i * 3 + 1],
                s_next: state(s_next),
                terminal: scalars[i * 3 + 2] != 0.0,
            });
        }
        Ok(buffer)
    }
}
