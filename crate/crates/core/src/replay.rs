//! Fixed-capacity FIFO experience replay with uniform sampling.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::Transition;
use crate::seeding::stream_rng;

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    /// Slot the next push overwrites once the ring is full.
    next: usize,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("replay capacity must be positive"));
        }
        Ok(Self {
            capacity,
            storage: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
            rng: stream_rng(seed, 0x5ee1, 0),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.storage.len() < self.capacity { 0 } else { self.next };
        self.storage[split..].iter().chain(&self.storage[..split])
    }

    /// `n` storage slots drawn uniformly with replacement.
    pub fn sample_indices(&mut self, n: usize) -> Result<Vec<usize>> {
        if self.storage.len() < n || self.storage.is_empty() {
            return Err(Error::InsufficientSamples {
                have: self.storage.len(),
                need: n.max(1),
            });
        }
        let len = self.storage.len();
        Ok((0..n).map(|_| self.rng.gen_range(0..len)).collect())
    }

    pub fn sample(&mut self, n: usize) -> Result<Vec<&Transition>> {
        let idx = self.sample_indices(n)?;
        Ok(idx.into_iter().map(|i| &self.storage[i]).collect())
    }

    pub fn get(&self, slot: usize) -> Option<&Transition> {
        self.storage.get(slot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{ActionVec, StateVec};

    fn item(i: usize) -> Transition {
        Transition {
            s: StateVec(vec![i as f64]),
            a: ActionVec(vec![0.0]),
            r: i as f64,
            s_next: StateVec(vec![i as f64 + 1.0]),
            done: false,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut buf = ReplayBuffer::new(3, 0).unwrap();
        for i in 1..=4 {
            buf.push(item(i));
        }
        let held: Vec<f64> = buf.iter().map(|t| t.r).collect();
        assert_eq!(held, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn single_item_is_always_sampled() {
        let mut buf = ReplayBuffer::new(10, 1).unwrap();
        buf.push(item(7));
        for _ in 0..50 {
            assert_eq!(buf.sample(1).unwrap()[0].r, 7.0);
        }
    }

    #[test]
    fn size_is_bounded() {
        let mut buf = ReplayBuffer::new(1000, 2).unwrap();
        for i in 0..100_000 {
            buf.push(item(i));
            assert!(buf.len() <= 1000);
        }
        assert_eq!(buf.len(), 1000);
    }

    #[test]
    fn too_few_items_is_an_error() {
        let mut buf = ReplayBuffer::new(10, 3).unwrap();
        buf.push(item(0));
        assert!(matches!(
            buf.sample(2),
            Err(Error::InsufficientSamples { have: 1, need: 2 })
        ));
    }

    #[test]
    fn seeded_sampling_replays() {
        let fill = |seed| {
            let mut b = ReplayBuffer::new(50, seed).unwrap();
            (0..50).for_each(|i| b.push(item(i)));
            b
        };
        let (mut a, mut b) = (fill(4), fill(4));
        assert_eq!(a.sample_indices(32).unwrap(), b.sample_indices(32).unwrap());
    }

    #[test]
    fn full_batch_members_belong_to_buffer() {
        let mut buf = ReplayBuffer::new(20, 5).unwrap();
        (0..20).for_each(|i| buf.push(item(i)));
        for t in buf.sample(20).unwrap() {
            assert!((0.0..20.0).contains(&t.r));
        }
    }

    #[test]
    fn sampling_is_uniform() {
        let mut buf = ReplayBuffer::new(10, 6).unwrap();
        (0..10).for_each(|i| buf.push(item(i)));
        let draws = 1_000_000;
        let mut counts = [0usize; 10];
        for _ in 0..(draws / 10) {
            for i in buf.sample_indices(10).unwrap() {
                counts[i] += 1;
            }
        }
        for c in counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.1).abs() < 0.005, "frequency {freq}");
        }
    }
}
