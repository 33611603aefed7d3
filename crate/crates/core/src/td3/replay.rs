//! Ring-buffer experience replay with uniform batch sampling.

use rand::Rng;

/// One stored interaction. Actions are kept continuous, exactly as the
/// policy emitted them; discretisation happens in the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity ring. Grows lazily up to capacity, then overwrites the
/// oldest entries.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer {
            capacity,
            data: Vec::new(),
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, transition: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(transition);
        } else {
            self.data[self.next] = transition;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, idx: usize) -> &Transition {
        &self.data[idx]
    }

    /// Uniform sample of distinct indices (no replacement within a batch).
    pub fn sample_indices(&self, batch: usize, rng: &mut impl Rng) -> Vec<usize> {
        assert!(batch <= self.len(), "batch {batch} exceeds buffer size {}", self.len());
        rand::seq::index::sample(rng, self.len(), batch).into_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tagged(tag: f64) -> Transition {
        Transition {
            obs: vec![tag],
            action: vec![0.5],
            reward: tag,
            next_obs: vec![tag],
            done: false,
        }
    }

    #[test]
    fn ring_evicts_oldest() {
        let capacity = 8;
        let extra = 3;
        let mut buf = ReplayBuffer::new(capacity);
        for i in 0..capacity + extra {
            buf.push(tagged(i as f64));
        }
        assert_eq!(buf.len(), capacity);
        let tags: Vec<u64> = (0..buf.len()).map(|i| buf.get(i).reward as u64).collect();
        for old in 0..extra as u64 {
            assert!(!tags.contains(&old), "transition {old} should be evicted");
        }
        for new in extra as u64..(capacity + extra) as u64 {
            assert!(tags.contains(&new), "transition {new} should be present");
        }
    }

    #[test]
    fn sampling_is_without_replacement() {
        let mut buf = ReplayBuffer::new(100);
        for i in 0..50 {
            buf.push(tagged(i as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let mut idx = buf.sample_indices(32, &mut rng);
            idx.sort_unstable();
            idx.dedup();
            assert_eq!(idx.len(), 32);
            assert!(idx.iter().all(|&i| i < 50));
        }
    }
}
