use std::collections::VecDeque;

use isac_env::Observation;
use rand::seq::index;
use rand::Rng;

/// One environment step as seen by the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    /// Squashed action in `[−1, 1]`, before power projection.
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Observation,
    /// Whether the value of `next_obs` must not be bootstrapped.
    pub done: bool,
}

/// Fixed-capacity FIFO experience store.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    items: VecDeque<Transition>,
    inserted: u64,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        ReplayMemory { capacity, items: VecDeque::with_capacity(capacity.min(1 << 16)), inserted: 0 }
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

    /// Transitions ever inserted, including evicted ones.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    /// Appends, evicting the oldest transition when full.
    pub fn push(&mut self, t: Transition) {
        debug_assert!(t.action.iter().all(|a| (-1.0..=1.0).contains(a)), "action outside [-1, 1]");
        debug_assert!(t.reward.is_finite(), "non-finite reward");
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
        self.inserted += 1;
    }

    /// Oldest first.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = &Transition> {
        self.items.iter()
    }

    /// `batch` distinct transitions drawn uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<&Transition> {
        assert!(batch <= self.items.len(), "batch larger than memory");
        index::sample(rng, self.items.len(), batch).into_iter().map(|i| &self.items[i]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sentinel(id: f64) -> Transition {
        let obs = Observation { features: vec![id] };
        Transition { obs: obs.clone(), action: vec![0.0], reward: id, next_obs: obs, done: false }
    }

    #[test]
    fn evicts_oldest_first() {
        let mut m = ReplayMemory::new(3);
        for i in 0..5 {
            m.push(sentinel(i as f64));
            assert!(m.len() <= 3);
        }
        let kept: Vec<f64> = m.iter().map(|t| t.reward).collect();
        assert_eq!(kept, vec![2.0, 3.0, 4.0]);
        assert_eq!(m.inserted(), 5);
    }

    #[test]
    fn samples_without_replacement() {
        let mut m = ReplayMemory::new(50);
        for i in 0..50 {
            m.push(sentinel(i as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let mut ids: Vec<i64> = m.sample(50, &mut rng).iter().map(|t| t.reward as i64).collect();
            ids.sort();
            assert_eq!(ids, (0..50).collect::<Vec<_>>());
        }
    }
}
