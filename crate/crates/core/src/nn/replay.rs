use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};

/// Fixed-capacity ring buffer; once full, each push evicts the oldest item.
#[derive(Debug, Clone)]
pub struct ReplayMemory<T> {
    capacity: usize,
    items: Vec<T>,
    next: usize,
}

impl<T> ReplayMemory<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::validation("replay capacity must be positive"));
        }
        Ok(ReplayMemory {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
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

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// `batch` distinct stored items, uniformly at random.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<&T>> {
        if batch > self.items.len() {
            return Err(Error::validation(format!(
                "cannot sample {batch} items from {} stored",
                self.items.len()
            )));
        }
        Ok(index::sample(rng, self.items.len(), batch)
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn evicts_oldest() {
        let mut mem = ReplayMemory::new(3).unwrap();
        for i in 0..5 {
            mem.push(i);
        }
        let mut held: Vec<i32> = mem.iter().copied().collect();
        held.sort();
        assert_eq!(held, vec![2, 3, 4]);
        assert!(ReplayMemory::<u8>::new(0).is_err());
    }

    proptest! {
        #[test]
        fn sampled_batches_are_distinct(cap in 1usize..50, extra in 0usize..80, seed in any::<u64>()) {
            let mut mem = ReplayMemory::new(cap).unwrap();
            for i in 0..cap + extra {
                mem.push(i);
            }
            prop_assert_eq!(mem.len(), cap);
            prop_assert!(mem.iter().all(|&i| i >= extra));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let batch = cap / 2 + 1;
            let mut got: Vec<usize> = mem.sample(batch, &mut rng).unwrap().into_iter().copied().collect();
            got.sort();
            got.dedup();
            prop_assert_eq!(got.len(), batch);
            prop_assert!(mem.sample(cap + 1, &mut rng).is_err());
        }
    }
}
