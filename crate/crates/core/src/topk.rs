//! Bounded top-k accumulator with deterministic tie-breaking.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapItem {
    score: f64,
    id: u32,
}

impl Eq for HeapItem {}

// Max-heap keyed so the *worst* candidate is on top: lower score first,
// then larger id (equal scores prefer the smaller id).
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then_with(|| self.id.cmp(&other.id))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Keeps the k highest-scoring (score, id) pairs seen so far.
pub struct TopK {
    k: usize,
    heap: BinaryHeap<HeapItem>,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        TopK {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    pub fn push(&mut self, score: f64, id: u32) {
        if self.k == 0 {
            return;
        }
        let item = HeapItem { score, id };
        if self.heap.len() < self.k {
            self.heap.push(item);
        } else if let Some(worst) = self.heap.peek() {
            // Replace the current worst if the new item beats it.
            let better = match score.total_cmp(&worst.score) {
                Ordering::Greater => true,
                Ordering::Equal => id < worst.id,
                Ordering::Less => false,
            };
            if better {
                self.heap.pop();
                self.heap.push(item);
            }
        }
    }

    /// Results ordered by score descending, ties by smaller id.
    pub fn into_sorted(self) -> Vec<(u32, f64)> {
        let mut out: Vec<(u32, f64)> = self.heap.into_iter().map(|it| (it.id, it.score)).collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_best_k_with_ties_by_id() {
        let mut t = TopK::new(3);
        for (score, id) in [(1.0, 5), (2.0, 1), (2.0, 0), (0.5, 2), (2.0, 9)] {
            t.push(score, id);
        }
        assert_eq!(t.into_sorted(), vec![(0, 2.0), (1, 2.0), (9, 2.0)]);
    }

    #[test]
    fn fewer_items_than_k() {
        let mut t = TopK::new(10);
        t.push(1.0, 1);
        t.push(3.0, 0);
        assert_eq!(t.into_sorted(), vec![(0, 3.0), (1, 1.0)]);
    }

    #[test]
    fn matches_full_sort_on_random_input() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.gen_range(1..200);
            let k = rng.gen_range(1..=n);
            // Coarse scores force plenty of ties.
            let items: Vec<(u32, f64)> = (0..n as u32)
                .map(|id| (id, f64::from(rng.gen_range(-3..3))))
                .collect();
            let mut t = TopK::new(k);
            for (id, s) in &items {
                t.push(*s, *id);
            }
            let mut want = items.clone();
            want.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            want.truncate(k);
            assert_eq!(t.into_sorted(), want);
        }
    }
}
