//! Binary indexed sum tree over non-negative weights: `O(log n)` point
//! updates and proportional sampling by prefix-sum descent.

#[derive(Debug, Clone)]
pub struct SumTree {
    leaves: Vec<f64>,
    // 1-based Fenwick array over a power-of-two capacity.
    tree: Vec<f64>,
    capacity: usize,
}

impl SumTree {
    pub fn new(weights: Vec<f64>) -> Self {
        let capacity = weights.len().max(1).next_power_of_two();
        let mut t = Self {
            leaves: weights,
            tree: vec![0.0; capacity + 1],
            capacity,
        };
        t.rebuild();
        t
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.leaves[i]
    }

    pub fn leaves(&self) -> &[f64] {
        &self.leaves
    }

    /// Recomputes every internal node from the leaves in `O(n)`.
    pub fn rebuild(&mut self) {
        self.tree.iter_mut().for_each(|v| *v = 0.0);
        for (i, &w) in self.leaves.iter().enumerate() {
            self.tree[i + 1] = w;
        }
        for i in 1..=self.capacity {
            let parent = i + (i & i.wrapping_neg());
            if parent <= self.capacity {
                self.tree[parent] += self.tree[i];
            }
        }
    }

    pub fn set(&mut self, i: usize, weight: f64) {
        debug_assert!(weight >= 0.0);
        let delta = weight - self.leaves[i];
        if delta == 0.0 {
            return;
        }
        self.leaves[i] = weight;
        let mut j = i + 1;
        while j <= self.capacity {
            self.tree[j] += delta;
            j += j & j.wrapping_neg();
        }
    }

    pub fn total(&self) -> f64 {
        self.tree[self.capacity]
    }

    pub fn prefix_sum(&self, end: usize) -> f64 {
        let mut j = end;
        let mut acc = 0.0;
        while j > 0 {
            acc += self.tree[j];
            j -= j & j.wrapping_neg();
        }
        acc
    }

    /// Index `i` with `prefix_sum(i) <= target < prefix_sum(i + 1)`. Returns
    /// `None` when rounding lands on a zero-weight leaf or past the end.
    pub fn find(&self, target: f64) -> Option<usize> {
        let mut pos = 0;
        let mut rem = target;
        let mut step = self.capacity;
        while step > 0 {
            let next = pos + step;
            if next <= self.capacity && self.tree[next] <= rem {
                pos = next;
                rem -= self.tree[next];
            }
            step >>= 1;
        }
        (pos < self.leaves.len() && self.leaves[pos] > 0.0).then_some(pos)
    }

    /// Largest relative gap between the incremental root and an exact sum.
    pub fn drift(&self) -> f64 {
        let exact: f64 = self.leaves.iter().sum();
        let scale = exact.abs().max(f64::MIN_POSITIVE);
        (self.total() - exact).abs() / scale
    }
}
