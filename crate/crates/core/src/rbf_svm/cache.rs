use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

/// Least-recently-used cache of kernel rows under a byte budget.
#[derive(Debug)]
pub struct KernelCache {
    rows: HashMap<usize, (Arc<[f64]>, u64)>,
    order: BTreeMap<u64, usize>,
    clock: u64,
    capacity: usize,
    hits: u64,
    misses: u64,
}

/// Hit/miss counters of a [`KernelCache`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub capacity_rows: usize,
}

impl KernelCache {
    /// Cache for rows of `row_len` f64 values. At least two rows are always
    /// kept, whatever the budget.
    pub fn new(budget_bytes: usize, row_len: usize) -> Self {
        let row_bytes = (row_len * std::mem::size_of::<f64>()).max(1);
        Self::with_capacity(budget_bytes / row_bytes)
    }

    pub fn with_capacity(rows: usize) -> Self {
        Self {
            rows: HashMap::new(),
            order: BTreeMap::new(),
            clock: 0,
            capacity: rows.max(2),
            hits: 0,
            misses: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.rows.contains_key(&index)
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits,
            misses: self.misses,
            capacity_rows: self.capacity,
        }
    }

    /// Row `index`, computing and inserting it on a miss.
    pub fn get_or_insert_with(&mut self, index: usize, compute: impl FnOnce() -> Vec<f64>) -> Arc<[f64]> {
        self.clock += 1;
        let now = self.clock;
        if let Some((row, stamp)) = self.rows.get_mut(&index) {
            self.hits += 1;
            self.order.remove(stamp);
            *stamp = now;
            self.order.insert(now, index);
            return Arc::clone(row);
        }
        self.misses += 1;
        if self.rows.len() >= self.capacity {
            if let Some((_, victim)) = self.order.pop_first() {
                self.rows.remove(&victim);
            }
        }
        let row: Arc<[f64]> = compute().into();
        self.rows.insert(index, (Arc::clone(&row), now));
        self.order.insert(now, index);
        row
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evicts_least_recently_used() {
        let mut c = KernelCache::with_capacity(2);
        c.get_or_insert_with(0, || vec![0.0]);
        c.get_or_insert_with(1, || vec![1.0]);
        c.get_or_insert_with(0, || unreachable!());
        c.get_or_insert_with(2, || vec![2.0]);
        assert!(c.contains(0));
        assert!(!c.contains(1));
        assert!(c.contains(2));
        assert_eq!(c.stats().hits, 1);
        assert_eq!(c.stats().misses, 3);
    }

    #[test]
    fn budget_sets_capacity() {
        assert_eq!(KernelCache::new(8 * 100 * 10, 100).stats().capacity_rows, 10);
        assert_eq!(KernelCache::new(0, 100).stats().capacity_rows, 2);
    }

    #[test]
    fn rows_survive_eviction_while_held() {
        let mut c = KernelCache::with_capacity(2);
        let r0 = c.get_or_insert_with(0, || vec![5.0]);
        c.get_or_insert_with(1, || vec![1.0]);
        c.get_or_insert_with(2, || vec![2.0]);
        assert!(!c.contains(0));
        assert_eq!(r0[0], 5.0);
    }
}
