//! Incremental adjacent-pair statistics shared by both merge-learning stages.
//!
//! Counting is overlapping: `[a, a, a]` contributes two occurrences of `(a, a)`.
//! Replacement is a single greedy left-to-right pass. Ties on the count break
//! towards the lexicographically smallest `(left, right)`.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

pub(crate) type Pair = (u32, u32);

/// Replaces every non-overlapping occurrence of `pair`, scanning left to right.
/// Returns whether anything changed.
pub(crate) fn merge_in_place(seq: &mut Vec<u32>, pair: Pair, new_id: u32) -> bool {
    if seq.len() < 2 {
        return false;
    }
    let mut write = 0;
    let mut read = 0;
    let mut changed = false;
    while read < seq.len() {
        if read + 1 < seq.len() && seq[read] == pair.0 && seq[read + 1] == pair.1 {
            seq[write] = new_id;
            read += 2;
            changed = true;
        } else {
            seq[write] = seq[read];
            read += 1;
        }
        write += 1;
    }
    seq.truncate(write);
    changed
}

#[derive(Debug, PartialEq, Eq)]
struct Candidate {
    count: u64,
    pair: Pair,
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| other.pair.cmp(&self.pair))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A weighted multiset of symbol sequences with live pair counts.
///
/// Only active sequences contribute to the counts. Pairs touching the
/// `excluded` symbol are never counted.
pub(crate) struct PairStats {
    seqs: Vec<Vec<u32>>,
    weights: Vec<u64>,
    active: Vec<bool>,
    excluded: Option<u32>,
    counts: HashMap<Pair, u64>,
    occurs_in: HashMap<Pair, BTreeSet<usize>>,
    heap: BinaryHeap<Candidate>,
    n_active: usize,
}

impl PairStats {
    pub(crate) fn new(
        seqs: Vec<Vec<u32>>,
        weights: Vec<u64>,
        active: Vec<bool>,
        excluded: Option<u32>,
    ) -> Self {
        debug_assert_eq!(seqs.len(), weights.len());
        debug_assert_eq!(seqs.len(), active.len());
        let n_active = active.iter().filter(|a| **a).count();
        let mut stats = Self {
            seqs,
            weights,
            active,
            excluded,
            counts: HashMap::new(),
            occurs_in: HashMap::new(),
            heap: BinaryHeap::new(),
            n_active,
        };
        for idx in 0..stats.seqs.len() {
            if stats.active[idx] {
                stats.add_seq(idx);
            }
        }
        let mut initial: Vec<_> = stats.counts.iter().map(|(p, c)| (*p, *c)).collect();
        initial.sort_unstable();
        stats.heap = initial
            .into_iter()
            .map(|(pair, count)| Candidate { count, pair })
            .collect();
        stats
    }

    pub(crate) fn n_active(&self) -> usize {
        self.n_active
    }

    pub(crate) fn is_active(&self, idx: usize) -> bool {
        self.active[idx]
    }

    pub(crate) fn seq(&self, idx: usize) -> &[u32] {
        &self.seqs[idx]
    }

    pub(crate) fn into_seqs(self) -> Vec<Vec<u32>> {
        self.seqs
    }

    fn countable(&self, pair: Pair) -> bool {
        match self.excluded {
            Some(x) => pair.0 != x && pair.1 != x,
            None => true,
        }
    }

    fn add_seq(&mut self, idx: usize) {
        let w = self.weights[idx];
        if w == 0 {
            return;
        }
        for i in 1..self.seqs[idx].len() {
            let pair = (self.seqs[idx][i - 1], self.seqs[idx][i]);
            if !self.countable(pair) {
                continue;
            }
            *self.counts.entry(pair).or_insert(0) += w;
            self.occurs_in.entry(pair).or_default().insert(idx);
        }
    }

    fn remove_seq(&mut self, idx: usize) {
        let w = self.weights[idx];
        if w == 0 {
            return;
        }
        for i in 1..self.seqs[idx].len() {
            let pair = (self.seqs[idx][i - 1], self.seqs[idx][i]);
            if !self.countable(pair) {
                continue;
            }
            if let Some(c) = self.counts.get_mut(&pair) {
                *c -= w;
                if *c == 0 {
                    self.counts.remove(&pair);
                }
            }
        }
    }

    /// Highest-count pair over the active sequences, or `None` when no
    /// countable pair remains.
    pub(crate) fn best_pair(&mut self) -> Option<(Pair, u64)> {
        while let Some(top) = self.heap.pop() {
            let current = self.counts.get(&top.pair).copied().unwrap_or(0);
            if current == top.count {
                // Keep it available until a merge actually consumes it.
                self.heap.push(Candidate {
                    count: current,
                    pair: top.pair,
                });
                return Some((top.pair, current));
            }
            if current > 0 {
                self.heap.push(Candidate {
                    count: current,
                    pair: top.pair,
                });
            }
        }
        None
    }

    /// Applies `pair -> new_id` to every active sequence containing it and
    /// returns the indices of the sequences that changed, ascending.
    pub(crate) fn apply_merge(&mut self, pair: Pair, new_id: u32) -> Vec<usize> {
        let candidates: Vec<usize> = self
            .occurs_in
            .remove(&pair)
            .map(|s| s.into_iter().collect())
            .unwrap_or_default();
        let mut changed = Vec::new();
        let mut touched: BTreeSet<Pair> = BTreeSet::new();
        for idx in candidates {
            if !self.active[idx] || !contains_pair(&self.seqs[idx], pair) {
                continue;
            }
            self.remove_seq(idx);
            merge_in_place(&mut self.seqs[idx], pair, new_id);
            self.add_seq(idx);
            for i in 1..self.seqs[idx].len() {
                touched.insert((self.seqs[idx][i - 1], self.seqs[idx][i]));
            }
            changed.push(idx);
        }
        for p in touched {
            if let Some(&count) = self.counts.get(&p) {
                self.heap.push(Candidate { count, pair: p });
            }
        }
        changed
    }

    /// Removes a sequence from counting; later merges no longer touch it.
    pub(crate) fn deactivate(&mut self, idx: usize) {
        if self.active[idx] {
            self.remove_seq(idx);
            self.active[idx] = false;
            self.n_active -= 1;
        }
    }
}

fn contains_pair(seq: &[u32], pair: Pair) -> bool {
    seq.windows(2).any(|w| w[0] == pair.0 && w[1] == pair.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_left_to_right() {
        let mut s = vec![1, 1, 1];
        assert!(merge_in_place(&mut s, (1, 1), 9));
        assert_eq!(s, vec![9, 1]);

        let mut s = vec![1, 1, 1, 1];
        merge_in_place(&mut s, (1, 1), 9);
        assert_eq!(s, vec![9, 9]);

        let mut s = vec![2];
        assert!(!merge_in_place(&mut s, (1, 1), 9));
    }

    #[test]
    fn overlapping_counts_and_tie_break() {
        let mut stats = PairStats::new(vec![vec![97, 97, 97, 97]], vec![1], vec![true], None);
        assert_eq!(stats.best_pair(), Some(((97, 97), 3)));

        let mut stats = PairStats::new(
            vec![vec![97, 98, 256], vec![98, 97, 256]],
            vec![1, 1],
            vec![true, true],
            Some(256),
        );
        assert_eq!(stats.best_pair(), Some(((97, 98), 1)));
    }

    #[test]
    fn excluded_symbol_is_never_a_candidate() {
        let mut stats = PairStats::new(vec![vec![97, 256]], vec![1], vec![true], Some(256));
        assert_eq!(stats.best_pair(), None);
    }

    #[test]
    fn counts_track_merges_and_deactivation() {
        let mut stats = PairStats::new(
            vec![vec![1, 2, 1, 2], vec![1, 2, 3]],
            vec![1, 5],
            vec![true, true],
            None,
        );
        assert_eq!(stats.best_pair(), Some(((1, 2), 7)));
        assert_eq!(stats.apply_merge((1, 2), 10), vec![0, 1]);
        assert_eq!(stats.seq(0), &[10, 10]);
        assert_eq!(stats.seq(1), &[10, 3]);
        assert_eq!(stats.best_pair(), Some(((10, 3), 5)));
        stats.deactivate(1);
        assert_eq!(stats.best_pair(), Some(((10, 10), 1)));
        assert_eq!(stats.n_active(), 1);
    }
}
