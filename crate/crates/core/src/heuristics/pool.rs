use std::io::{BufRead, Write};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{HeuristicsError, Result, SolverTag};
use crate::portfolio::Portfolio;
use crate::scoring::compare_scores;

/// What a pool's scores measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Final-form CQNS over a universe.
    Cqns,
    /// Energy of a QUBO.
    QuboEnergy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub selection: Portfolio,
    pub score: f64,
    pub source: SolverTag,
    /// Evaluation index within the producing solver's run.
    pub timestamp: u64,
}

impl PoolEntry {
    pub fn k(&self) -> usize {
        self.selection.cardinality()
    }

    fn rank_key(&self, other: &Self) -> std::cmp::Ordering {
        compare_scores(self.score, other.score).then_with(|| self.selection.cmp(&other.selection))
    }

    fn seen_before(&self, other: &Self) -> bool {
        (self.timestamp, self.source) < (other.timestamp, other.source)
    }
}

/// Deduplicated archive of candidate selections, ascending by score.
///
/// For a duplicate selection the entry seen first (lowest timestamp, then
/// solver tag order) wins. Ranking and dedup are both order independent, so
/// merging pools in any order or grouping gives the same result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionPool {
    n: usize,
    objective: Objective,
    capacity: Option<usize>,
    entries: Vec<PoolEntry>,
}

#[derive(Serialize, Deserialize)]
struct JsonLine {
    selection: String,
    score: f64,
    source: SolverTag,
    k: usize,
}

impl SolutionPool {
    pub fn new(n: usize, objective: Objective) -> Self {
        Self { n, objective, capacity: None, entries: Vec::new() }
    }

    pub fn with_capacity(n: usize, objective: Objective, capacity: usize) -> Self {
        Self { n, objective, capacity: Some(capacity), entries: Vec::new() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn best(&self) -> Option<&PoolEntry> {
        self.entries.first()
    }

    pub fn best_score(&self) -> Option<f64> {
        self.best().map(|e| e.score)
    }

    pub fn contains(&self, selection: &Portfolio) -> bool {
        self.entries.iter().any(|e| &e.selection == selection)
    }

    /// Unconditional insert with dedup. Returns whether the pool changed.
    pub fn insert(&mut self, entry: PoolEntry) -> bool {
        assert_eq!(entry.selection.len(), self.n, "selection length does not match pool");
        if let Some(pos) = self.entries.iter().position(|e| e.selection == entry.selection) {
            if entry.seen_before(&self.entries[pos]) {
                self.entries[pos] = entry;
                self.entries.sort_by(PoolEntry::rank_key);
                return true;
            }
            return false;
        }
        let pos = self.entries.partition_point(|e| e.rank_key(&entry).is_lt());
        self.entries.insert(pos, entry);
        if let Some(cap) = self.capacity {
            if self.entries.len() > cap {
                let dropped = self.entries.len() - 1 == pos;
                self.entries.truncate(cap);
                return !dropped;
            }
        }
        true
    }

    /// Inserts only if `score` beats the current best (or the pool is empty).
    pub fn offer(&mut self, selection: &Portfolio, score: f64, source: SolverTag, timestamp: u64) -> bool {
        if self.best_score().is_some_and(|b| compare_scores(score, b).is_ge()) {
            return false;
        }
        self.insert(PoolEntry { selection: selection.clone(), score, source, timestamp })
    }

    /// Entries whose selection has exactly `k` assets.
    pub fn with_cardinality(&self, k: usize) -> impl Iterator<Item = &PoolEntry> {
        self.entries.iter().filter(move |e| e.k() == k)
    }

    /// One JSON object per line: `{"selection":"<hex>","score":..,"source":"..","k":..}`.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.entries {
            let line = JsonLine { selection: e.selection.to_hex(), score: e.score, source: e.source, k: e.k() };
            serde_json::to_writer(&mut out, &line)?;
            writeln!(out)?;
        }
        out.flush()
    }

    /// Reads lines written by [`Self::write_jsonl`]. Timestamps are assigned
    /// from line order.
    pub fn read_jsonl<R: BufRead>(input: R, n: usize, objective: Objective) -> Result<Self> {
        let mut pool = Self::new(n, objective);
        for (no, line) in input.lines().enumerate() {
            let err = |reason: String| HeuristicsError::PoolParse { line: no + 1, reason };
            let line = line.map_err(|e| err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: JsonLine = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
            let selection = Portfolio::from_hex(&raw.selection, n).map_err(|e| err(e.to_string()))?;
            if selection.cardinality() != raw.k {
                return Err(err(format!("k = {} but selection holds {}", raw.k, selection.cardinality())));
            }
            pool.insert(PoolEntry { selection, score: raw.score, source: raw.source, timestamp: no as u64 });
        }
        Ok(pool)
    }
}

/// Union of pools, deduplicated by selection and sorted ascending by score.
pub fn pool_merge(pools: &[SolutionPool]) -> Result<SolutionPool> {
    let Some(first) = pools.first() else {
        return Err(HeuristicsError::UniverseMismatch("no pools to merge".into()));
    };
    for p in pools {
        if p.n != first.n || p.objective != first.objective {
            return Err(HeuristicsError::UniverseMismatch(format!(
                "pool over {} assets ({:?}) vs {} assets ({:?})",
                p.n, p.objective, first.n, first.objective
            )));
        }
    }
    let capacity = if pools.iter().all(|p| p.capacity == first.capacity) { first.capacity } else { None };
    let mut out = SolutionPool { n: first.n, objective: first.objective, capacity, entries: Vec::new() };
    for p in pools {
        for e in &p.entries {
            out.insert(e.clone());
        }
    }
    Ok(out)
}

/// A pool that several solver threads can merge into.
#[derive(Debug)]
pub struct SharedPool {
    inner: Mutex<SolutionPool>,
}

impl SharedPool {
    pub fn new(n: usize, objective: Objective) -> Self {
        Self { inner: Mutex::new(SolutionPool::new(n, objective)) }
    }

    pub fn merge_in(&self, pool: &SolutionPool) -> Result<()> {
        let mut guard = self.inner.lock().expect("pool lock poisoned");
        *guard = pool_merge(&[guard.clone(), pool.clone()])?;
        Ok(())
    }

    pub fn snapshot(&self) -> SolutionPool {
        self.inner.lock().expect("pool lock poisoned").clone()
    }

    pub fn into_inner(self) -> SolutionPool {
        self.inner.into_inner().expect("pool lock poisoned")
    }
}
