use super::TracePoint;
use crate::market_data::Universe;
use crate::portfolio::Portfolio;
use crate::scoring::{
    cqns_from_moments, portfolio_mean, portfolio_variance, search_score, selected_cov_sum, sharpe_from_moments,
    CqnsPower,
};

/// Scores selections of one universe under one power.
#[derive(Debug, Clone, Copy)]
pub struct Scorer<'a> {
    pub universe: &'a Universe,
    pub power: CqnsPower,
}

impl<'a> Scorer<'a> {
    pub fn new(universe: &'a Universe, power: CqnsPower) -> Self {
        Self { universe, power }
    }

    /// `(variance, mean)` of a non-empty selection.
    pub fn moments(&self, p: &Portfolio) -> (f64, f64) {
        let k = p.cardinality() as f64;
        let mu = self.universe.mu();
        (selected_cov_sum(self.universe, p) / (k * k), p.indices().map(|i| mu[i]).sum::<f64>() / k)
    }

    /// Total search objective; equals the final CQNS wherever defined.
    pub fn search(&self, p: &Portfolio) -> f64 {
        let (v, m) = self.moments(p);
        search_score(v, m, self.power)
    }

    /// Final-form CQNS through the scoring module, or `None` where undefined.
    pub fn exact(&self, p: &Portfolio) -> Option<f64> {
        let v = portfolio_variance(self.universe, p).ok()?;
        let m = portfolio_mean(self.universe, p).ok()?;
        cqns_from_moments(v, m, self.power).ok()
    }

    pub fn trace_point(&self, sequence: u64, variance: f64, mean: f64, accepted: bool) -> TracePoint {
        TracePoint {
            sequence,
            cqns: cqns_from_moments(variance, mean, self.power).ok(),
            sharpe: sharpe_from_moments(variance, mean, 0.0).ok(),
            accepted,
        }
    }
}

/// Receives single-bit flips from a QUBO solver so that a CQNS trace can be
/// kept without rescoring from scratch.
pub trait FlipObserver {
    /// Start over from selection `x`.
    fn reset(&mut self, x: &Portfolio);
    /// Bit `i` was flipped; `selected` is its new value.
    fn flip(&mut self, i: usize, selected: bool);
    /// `(cqns, sharpe)` of the current selection.
    fn observe(&self) -> (Option<f64>, Option<f64>);
}

/// Observer that records nothing.
pub struct NoObserver;

impl FlipObserver for NoObserver {
    fn reset(&mut self, _: &Portfolio) {}
    fn flip(&mut self, _: usize, _: bool) {}
    fn observe(&self) -> (Option<f64>, Option<f64>) {
        (None, None)
    }
}

/// Tracks `sum cov_ij`, `sum mu_i` and `|x|` incrementally, O(N) per flip.
pub struct CqnsFlipObserver<'a> {
    scorer: Scorer<'a>,
    row_sums: Vec<f64>,
    cov_sum: f64,
    mu_sum: f64,
    k: usize,
}

impl<'a> CqnsFlipObserver<'a> {
    pub fn new(scorer: Scorer<'a>) -> Self {
        let n = scorer.universe.n();
        Self { scorer, row_sums: vec![0.0; n], cov_sum: 0.0, mu_sum: 0.0, k: 0 }
    }
}

impl FlipObserver for CqnsFlipObserver<'_> {
    fn reset(&mut self, x: &Portfolio) {
        let u = self.scorer.universe;
        let cov = u.cov();
        let idx: Vec<usize> = x.indices().collect();
        for (i, r) in self.row_sums.iter_mut().enumerate() {
            let row = cov.row(i);
            *r = idx.iter().map(|&j| row[j]).sum();
        }
        self.cov_sum = idx.iter().map(|&i| self.row_sums[i]).sum();
        self.mu_sum = idx.iter().map(|&i| u.mu()[i]).sum();
        self.k = idx.len();
    }

    fn flip(&mut self, i: usize, selected: bool) {
        let u = self.scorer.universe;
        let cov = u.cov();
        let sign = if selected { 1.0 } else { -1.0 };
        // sum over the new set = old + sign * (2 r_i - cov_ii) for removal, or
        // old + 2 r_i + cov_ii for insertion, with r_i taken before the flip.
        self.cov_sum +=
            if selected { 2.0 * self.row_sums[i] + cov[(i, i)] } else { -(2.0 * self.row_sums[i] - cov[(i, i)]) };
        for (r, c) in self.row_sums.iter_mut().zip(cov.row(i)) {
            *r += sign * c;
        }
        self.mu_sum += sign * u.mu()[i];
        if selected {
            self.k += 1;
        } else {
            self.k -= 1;
        }
    }

    fn observe(&self) -> (Option<f64>, Option<f64>) {
        if self.k == 0 {
            return (None, None);
        }
        let k = self.k as f64;
        let p = self.scorer.trace_point(0, self.cov_sum / (k * k), self.mu_sum / k, true);
        (p.cqns, p.sharpe)
    }
}
