//! QUBO compilation of the legacy CQNS objective, rescaling, conversion to
//! Ising form and energy evaluation.
//!
//! A [`Qubo`] is `x'Ax + B.x + K1` over `x in {0,1}^N` with `A` stored as a
//! full symmetric matrix (so an off-diagonal pair contributes
//! `2 A_ij x_i x_j`). An [`IsingModel`] is `z'Jz + C.z + K2` over
//! `z in {-1,1}^N` with a zero diagonal. The two are related by
//! `z = 2x - 1`, `J = A/4`, `C = (B + 4 J 1)/2`.

mod io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::Universe;
use crate::matrix::DenseMatrix;
use crate::portfolio::Portfolio;
use crate::scoring::{real_pow, CqnsPower};

pub use io::{export_qubo, import_qubo, read_qubo, write_qubo};

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum QuboError {
    #[error("(mu_{asset} / k)^{power} is complex for mu_{asset} = {mu:e}")]
    ComplexPowerTerm { asset: usize, mu: f64, power: f64 },
    #[error("target size {k} is outside 1..={n}")]
    InvalidTargetK { k: usize, n: usize },
    #[error("QUBO has no nonzero coefficient")]
    AllZeroQubo,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("entry {index} = {value} is not a valid {domain} value")]
    InvalidEntry { index: usize, value: f64, domain: &'static str },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("QUBO file line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

impl QuboError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::ComplexPowerTerm { .. } => "ComplexPowerTerm",
            Self::InvalidTargetK { .. } => "InvalidTargetK",
            Self::AllZeroQubo => "AllZeroQubo",
            Self::DimensionMismatch(_) => "DimensionMismatch",
            Self::InvalidEntry { .. } => "InvalidEntry",
            Self::InvalidModel(_) => "InvalidModel",
            Self::Io { .. } => "IoError",
            Self::Parse { .. } => "ParseError",
        }
    }
}

pub type Result<T, E = QuboError> = std::result::Result<T, E>;

fn validate_quadratic(m: &DenseMatrix, v: &[f64], what: &str) -> Result<()> {
    if !m.is_square() || m.rows() != v.len() {
        return Err(QuboError::DimensionMismatch(format!(
            "{what}: {}x{} matrix with length-{} vector",
            m.rows(),
            m.cols(),
            v.len()
        )));
    }
    if !m.all_finite() || v.iter().any(|x| !x.is_finite()) {
        return Err(QuboError::InvalidModel(format!("{what}: non-finite coefficient")));
    }
    let asym = m.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(QuboError::InvalidModel(format!("{what}: matrix asymmetry {asym:e}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Qubo {
    a: DenseMatrix,
    b: Vec<f64>,
    k1: f64,
}

impl Qubo {
    pub fn new(a: DenseMatrix, b: Vec<f64>, k1: f64) -> Result<Self> {
        validate_quadratic(&a, &b, "QUBO")?;
        if !k1.is_finite() {
            return Err(QuboError::InvalidModel("QUBO: non-finite constant".into()));
        }
        Ok(Self { a, b, k1 })
    }

    pub fn n(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    /// Largest `|A_ij|` or `|B_i|`.
    pub fn max_abs_coefficient(&self) -> f64 {
        self.b.iter().fold(self.a.max_abs(), |m, v| m.max(v.abs()))
    }

    /// Energy of a 0/1 vector given as a selection.
    pub fn energy_of(&self, x: &Portfolio) -> f64 {
        debug_assert_eq!(x.len(), self.n());
        let idx: Vec<usize> = x.indices().collect();
        let quad: f64 = idx
            .iter()
            .map(|&i| {
                let row = self.a.row(i);
                idx.iter().map(|&j| row[j]).sum::<f64>()
            })
            .sum();
        quad + idx.iter().map(|&i| self.b[i]).sum::<f64>() + self.k1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsingModel {
    j: DenseMatrix,
    c: Vec<f64>,
    k2: f64,
}

impl IsingModel {
    /// Any diagonal in `j` is folded into the constant (`z_i^2 = 1`).
    pub fn new(mut j: DenseMatrix, c: Vec<f64>, mut k2: f64) -> Result<Self> {
        validate_quadratic(&j, &c, "Ising")?;
        if !k2.is_finite() {
            return Err(QuboError::InvalidModel("Ising: non-finite constant".into()));
        }
        for i in 0..c.len() {
            k2 += j[(i, i)];
            j[(i, i)] = 0.0;
        }
        Ok(Self { j, c, k2 })
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn j(&self) -> &DenseMatrix {
        &self.j
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn k2(&self) -> f64 {
        self.k2
    }

    /// `z'Jz + C.z` without the constant, for callers that already checked `z`.
    pub(crate) fn energy_unchecked(&self, z: &[f64]) -> f64 {
        self.j.quadratic_form(z) + self.c.iter().zip(z).map(|(c, z)| c * z).sum::<f64>() + self.k2
    }
}

/// How to compile a CQNS QUBO for one portfolio size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuboBuildSpec {
    pub target_k: usize,
    pub power: CqnsPower,
    /// `None` selects [`default_penalty`].
    pub penalty_lambda: Option<f64>,
    pub scale_range: f64,
}

impl QuboBuildSpec {
    pub fn new(target_k: usize, power: CqnsPower) -> Self {
        Self { target_k, power, penalty_lambda: None, scale_range: 4.0 }
    }
}

/// Max absolute row sum of `A` plus max `|B_i|` of the unpenalized problem.
pub fn default_penalty(a: &DenseMatrix, b: &[f64]) -> f64 {
    let row_sum = (0..a.rows()).map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    row_sum + b.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Compiles `(1/k^2) x'cov x - sum_i (mu_i/k)^w x_i + lambda (sum x - k)^2`.
///
/// On `|x| = k` the energy is the legacy CQNS of the selection; elsewhere it
/// is [`crate::scoring::cqns_legacy_at`] with normalization `k` plus the penalty.
pub fn build_cqns_qubo(u: &Universe, spec: &QuboBuildSpec) -> Result<Qubo> {
    let n = u.n();
    let k = spec.target_k;
    if k == 0 || k > n {
        return Err(QuboError::InvalidTargetK { k, n });
    }
    let kf = k as f64;
    let inv_k2 = 1.0 / (kf * kf);
    let cov = u.cov();
    let mut a = DenseMatrix::from_fn(n, n, |i, j| cov[(i, j)] * inv_k2);
    let mut b = Vec::with_capacity(n);
    for (i, &mu) in u.mu().iter().enumerate() {
        let term = real_pow(mu / kf, spec.power).map_err(|_| QuboError::ComplexPowerTerm {
            asset: i,
            mu,
            power: spec.power.value(),
        })?;
        b.push(-term);
    }
    let lambda = match spec.penalty_lambda {
        Some(l) if l >= 0.0 && l.is_finite() => l,
        Some(l) => return Err(QuboError::InvalidModel(format!("penalty lambda {l} must be finite and >= 0"))),
        None => default_penalty(&a, &b),
    };
    if lambda > 0.0 {
        for i in 0..n {
            for v in a.row_mut(i) {
                *v += lambda;
            }
            b[i] -= 2.0 * lambda * kf;
        }
    }
    Qubo::new(a, b, lambda * kf * kf)
}

/// Divides every coefficient (and `K1`) by `s = max_abs / range`, so the
/// largest magnitude becomes exactly `range`. Returns the scaled QUBO and `s`.
pub fn scale_qubo(q: &Qubo, range: f64) -> Result<(Qubo, f64)> {
    if !(range > 0.0 && range.is_finite()) {
        return Err(QuboError::InvalidModel(format!("scale range {range} must be positive")));
    }
    let max = q.max_abs_coefficient();
    if max == 0.0 {
        return Err(QuboError::AllZeroQubo);
    }
    let s = max / range;
    let snap = |v: f64| {
        let r = v / s;
        if v.abs() == max {
            range.copysign(v)
        } else {
            r
        }
    };
    let n = q.n();
    let a = DenseMatrix::from_fn(n, n, |i, j| snap(q.a[(i, j)]));
    let b = q.b.iter().map(|&v| snap(v)).collect();
    Ok((Qubo { a, b, k1: q.k1 / s }, s))
}

/// `J = A/4`, `C = (B + 4 J 1)/2`, diagonal of `J` folded into `K2`, and `K2`
/// fixed by requiring the two energies to agree at `x = 0` (`z = -1`).
pub fn qubo_to_ising(q: &Qubo) -> IsingModel {
    let n = q.n();
    let j_full = q.a.scaled(0.25);
    let c: Vec<f64> = (0..n).map(|i| 0.5 * (q.b[i] + 4.0 * j_full.row(i).iter().sum::<f64>())).collect();
    let mut j = j_full;
    for i in 0..n {
        j[(i, i)] = 0.0;
    }
    let minus_one = vec![-1.0; n];
    let spin_part = j.quadratic_form(&minus_one) - c.iter().sum::<f64>();
    let k2 = q.k1 - spin_part;
    IsingModel { j, c, k2 }
}

/// `x'Ax + B.x + K1` for `x in {0,1}^N`.
pub fn qubo_energy(q: &Qubo, x: &[f64]) -> Result<f64> {
    if x.len() != q.n() {
        return Err(QuboError::DimensionMismatch(format!("vector of length {} for {} variables", x.len(), q.n())));
    }
    if let Some((index, &value)) = x.iter().enumerate().find(|(_, v)| **v != 0.0 && **v != 1.0) {
        return Err(QuboError::InvalidEntry { index, value, domain: "binary" });
    }
    let dot: f64 = q.b.iter().zip(x).map(|(b, x)| b * x).sum();
    Ok(q.a.quadratic_form(x) + dot + q.k1)
}

/// `z'Jz + C.z + K2` for `z in {-1,1}^N`.
pub fn ising_energy(m: &IsingModel, z: &[f64]) -> Result<f64> {
    if z.len() != m.n() {
        return Err(QuboError::DimensionMismatch(format!("vector of length {} for {} spins", z.len(), m.n())));
    }
    if let Some((index, &value)) = z.iter().enumerate().find(|(_, v)| **v != 1.0 && **v != -1.0) {
        return Err(QuboError::InvalidEntry { index, value, domain: "spin" });
    }
    Ok(m.energy_unchecked(z))
}
