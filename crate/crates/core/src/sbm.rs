//! Simulated bifurcation machine (adiabatic variant) for Ising models.
//!
//! Each spin is a Kerr-nonlinear oscillator with position `x_i` and momentum
//! `y_i`. A pressure ramp `p(t)` from 0 to 1 removes the restoring term while
//! the coupling force pushes positions toward a low-energy configuration of
//! `E(z) = z'Jz + C.z`. One iteration with step `eps` is a symplectic Euler
//! update:
//!
//! ```text
//! y_i += eps * ( -(delta - p) x_i - kerr x_i^3 - xi0 (2 (J x)_i + C_i) )
//! x_i += eps * delta * y_i
//! if |x_i| > clamp: x_i = clamp * sign(x_i), y_i = 0
//! ```
//!
//! The field `C` enters the force alongside `J x`; dropping it would make the
//! machine blind to the offset vector produced by the 0/1 to spin change of
//! variables. Spins are read out as `sign(x)` (with `sign(0) = +1`) after
//! every iteration and the lowest-energy readout is kept, earliest first.
//!
//! Worker parallelism: the `J x` product (and the readout's `J s`) is split
//! by rows over the rayon pool when `exec` is `Parallel` and the `parallel`
//! feature is on. Every row is reduced in a fixed order, so results are
//! bit-identical across worker counts and with the sequential path.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parallel::ExecMode;
use crate::qubo::{ising_energy, IsingModel};

#[derive(Debug, Error)]
pub enum SbmError {
    #[error("invalid SBM parameters: {0}")]
    InvalidParams(String),
    #[error("state became non-finite at iteration {iteration}; reduce epsilon")]
    NonFiniteState { iteration: usize },
    #[error("model has no couplings and no fields")]
    DegenerateModel,
}

impl SbmError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::InvalidParams(_) => "InvalidParams",
            Self::NonFiniteState { .. } => "NonFiniteState",
            Self::DegenerateModel => "DegenerateModel",
        }
    }
}

pub type Result<T, E = SbmError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PressureSchedule {
    #[default]
    Linear,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub delta: f64,
    pub kerr: f64,
    /// `None` selects [`default_xi0`].
    pub xi0: Option<f64>,
    pub epsilon: f64,
    pub iterations: usize,
    pub pressure_schedule: PressureSchedule,
    pub clamp_threshold: f64,
    pub seed: u64,
    /// Keep up to 1,000 evenly spaced position snapshots.
    pub record_trajectory: bool,
    pub exec: ExecMode,
}

/// Iteration count used above 64 spins.
pub const LARGE_INSTANCE_ITERATIONS: usize = 10_016;

impl Default for SbmParams {
    fn default() -> Self {
        Self {
            delta: 1.0,
            kerr: 1.0,
            xi0: None,
            epsilon: 0.5,
            iterations: 2_000,
            pressure_schedule: PressureSchedule::Linear,
            clamp_threshold: 1.0,
            seed: 0,
            record_trajectory: false,
            exec: ExecMode::default(),
        }
    }
}

impl SbmParams {
    /// Defaults for an `n`-spin problem: 2,000 iterations up to 64 spins,
    /// 10,016 above.
    pub fn for_size(n: usize) -> Self {
        Self { iterations: if n <= 64 { 2_000 } else { LARGE_INSTANCE_ITERATIONS }, ..Self::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SbmError::InvalidParams(m.to_string()));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be positive");
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad("delta must be positive");
        }
        if !(self.clamp_threshold > 0.0 && self.clamp_threshold.is_finite()) {
            return bad("clamp_threshold must be positive");
        }
        if !self.kerr.is_finite() {
            return bad("kerr must be finite");
        }
        if let Some(xi) = self.xi0 {
            if !(xi > 0.0 && xi.is_finite()) {
                return bad("xi0 must be positive");
            }
        }
        Ok(())
    }
}

/// Pressure at iteration `t` of `params.iterations`, in `[0, 1]`.
pub fn pressure(t: usize, params: &SbmParams) -> f64 {
    let s = (t as f64 / params.iterations as f64).clamp(0.0, 1.0);
    match params.pressure_schedule {
        PressureSchedule::Linear => s,
        PressureSchedule::Logistic => 1.0 / (1.0 + (-12.0 * (s - 0.5)).exp()),
    }
}

/// `xi0 = 0.5 delta / (sigma * sqrt(N) + |m| * (N - 1))` with `sigma` the
/// standard deviation and `m` the mean of the off-diagonal couplings. The
/// denominator estimates the largest coupling eigenvalue; for zero-mean
/// couplings it is `sigma * sqrt(N)`. With no couplings, `delta / (2 max|C|)`.
pub fn default_xi0(model: &IsingModel, params: &SbmParams) -> Result<f64> {
    let n = model.n();
    let j = model.j();
    let count = n * n.saturating_sub(1);
    let off = || (0..n).flat_map(|i| j.row(i).iter().enumerate().filter(move |(k, _)| *k != i).map(|(_, v)| *v));
    let scale = if count > 0 {
        let m = off().sum::<f64>() / count as f64;
        let var = off().map(|v| (v - m) * (v - m)).sum::<f64>() / count as f64;
        var.sqrt() * (n as f64).sqrt() + m.abs() * (n - 1) as f64
    } else {
        0.0
    };
    if scale > 0.0 {
        return Ok(0.5 * params.delta / scale);
    }
    let max_c = model.c().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_c > 0.0 {
        Ok(params.delta / (2.0 * max_c))
    } else {
        Err(SbmError::DegenerateModel)
    }
}

/// Oscillator positions and momenta after `t` iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct SbmState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub t: usize,
}

impl SbmState {
    /// `x = 0`, `y ~ U(-0.1, 0.1)`.
    pub fn initial(n: usize, rng: &mut impl Rng) -> Self {
        Self { x: vec![0.0; n], y: (0..n).map(|_| rng.random_range(-0.1..0.1)).collect(), t: 0 }
    }

    /// One update given `jx = J x` for the current positions.
    pub fn step(&mut self, model: &IsingModel, params: &SbmParams, xi0: f64, jx: &[f64]) {
        self.t += 1;
        let p = pressure(self.t, params);
        let detune = params.delta - p;
        let eps = params.epsilon;
        let clamp = params.clamp_threshold;
        let c = model.c();
        for i in 0..self.x.len() {
            let x = self.x[i];
            let force = -detune * x - params.kerr * x * x * x - xi0 * (2.0 * jx[i] + c[i]);
            self.y[i] += eps * force;
            let nx = x + eps * params.delta * self.y[i];
            if nx.abs() > clamp {
                self.x[i] = clamp.copysign(nx);
                self.y[i] = 0.0;
            } else {
                self.x[i] = nx;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.is_finite())
    }

    /// `sign(x)` with `sign(0) = +1`.
    pub fn spins(&self) -> Vec<i8> {
        self.x.iter().map(|&v| if v < 0.0 { -1 } else { 1 }).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub iteration: usize,
    pub x: Vec<f64>,
    /// Best energy found up to and including this iteration.
    pub best_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmResult {
    pub best_spins: Vec<i8>,
    pub best_energy: f64,
    /// Iteration whose readout produced `best_spins`.
    pub best_iteration: usize,
    pub iterations_run: usize,
    pub xi0_used: f64,
    pub trajectory: Option<Vec<TrajectorySample>>,
}

impl SbmResult {
    /// Spins as floats for energy evaluation.
    pub fn spins_f64(&self) -> Vec<f64> {
        self.best_spins.iter().map(|&s| s as f64).collect()
    }
}

/// Runs the oscillator network and returns the lowest-energy sign readout.
///
/// With `ExecMode::Parallel` the coupling product is split over rows across
/// worker threads. Each row is reduced in a fixed order, so the result is
/// identical for any worker count and for `ExecMode::Sequential`.
pub fn run_sbm(model: &IsingModel, params: &SbmParams) -> Result<SbmResult> {
    params.validate()?;
    let n = model.n();
    if n == 0 {
        return Err(SbmError::DegenerateModel);
    }
    let xi0 = match params.xi0 {
        Some(v) => v,
        None => default_xi0(model, params)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut state = SbmState::initial(n, &mut rng);
    let j = model.j();
    let c = model.c();

    let stride = params.iterations.div_ceil(1000);
    let mut trajectory = params.record_trajectory.then(Vec::new);

    let mut jx = vec![0.0; n];
    let mut js = vec![0.0; n];
    let mut spins_f = vec![0.0; n];
    let mut pending: Option<(Vec<i8>, usize)> = None;
    let mut last_scored: Option<Vec<i8>> = None;
    let mut best: Option<(f64, Vec<i8>, usize)> = None;

    let score = |spins_f: &[f64], js: &[f64]| -> f64 {
        let quad: f64 = spins_f.iter().zip(js).map(|(s, h)| s * h).sum();
        quad + c.iter().zip(spins_f).map(|(c, s)| c * s).sum::<f64>() + model.k2()
    };
    let consider =
        |candidate: (Vec<i8>, usize), js: &[f64], spins_f: &[f64], best: &mut Option<(f64, Vec<i8>, usize)>| {
            let e = score(spins_f, js);
            if best.as_ref().is_none_or(|(b, _, _)| e < *b) {
                *best = Some((e, candidate.0, candidate.1));
            }
        };

    for _ in 0..params.iterations {
        // One pass over J serves both the dynamics and the previous readout.
        match pending.take() {
            Some(cand) if last_scored.as_ref() != Some(&cand.0) => {
                for (f, s) in spins_f.iter_mut().zip(&cand.0) {
                    *f = *s as f64;
                }
                j.matvec2_into(&state.x, &spins_f, &mut jx, &mut js, params.exec);
                last_scored = Some(cand.0.clone());
                consider(cand, &js, &spins_f, &mut best);
            }
            _ => j.matvec_into(&state.x, &mut jx, params.exec),
        }
        state.step(model, params, xi0, &jx);
        if !state.is_finite() {
            return Err(SbmError::NonFiniteState { iteration: state.t });
        }
        pending = Some((state.spins(), state.t));
        if let Some(tr) = trajectory.as_mut() {
            if state.t.is_multiple_of(stride) {
                // The readout at this iteration is scored lazily; score it now
                // so the snapshot carries an up-to-date best.
                if let Some(cand) = pending.take() {
                    if last_scored.as_ref() != Some(&cand.0) {
                        for (f, s) in spins_f.iter_mut().zip(&cand.0) {
                            *f = *s as f64;
                        }
                        js = j.matvec(&spins_f, params.exec);
                        last_scored = Some(cand.0.clone());
                        consider(cand, &js, &spins_f, &mut best);
                    }
                }
                tr.push(TrajectorySample {
                    iteration: state.t,
                    x: state.x.clone(),
                    best_energy: best.as_ref().map_or(f64::INFINITY, |b| b.0),
                });
            }
        }
    }
    if let Some(cand) = pending.take() {
        if last_scored.as_ref() != Some(&cand.0) {
            for (f, s) in spins_f.iter_mut().zip(&cand.0) {
                *f = *s as f64;
            }
            js = j.matvec(&spins_f, params.exec);
            consider(cand, &js, &spins_f, &mut best);
        }
    }

    let (_, best_spins, best_iteration) = best.expect("at least one iteration ran");
    let spins_f: Vec<f64> = best_spins.iter().map(|&s| s as f64).collect();
    let best_energy = ising_energy(model, &spins_f).expect("readout spins are valid");
    Ok(SbmResult { best_spins, best_energy, best_iteration, iterations_run: state.t, xi0_used: xi0, trajectory })
}

/// Writes `iteration,x_0,...,x_{N-1}` rows for the recorded snapshots.
pub fn write_trajectory_csv<W: Write>(samples: &[TrajectorySample], n: usize, mut out: W) -> std::io::Result<()> {
    write!(out, "iteration")?;
    for i in 0..n {
        write!(out, ",x_{i}")?;
    }
    writeln!(out)?;
    for s in samples {
        write!(out, "{}", s.iteration)?;
        for v in &s.x {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::DenseMatrix;

    #[test]
    fn pressure_endpoints() {
        let lin = SbmParams { iterations: 100, ..SbmParams::default() };
        assert_eq!(pressure(0, &lin), 0.0);
        assert_eq!(pressure(100, &lin), 1.0);
        let log = SbmParams { pressure_schedule: PressureSchedule::Logistic, ..lin };
        assert_eq!(pressure(50, &log), 0.5);
        assert!(pressure(0, &log) <= 0.01);
        assert!(pressure(100, &log) >= 0.99);
    }

    #[test]
    fn ferromagnetic_pair() {
        let m = IsingModel::new(DenseMatrix::from_rows(&[[0.0, -1.0], [-1.0, 0.0]]), vec![0.0; 2], 0.0).unwrap();
        let r = run_sbm(&m, &SbmParams::for_size(2)).unwrap();
        assert!(r.best_spins == vec![1, 1] || r.best_spins == vec![-1, -1]);
        assert_eq!(r.best_energy, -2.0);
    }

    #[test]
    fn decoupled_fields() {
        let m = IsingModel::new(DenseMatrix::zeros(2, 2), vec![1.0, -1.0], 0.0).unwrap();
        let r = run_sbm(&m, &SbmParams::for_size(2)).unwrap();
        assert_eq!(r.best_spins, vec![-1, 1]);
        assert_eq!(r.best_energy, -2.0);
    }

    #[test]
    fn degenerate_model_rejected() {
        let m = IsingModel::new(DenseMatrix::zeros(3, 3), vec![0.0; 3], 0.0).unwrap();
        assert!(matches!(default_xi0(&m, &SbmParams::default()), Err(SbmError::DegenerateModel)));
    }

    #[test]
    fn invalid_params_rejected() {
        let m = IsingModel::new(DenseMatrix::zeros(2, 2), vec![1.0, 1.0], 0.0).unwrap();
        for p in [
            SbmParams { epsilon: 0.0, ..SbmParams::default() },
            SbmParams { iterations: 0, ..SbmParams::default() },
            SbmParams { delta: -1.0, ..SbmParams::default() },
            SbmParams { clamp_threshold: 0.0, ..SbmParams::default() },
        ] {
            assert!(matches!(run_sbm(&m, &p), Err(SbmError::InvalidParams(_))));
        }
    }
}
