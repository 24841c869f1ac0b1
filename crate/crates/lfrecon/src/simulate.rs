//! Forward simulation of the noisy consensus dynamics and the follower-only
//! trajectories it produces.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::network::{assemble, DynamicsMatrix, NetworkSpec, DEFAULT_STABILITY_MARGIN};

/// States beyond this magnitude abort the run as diverged.
pub const DIVERGENCE_GUARD: f64 = 1e12;

/// Follower-only time series, stored row-major: one row per time step.
///
/// Only follower states are recorded; leader states are what the
/// reconstruction has to infer, so they never leave the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    data: Vec<f64>,
    n_steps: usize,
    n_followers: usize,
    seed: Option<u64>,
    spec_ref: Option<String>,
}

impl Trajectory {
    /// Wrap row-major data: `data[t * n_followers + i]` is follower `i` at
    /// step `t`. Rejects length mismatches and non-finite values.
    pub fn from_rows(data: Vec<f64>, n_steps: usize, n_followers: usize) -> Result<Self> {
        if n_followers == 0 {
            return Err(Error::Shape("trajectory needs at least one column".into()));
        }
        let expected = n_steps
            .checked_mul(n_followers)
            .ok_or_else(|| Error::Shape("trajectory size overflows".into()))?;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "trajectory data has {} values, expected {n_steps} x {n_followers}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse(format!(
                "non-finite value at step {}, column {}",
                pos / n_followers,
                pos % n_followers
            )));
        }
        Ok(Self {
            data,
            n_steps,
            n_followers,
            seed: None,
            spec_ref: None,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_followers(&self) -> usize {
        self.n_followers
    }

    /// Follower states at step `t`.
    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.n_followers..(t + 1) * self.n_followers]
    }

    pub fn value(&self, t: usize, follower: usize) -> f64 {
        self.data[t * self.n_followers + follower]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_followers)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// RNG seed of the run that produced this series, when known.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Digest of the generating [`NetworkSpec`], when known.
    pub fn spec_ref(&self) -> Option<&str> {
        self.spec_ref.as_deref()
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_spec_ref(mut self, spec_ref: Option<String>) -> Self {
        self.spec_ref = spec_ref;
        self
    }
}

/// Knobs for [`run`].
#[derive(Debug, Clone)]
pub struct RunParams {
    /// Recorded steps, including the first recorded state as row 0.
    pub n_steps: usize,
    /// Leading steps to run and discard before recording starts.
    pub burn_in: usize,
    /// Full initial state (followers then leaders); zeros when absent.
    pub initial_state: Option<Vec<f64>>,
    /// Simulate even when the dynamics is unstable.
    pub force: bool,
    pub stability_margin: f64,
}

impl RunParams {
    pub fn new(n_steps: usize) -> Self {
        Self {
            n_steps,
            burn_in: 0,
            initial_state: None,
            force: false,
            stability_margin: DEFAULT_STABILITY_MARGIN,
        }
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }
}

/// One update of the full state: `x' = A x + [noise; 0]`. Noise enters
/// follower components only; leaders evolve deterministically.
pub fn step(dm: &DynamicsMatrix, state: &DVector<f64>, noise: &[f64]) -> DVector<f64> {
    let mut next = dm.full_matrix() * state;
    for (i, xi) in noise.iter().enumerate() {
        next[i] += xi;
    }
    next
}

/// Simulate a spec: assemble its dynamics and run with its noise amplitudes.
pub fn run(spec: &NetworkSpec, params: &RunParams, seed: u64) -> Result<Trajectory> {
    let dm = assemble(spec);
    let traj = run_dynamics(&dm, spec.noise_std(), params, seed)?;
    Ok(traj.with_spec_ref(Some(spec.digest())))
}

/// Simulate explicit block dynamics driven by independent Gaussian noise
/// on the followers, recording follower states only.
///
/// Refuses unstable systems unless `params.force` is set, and aborts with
/// an error if any state exceeds [`DIVERGENCE_GUARD`].
pub fn run_dynamics(
    dm: &DynamicsMatrix,
    noise_std: &[f64],
    params: &RunParams,
    seed: u64,
) -> Result<Trajectory> {
    let nf = dm.n_followers();
    let n = nf + dm.n_leaders();
    if noise_std.len() != nf {
        return Err(Error::Shape(format!(
            "expected {nf} noise amplitudes, got {}",
            noise_std.len()
        )));
    }
    if noise_std.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::InvalidParameter(
            "noise amplitudes must be finite and nonnegative".into(),
        ));
    }
    if params.n_steps == 0 {
        return Err(Error::InvalidParameter(
            "n_steps must be positive".into(),
        ));
    }
    let rho = dm.spectral_radius();
    if !params.force && rho >= 1.0 - params.stability_margin {
        return Err(Error::Unstable { rho });
    }

    let mut state = match &params.initial_state {
        Some(x0) => {
            if x0.len() != n {
                return Err(Error::Shape(format!(
                    "initial state has {} entries, expected {n}",
                    x0.len()
                )));
            }
            if x0.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(
                    "initial state must be finite".into(),
                ));
            }
            DVector::from_column_slice(x0)
        }
        None => DVector::zeros(n),
    };

    let a = dm.full_matrix();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(params.n_steps * nf);
    let mut next = DVector::zeros(n);

    let mut advance = |state: &mut DVector<f64>,
                       next: &mut DVector<f64>,
                       t: usize|
     -> Result<()> {
        next.gemv(1.0, &a, state, 0.0);
        for i in 0..nf {
            let z: f64 = StandardNormal.sample(&mut rng);
            next[i] += noise_std[i] * z;
        }
        std::mem::swap(state, next);
        for i in 0..nf {
            let v = state[i];
            if !v.is_finite() || v.abs() > DIVERGENCE_GUARD {
                return Err(Error::Diverged { step: t });
            }
        }
        Ok(())
    };

    for t in 1..=params.burn_in {
        advance(&mut state, &mut next, t)?;
    }
    for i in 0..nf {
        data.push(state[i]);
    }
    for t in 1..params.n_steps {
        advance(&mut state, &mut next, params.burn_in + t)?;
        for i in 0..nf {
            data.push(state[i]);
        }
    }

    Ok(Trajectory {
        data,
        n_steps: params.n_steps,
        n_followers: nf,
        seed: Some(seed),
        spec_ref: None,
    })
}

/// Per-follower variance of a trajectory (population normalization).
pub fn follower_variances(traj: &Trajectory) -> Vec<f64> {
    let nf = traj.n_followers();
    let n = traj.n_steps() as f64;
    let mut means = vec![0.0; nf];
    for row in traj.rows() {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= n;
    }
    let mut vars = vec![0.0; nf];
    for row in traj.rows() {
        for ((var, v), m) in vars.iter_mut().zip(row).zip(&means) {
            let d = v - m;
            *var += d * d;
        }
    }
    for var in &mut vars {
        *var /= n;
    }
    vars
}
